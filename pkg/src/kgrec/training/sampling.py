"""Negative samplers: triple corruption and per-user negative items."""

from __future__ import annotations

import numpy as np


def _replace(orig, lo, hi, rng, shape):
    """Uniform draw from ``[lo, hi)`` excluding ``orig`` (broadcast over ``shape``)."""
    r = rng.integers(0, hi - lo - 1, size=shape)
    local = orig - lo
    return lo + r + (r >= local)


def corrupt_batch(
    triples,
    num_negatives: int,
    rng: np.random.Generator,
    num_entities: int,
    num_users: int | None = None,
    side: str = "both",
) -> np.ndarray:
    """Corrupt each triple ``num_negatives`` times; returns ``(n, k, 3)``.

    Each corruption replaces either the subject or the object, chosen
    uniformly, with a different entity drawn uniformly (with replacement
    across corruptions). When ``num_users`` is given the graph is typed:
    subjects are replaced by users ``[0, num_users)`` and objects by items
    ``[num_users, num_entities)``. A side with fewer than two entities cannot
    be corrupted; with ``side="both"`` the other side is used instead.
    """
    if num_negatives < 1:
        raise ValueError("num_negatives must be >= 1")
    triples = np.atleast_2d(np.asarray(triples, dtype=np.int64))
    n, k = len(triples), num_negatives
    if num_users is None:
        s_lo, s_hi, o_lo, o_hi = 0, num_entities, 0, num_entities
    else:
        s_lo, s_hi, o_lo, o_hi = 0, num_users, num_users, num_entities
    s_ok, o_ok = s_hi - s_lo >= 2, o_hi - o_lo >= 2

    if side == "subject":
        if not s_ok:
            raise ValueError("subject side has fewer than 2 entities to corrupt with")
        use_subject = np.ones((n, k), dtype=bool)
    elif side == "object":
        if not o_ok:
            raise ValueError("object side has fewer than 2 entities to corrupt with")
        use_subject = np.zeros((n, k), dtype=bool)
    elif side == "both":
        if s_ok and o_ok:
            use_subject = rng.random((n, k)) < 0.5
        elif s_ok or o_ok:
            use_subject = np.full((n, k), s_ok)
        else:
            raise ValueError("neither side has 2 or more entities to corrupt with")
    else:
        raise ValueError(f"side must be 'both', 'subject' or 'object', not {side!r}")

    out = np.repeat(triples[:, None, :], k, axis=1)
    if use_subject.any():
        new_s = _replace(triples[:, 0:1], s_lo, s_hi, rng, (n, k))
        out[..., 0] = np.where(use_subject, new_s, out[..., 0])
    if (~use_subject).any():
        new_o = _replace(triples[:, 2:3], o_lo, o_hi, rng, (n, k))
        out[..., 2] = np.where(use_subject, out[..., 2], new_o)
    return out


def sample_corruptions(
    triple,
    num_entities: int,
    num_negatives: int,
    rng: np.random.Generator,
    num_users: int | None = None,
    side: str = "both",
) -> np.ndarray:
    """Corruptions of a single triple, as a ``(num_negatives, 3)`` array."""
    return corrupt_batch([triple], num_negatives, rng, num_entities, num_users, side)[0]


class PositiveIndex:
    """Membership test for ``(user, item)`` training positives (local item ids)."""

    def __init__(self, user_items: list[np.ndarray] | tuple, num_items: int):
        self.num_items = num_items
        self.counts = np.array([len(x) for x in user_items], dtype=np.int64)
        keys = [u * num_items + np.asarray(items, dtype=np.int64) for u, items in enumerate(user_items)]
        self.keys = np.sort(np.concatenate(keys)) if keys else np.empty(0, np.int64)

    def contains(self, users, items) -> np.ndarray:
        q = np.asarray(users, dtype=np.int64) * self.num_items + np.asarray(items, dtype=np.int64)
        if len(self.keys) == 0:
            return np.zeros(q.shape, dtype=bool)
        idx = np.searchsorted(self.keys, q)
        idx = np.minimum(idx, len(self.keys) - 1)
        return self.keys[idx] == q

    def sample_negatives(self, users, k: int, rng: np.random.Generator, max_rounds: int = 1000) -> np.ndarray:
        """``(len(users), k)`` local item ids the user has not interacted with."""
        users = np.asarray(users, dtype=np.int64)
        if np.any(self.counts[users] >= self.num_items):
            raise ValueError("a user has interacted with every item; no negatives to sample")
        out = rng.integers(0, self.num_items, size=(len(users), k))
        uu = np.broadcast_to(users[:, None], out.shape)
        bad = self.contains(uu, out)
        rounds = 0
        while bad.any():
            rounds += 1
            if rounds > max_rounds:
                raise RuntimeError("negative sampling did not converge")
            out[bad] = rng.integers(0, self.num_items, size=int(bad.sum()))
            bad = self.contains(uu, out)
        return out
