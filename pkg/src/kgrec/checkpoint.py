"""Binary checkpoint files with a JSON manifest sidecar.

Layout (little-endian)::

    magic   4s   b"KGRC"
    version u32
    kind    u8   index into KIND_CODES
    dim     u32
    n_ent   u64
    n_rel   u64
    flags   u8   bit0: second entity table present

followed by float32 row-major tables: entity, optional second entity table,
relation (absent for MF, which has no relation table).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from kgrec.io import atomic_write_bytes, atomic_write_text
from kgrec.models import EmbeddingModel

MAGIC = b"KGRC"
VERSION = 1
KIND_CODES = ("TransE", "DistMult", "CP", "ComplEx", "MF")
HEADER = struct.Struct("<4sIBIQQB")
HEADER_SIZE = HEADER.size  # 30
FLAG_SECOND_ENTITY = 1


class CheckpointError(Exception):
    code = 10


class BadMagicError(CheckpointError):
    code = 11


class UnsupportedVersionError(CheckpointError):
    code = 12


class PayloadLengthError(CheckpointError):
    code = 13


def manifest_path(path: str | Path) -> Path:
    return Path(str(path) + ".json")


def encode_checkpoint(model: EmbeddingModel) -> bytes:
    kind = KIND_CODES.index(model.kind)
    n_rel = model.num_relations
    flags = FLAG_SECOND_ENTITY if model.entity_obj is not None else 0
    parts = [HEADER.pack(MAGIC, VERSION, kind, model.dim, model.num_entities, n_rel, flags)]
    for table in (model.entity, model.entity_obj, model.relation):
        if table is not None:
            parts.append(np.ascontiguousarray(table, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_checkpoint(data: bytes, source: str = "<bytes>") -> EmbeddingModel:
    if len(data) < HEADER_SIZE:
        if data[:4] != MAGIC[: len(data[:4])]:
            raise BadMagicError(f"{source}: bad magic {data[:4]!r}")
        raise PayloadLengthError(f"{source}: payload length mismatch (file shorter than header)")
    magic, version, kind, dim, n_ent, n_rel, flags = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagicError(f"{source}: bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersionError(f"{source}: unsupported version {version}")
    if kind >= len(KIND_CODES):
        raise CheckpointError(f"{source}: unknown model kind code {kind}")
    kind_name = KIND_CODES[kind]
    width = 2 * dim if kind_name == "ComplEx" else dim
    shapes = [("entity", n_ent)]
    if flags & FLAG_SECOND_ENTITY:
        shapes.append(("entity_obj", n_ent))
    if kind_name != "MF":
        shapes.append(("relation", n_rel))
    expected = HEADER_SIZE + 4 * width * sum(rows for _, rows in shapes)
    if len(data) != expected:
        raise PayloadLengthError(
            f"{source}: payload length mismatch (expected {expected} bytes, found {len(data)})"
        )
    tables = {}
    offset = HEADER_SIZE
    for name, rows in shapes:
        count = rows * width
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        tables[name] = arr.astype(np.float64).reshape(rows, width)
        offset += 4 * count
    try:
        return EmbeddingModel(
            kind=kind_name,
            dim=dim,
            num_relations=n_rel,
            entity=tables["entity"],
            relation=tables.get("relation"),
            entity_obj=tables.get("entity_obj"),
        )
    except ValueError as e:
        raise CheckpointError(f"{source}: {e}") from None


def save_checkpoint(model: EmbeddingModel, manifest: dict | None, path: str | Path) -> None:
    """Write the binary checkpoint and its ``<path>.json`` manifest atomically."""
    path = Path(path)
    try:
        atomic_write_bytes(path, encode_checkpoint(model))
        text = json.dumps(manifest or {}, sort_keys=True, indent=1) + "\n"
        atomic_write_text(manifest_path(path), text)
    except OSError as e:
        raise OSError(f"cannot write checkpoint {path}: {e.strerror or e}") from e


def load_checkpoint(path: str | Path) -> tuple[EmbeddingModel, dict]:
    path = Path(path)
    model = decode_checkpoint(path.read_bytes(), str(path))
    mpath = manifest_path(path)
    manifest = json.loads(mpath.read_text(encoding="utf-8")) if mpath.exists() else {}
    return model, manifest
