"""Single-file binary checkpoints.

Layout::

    b"HOUSEKG1"
    uint64 little-endian  length of the metadata block
    UTF-8 JSON metadata   (sorted keys, no timestamps)
    float64 little-endian payload: entity table, then every relation's
                          rotation vectors, head axes, head scalars, tail
                          axes, tail scalars and translation (if present)

The payload size follows exactly from the metadata, so truncation and
tampered shapes are detected before any array is built.
"""

import hashlib
import json
import struct
import warnings

import numpy as np

from .model import RELATION_PARAMS, HousEModel, ModelConfig, Variant

MAGIC = b"HOUSEKG1"
FORMAT_VERSION = 1
_LEN = struct.Struct("<Q")
_DTYPE = np.dtype("<f8")


class CheckpointError(ValueError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedPayloadError(CheckpointError):
    pass


class DigestMismatchError(CheckpointError):
    pass


class VariantMismatchError(CheckpointError):
    pass


class DigestMismatchWarning(UserWarning):
    pass


def _relation_shapes(c: ModelConfig):
    R, d, k, m = c.num_relations, c.d, c.k, c.m
    shapes = [("rotation", (d, 2 * c.n, k))]
    if c.variant.has_projection and m > 0:
        shapes += [("head_axes", (d, m, k)), ("head_taus", (d, m)),
                   ("tail_axes", (d, m, k)), ("tail_taus", (d, m))]
    if c.variant.has_translation:
        shapes.append(("translation", (d, k)))
    return R, shapes


def payload_floats(c: ModelConfig) -> int:
    R, shapes = _relation_shapes(c)
    return c.num_entities * c.d * c.k + R * sum(int(np.prod(s)) for _, s in shapes)


def metadata(model: HousEModel, vocab_digest: str = "") -> dict:
    c = model.config
    return {
        "format_version": FORMAT_VERSION,
        "variant": c.variant.value,
        "d": c.d, "k": c.k, "m": c.m, "n": c.n,
        "num_entities": c.num_entities,
        "num_relations": c.num_relations,
        "seed": c.seed,
        "vocab_digest": vocab_digest,
    }


def to_bytes(model: HousEModel, vocab_digest: str = "") -> bytes:
    meta = json.dumps(metadata(model, vocab_digest), sort_keys=True).encode("utf-8")
    R, shapes = _relation_shapes(model.config)
    # relation-major: all tables of relation 0, then relation 1, ...
    rel = np.concatenate(
        [getattr(model, name).reshape(R, -1) for name, _ in shapes], axis=1) if R else np.zeros(0)
    parts = [MAGIC, _LEN.pack(len(meta)), meta,
             np.ascontiguousarray(model.entity, dtype=_DTYPE).tobytes(),
             np.ascontiguousarray(rel, dtype=_DTYPE).tobytes()]
    return b"".join(parts)


def save_checkpoint(model: HousEModel, path, vocab_digest: str = ""):
    with open(path, "wb") as fh:
        fh.write(to_bytes(model, vocab_digest))


def _parse_header(blob: bytes):
    if len(blob) < len(MAGIC) + _LEN.size or blob[:len(MAGIC)] != MAGIC:
        raise VersionMismatchError("not a checkpoint file (bad magic bytes)")
    (n_meta,) = _LEN.unpack_from(blob, len(MAGIC))
    start = len(MAGIC) + _LEN.size
    if start + n_meta > len(blob):
        raise TruncatedPayloadError("metadata block is truncated")
    try:
        meta = json.loads(blob[start:start + n_meta].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable metadata: {exc}") from exc
    if meta.get("format_version") != FORMAT_VERSION:
        raise VersionMismatchError(
            f"checkpoint format {meta.get('format_version')!r}, expected {FORMAT_VERSION}")
    return meta, start + n_meta


def read_metadata(path) -> dict:
    with open(path, "rb") as fh:
        return _parse_header(fh.read())[0]


def from_bytes(blob: bytes, expect_variant=None, expect_digest=None, strict_digest=False):
    """Rebuild a model from checkpoint bytes.

    ``expect_variant`` rejects a checkpoint of another model family.  A
    differing ``expect_digest`` warns, or raises when ``strict_digest``.
    """
    meta, offset = _parse_header(blob)
    try:
        config = ModelConfig(Variant(meta["variant"]), int(meta["d"]), int(meta["k"]),
                             int(meta["m"]), int(meta["num_entities"]),
                             int(meta["num_relations"]), int(meta["seed"]))
    except (KeyError, ValueError, TypeError) as exc:
        raise CheckpointError(f"invalid checkpoint metadata: {exc}") from exc
    if int(meta.get("n", config.n)) != config.n or config.m != int(meta["m"]):
        raise CheckpointError("inconsistent checkpoint metadata")
    if expect_variant is not None and Variant(expect_variant) is not config.variant:
        raise VariantMismatchError(
            f"checkpoint holds a {config.variant.value} model, expected {Variant(expect_variant).value}")
    if expect_digest is not None and meta.get("vocab_digest") != expect_digest:
        msg = "checkpoint vocabulary digest does not match the dataset"
        if strict_digest:
            raise DigestMismatchError(msg)
        warnings.warn(msg, DigestMismatchWarning, stacklevel=2)

    n_floats = payload_floats(config)
    available = len(blob) - offset
    if available != n_floats * _DTYPE.itemsize:
        raise TruncatedPayloadError(
            f"payload has {available} bytes, header implies {n_floats * _DTYPE.itemsize}")
    flat = np.frombuffer(blob, dtype=_DTYPE, offset=offset).astype(np.float64)
    c = config
    n_ent = c.num_entities * c.d * c.k
    entity = flat[:n_ent].reshape(c.num_entities, c.d, c.k).copy()
    R, shapes = _relation_shapes(c)
    rel = flat[n_ent:].reshape(R, -1)
    tables, col = {}, 0
    for name, shape in shapes:
        width = int(np.prod(shape))
        tables[name] = rel[:, col:col + width].reshape((R,) + shape).copy()
        col += width
    assert set(tables) <= set(RELATION_PARAMS)
    return HousEModel(config, entity, **tables), meta


def load_checkpoint(path, expect_variant=None, expect_digest=None, strict_digest=False):
    with open(path, "rb") as fh:
        blob = fh.read()
    return from_bytes(blob, expect_variant, expect_digest, strict_digest)


def file_digest(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()
