"""Drop-and-rescale merging of a fine-tuned parameter map into its base.

The container format is::

    b"MNLUPARM"                    8-byte magic
    u32 little-endian              format version (1)
    u64 little-endian              header length in bytes
    header                         UTF-8 JSON
    payload                        concatenated little-endian float32 arrays

The header is ``{"dtype": "<f4", "checksum": <sha256 of payload>, "entries":
[{"name", "shape", "offset", "length"}, ...]}`` with offsets and lengths in
bytes relative to the payload start. Entries keep their insertion order.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .rng import derive_seed

MAGIC = b"MNLUPARM"
VERSION = 1
DTYPE = np.dtype("<f4")
_PREAMBLE = struct.Struct("<8sIQ")

ParameterMap = dict[str, np.ndarray]


class ParamError(ValueError):
    pass


class CorruptHeader(ParamError):
    pass


class TruncatedPayload(ParamError):
    pass


class ChecksumMismatch(ParamError):
    pass


class ShapeMismatch(ParamError):
    def __init__(self, name: str, base_shape, tuned_shape):
        super().__init__(f"entry {name!r}: base shape {list(base_shape)} != tuned shape {list(tuned_shape)}")
        self.name = name


class NameSetMismatch(ParamError):
    def __init__(self, only_base, only_tuned):
        self.only_base = sorted(only_base)
        self.only_tuned = sorted(only_tuned)
        parts = []
        if self.only_base:
            parts.append(f"only in base: {', '.join(self.only_base)}")
        if self.only_tuned:
            parts.append(f"only in tuned: {', '.join(self.only_tuned)}")
        super().__init__("parameter names differ; " + "; ".join(parts))


@dataclass(frozen=True)
class MergeConfig:
    drop_rate: float
    seed: int = 0
    weight: float = 1.0

    def __post_init__(self) -> None:
        if not (0 <= self.drop_rate < 1):
            raise ValueError(f"drop_rate must lie in [0, 1), got {self.drop_rate}")
        if not (0 < self.weight <= 1):
            raise ValueError(f"weight must lie in (0, 1], got {self.weight}")

    @property
    def scale(self) -> float:
        return self.weight / (1 - self.drop_rate)


def as_param_map(entries: Mapping[str, object]) -> ParameterMap:
    return {name: np.ascontiguousarray(np.asarray(v, dtype=DTYPE)) for name, v in entries.items()}


def check_compatible(base: Mapping[str, np.ndarray], tuned: Mapping[str, np.ndarray]) -> None:
    if set(base) != set(tuned):
        raise NameSetMismatch(set(base) - set(tuned), set(tuned) - set(base))
    for name, t in tuned.items():
        if base[name].shape != t.shape:
            raise ShapeMismatch(name, base[name].shape, t.shape)


def merge_entry(base: np.ndarray, tuned: np.ndarray, cfg: MergeConfig, name: str) -> np.ndarray:
    b = np.asarray(base, dtype=DTYPE)
    t = np.asarray(tuned, dtype=DTYPE)
    delta = t.astype(np.float64) - b.astype(np.float64)
    scale = cfg.scale
    if cfg.drop_rate > 0:
        rng = np.random.default_rng(derive_seed("dare", cfg.seed, name))
        keep = rng.random(delta.shape) >= cfg.drop_rate
    else:
        keep = np.ones(delta.shape, dtype=bool)
    if scale == 1.0:
        # survivors are the tuned values themselves; skipping the round trip
        # through base + delta keeps them bit-exact
        return np.where(keep, t, b).astype(DTYPE)
    merged = b.astype(np.float64) + scale * np.where(keep, delta, 0.0)
    return np.where(keep, merged, b).astype(DTYPE)


def dare_merge(base: Mapping[str, np.ndarray], tuned: Mapping[str, np.ndarray], cfg: MergeConfig) -> ParameterMap:
    """Merge ``tuned`` into ``base``; the result follows ``tuned``'s entry order.

    Each delta element is dropped independently with probability
    ``cfg.drop_rate``; survivors are scaled by ``weight / (1 - drop_rate)``.
    Randomness is drawn per entry from a seed derived from ``(cfg.seed, name)``,
    so the result does not depend on the order entries are processed in.
    """
    check_compatible(base, tuned)
    return {name: merge_entry(base[name], t, cfg, name) for name, t in tuned.items()}


def encode_params(params: Mapping[str, np.ndarray]) -> bytes:
    entries = []
    chunks = []
    offset = 0
    for name, arr in params.items():
        data = np.ascontiguousarray(np.asarray(arr, dtype=DTYPE)).tobytes()
        entries.append({"name": name, "shape": list(np.shape(arr)), "offset": offset, "length": len(data)})
        chunks.append(data)
        offset += len(data)
    payload = b"".join(chunks)
    header = {"dtype": DTYPE.str, "checksum": hashlib.sha256(payload).hexdigest(), "entries": entries}
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _PREAMBLE.pack(MAGIC, VERSION, len(hbytes)) + hbytes + payload


def decode_params(blob: bytes) -> ParameterMap:
    if len(blob) < _PREAMBLE.size:
        raise CorruptHeader("file shorter than the fixed preamble")
    magic, version, hlen = _PREAMBLE.unpack_from(blob)
    if magic != MAGIC:
        raise CorruptHeader(f"bad magic {magic!r}")
    if version != VERSION:
        raise CorruptHeader(f"unsupported version {version}")
    start = _PREAMBLE.size
    if start + hlen > len(blob):
        raise CorruptHeader("header length runs past end of file")
    try:
        header = json.loads(blob[start : start + hlen].decode("utf-8"))
        entries = header["entries"]
        checksum = header["checksum"]
        dtype = header["dtype"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CorruptHeader(f"unreadable header: {exc}") from None
    if dtype != DTYPE.str:
        raise CorruptHeader(f"unsupported dtype {dtype!r}")

    expected = 0
    names = set()
    for e in entries:
        try:
            name, shape, offset, length = e["name"], e["shape"], e["offset"], e["length"]
        except (KeyError, TypeError):
            raise CorruptHeader(f"malformed entry {e!r}") from None
        if name in names:
            raise CorruptHeader(f"duplicate entry {name!r}")
        names.add(name)
        if not all(isinstance(d, int) and d >= 0 for d in shape):
            raise CorruptHeader(f"entry {name!r}: invalid shape {shape!r}")
        if length != math.prod(shape) * DTYPE.itemsize:
            raise CorruptHeader(f"entry {name!r}: shape {shape} does not match payload length {length}")
        if offset != expected:
            raise CorruptHeader(f"entry {name!r}: offset {offset} leaves a gap or overlap")
        expected += length

    payload = blob[start + hlen :]
    if len(payload) < expected:
        raise TruncatedPayload(f"payload holds {len(payload)} bytes, header expects {expected}")
    if len(payload) > expected:
        raise CorruptHeader(f"{len(payload) - expected} trailing bytes after the payload")
    if hashlib.sha256(payload).hexdigest() != checksum:
        raise ChecksumMismatch("payload checksum does not match header")
    out: ParameterMap = {}
    for e in entries:
        raw = payload[e["offset"] : e["offset"] + e["length"]]
        out[e["name"]] = np.frombuffer(raw, dtype=DTYPE).reshape(e["shape"]).copy()
    return out


def save_params(params: Mapping[str, np.ndarray], path: str | Path) -> None:
    Path(path).write_bytes(encode_params(params))


def load_params(path: str | Path) -> ParameterMap:
    return decode_params(Path(path).read_bytes())
