"""Checkpoint container, backbone fingerprinting, and per-language adapter merging.

On-disk layout (all integers little-endian)::

    b"LDAC"  int32 version
    uint32 n_meta    n_meta x (uint32 length, UTF-8 "key=value")
    uint32 n_tensor  n_tensor x (uint32 length, UTF-8 name, int32 rank, rank x int64 dim)
    float32 payloads, concatenated in directory order

The fingerprint is 64-bit FNV-1a over the raw bytes of every non-adapter
tensor, visited in sorted name order. Adapter-only training leaves it
unchanged; any change to the encoder, prediction or joint network alters it.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .config import RunConfig
from .errors import (BadMagicError, CheckpointError, ConfigError, LanguageRangeError, MergeError,
                     TruncatedCheckpointError, VersionMismatchError)
from .lda import ADAPTER_TENSORS
from .model import TransducerModel, is_adapter, is_adapter_slice

MAGIC = b"LDAC"
FORMAT_VERSION = 1
FNV_OFFSET = np.uint64(0xCBF29CE484222325)
FNV_PRIME = np.uint64(0x100000001B3)


@numba.njit(cache=True)
def _fnv1a(data, state, prime):
    for byte in data:
        state ^= np.uint64(byte)
        state *= prime
    return state


def fingerprint(tensors):
    """Hex FNV-1a-64 digest over the non-adapter tensors of ``{name: array}``."""
    state = FNV_OFFSET
    for name in sorted(tensors):
        if is_adapter(name):
            continue
        raw = np.ascontiguousarray(tensors[name], dtype="<f4").view(np.uint8).reshape(-1)
        state = np.uint64(_fnv1a(raw, state, FNV_PRIME))
    return f"{int(state):016x}"


@dataclass
class Checkpoint:
    config: RunConfig
    tensors: dict                       # name -> float32 array
    step: int = 0
    metadata: dict = field(default_factory=dict)
    source: str = "<memory>"

    @classmethod
    def from_model(cls, model, step=0, source="<memory>", **metadata):
        tensors = {k: np.array(v, dtype=np.float32) for k, v in model.arrays().items()}
        return cls(model.config, tensors, int(step), {k: str(v) for k, v in metadata.items()}, source)

    def to_model(self):
        return TransducerModel(self.config, {k: v.copy() for k, v in self.tensors.items()})

    @property
    def fingerprint(self):
        return fingerprint(self.tensors)

    def copy(self):
        return Checkpoint(self.config, {k: v.copy() for k, v in self.tensors.items()}, self.step,
                          dict(self.metadata), self.source)


# -- serialization ------------------------------------------------------------------


def _put_string(buf, text):
    raw = text.encode("utf-8")
    buf.write(struct.pack("<I", len(raw)))
    buf.write(raw)


def to_bytes(ckpt):
    meta = {"step": str(ckpt.step), "config_digest": ckpt.config.digest(),
            "fingerprint": ckpt.fingerprint}
    meta.update(ckpt.metadata)
    lines = [f"{k}={v}" for k, v in meta.items()]
    lines += [f"config.{line}" for line in ckpt.config.to_text().splitlines()]
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<i", FORMAT_VERSION))
    buf.write(struct.pack("<I", len(lines)))
    for line in lines:
        _put_string(buf, line)
    names = sorted(ckpt.tensors)
    buf.write(struct.pack("<I", len(names)))
    for name in names:
        arr = ckpt.tensors[name]
        _put_string(buf, name)
        buf.write(struct.pack("<i", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}q", *arr.shape))
    for name in names:
        buf.write(np.ascontiguousarray(ckpt.tensors[name], dtype="<f4").tobytes())
    return buf.getvalue()


class _Reader:
    def __init__(self, data, source):
        self.data, self.pos, self.source = data, 0, source

    def take(self, n):
        if self.pos + n > len(self.data):
            raise TruncatedCheckpointError(f"{self.source}: truncated at byte {self.pos} (wanted {n} more)")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self):
        (n,) = self.unpack("<I")
        return self.take(n).decode("utf-8")


def from_bytes(data, source="<bytes>"):
    reader = _Reader(data, source)
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"{source}: not a checkpoint (bad magic {data[:4]!r})")
    reader.take(4)
    (version,) = reader.unpack("<i")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{source}: format version {version}, expected {FORMAT_VERSION}")
    (n_meta,) = reader.unpack("<I")
    meta, config_lines = {}, []
    for _ in range(n_meta):
        key, _, value = reader.string().partition("=")
        if key.startswith("config."):
            config_lines.append(f"{key[len('config.'):]}={value}")
        else:
            meta[key] = value
    (n_tensor,) = reader.unpack("<I")
    directory = []
    for _ in range(n_tensor):
        name = reader.string()
        (rank,) = reader.unpack("<i")
        shape = reader.unpack(f"<{rank}q") if rank else ()
        directory.append((name, tuple(shape)))
    tensors = {}
    for name, shape in directory:
        count = int(np.prod(shape)) if shape else 1
        tensors[name] = np.frombuffer(reader.take(4 * count), dtype="<f4").astype(np.float32).reshape(shape)
    if reader.pos != len(data):
        raise CheckpointError(f"{source}: {len(data) - reader.pos} trailing bytes")
    config = RunConfig.from_text("\n".join(config_lines))
    step = int(meta.pop("step", 0))
    stored_fp = meta.pop("fingerprint", None)
    meta.pop("config_digest", None)
    ckpt = Checkpoint(config, tensors, step, meta, source)
    if stored_fp is not None and stored_fp != ckpt.fingerprint:
        raise CheckpointError(f"{source}: stored fingerprint {stored_fp} does not match contents")
    return ckpt


def save_checkpoint(ckpt, path):
    if isinstance(ckpt, TransducerModel):
        ckpt = Checkpoint.from_model(ckpt)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(to_bytes(ckpt))
    return path


def load_checkpoint(path):
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    return from_bytes(data, str(path))


def save_optimizer_state(state, path):
    """Moments and EMA shadow go next to the checkpoint, never into it."""
    arrays = {"step": np.array(state.step)}
    for prefix, table in (("m", state.first_moment), ("v", state.second_moment), ("ema", state.ema_shadow or {})):
        for name, arr in table.items():
            arrays[f"{prefix}:{name}"] = arr
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_optimizer_state(path, state):
    with np.load(path) as data:
        state.step = int(data["step"])
        for key in data.files:
            prefix, _, name = key.partition(":")
            if prefix == "m":
                state.first_moment[name] = data[key].copy()
            elif prefix == "v":
                state.second_moment[name] = data[key].copy()
            elif prefix == "ema":
                state.ema_shadow[name] = data[key].copy()
    return state


# -- adapter slices ---------------------------------------------------------------------


@dataclass
class AdapterSlice:
    language_id: int
    tensors: dict          # adapter tensor name -> this language's rows
    source_step: int = 0

    @property
    def size(self):
        return int(sum(v.size for v in self.tensors.values()))


def _rows(name, language_id, config):
    kind = name.rsplit("/", 1)[1]
    d, h = config.model_dim, config.adapter_hidden
    span = {"D": d, "U": h, "D_b": 1, "U_b": 1}[kind]
    return slice(language_id * span, (language_id + 1) * span)


def _check_language(config, language_id):
    if not 0 <= language_id < config.num_languages:
        raise LanguageRangeError(f"language {language_id} outside [0, {config.num_languages})")


def extract_adapter(ckpt, language_id):
    _check_language(ckpt.config, language_id)
    tensors = {name: arr[_rows(name, language_id, ckpt.config)].copy()
               for name, arr in ckpt.tensors.items() if is_adapter_slice(name)}
    return AdapterSlice(language_id, tensors, ckpt.step)


def insert_adapter(ckpt, adapter):
    """Copy of ``ckpt`` with ``adapter``'s rows written into the stacked tensors."""
    _check_language(ckpt.config, adapter.language_id)
    out = ckpt.copy()
    for name, rows in adapter.tensors.items():
        if name not in out.tensors:
            raise ConfigError(f"checkpoint has no adapter tensor {name!r}")
        target = out.tensors[name][_rows(name, adapter.language_id, ckpt.config)]
        if target.shape != rows.shape:
            raise ConfigError(f"slice {name} has shape {rows.shape}, expected {target.shape}")
        out.tensors[name][_rows(name, adapter.language_id, ckpt.config)] = rows
    return out


def merge_adapters(assignments, base):
    """Base backbone plus, per assigned language, the slices of that language's checkpoint."""
    seen = set()
    base_fp = base.fingerprint
    merged = base.copy()
    sources = []
    for language_id, ckpt in assignments:
        if language_id in seen:
            raise ConfigError(f"language {language_id} assigned more than once")
        seen.add(language_id)
        if ckpt.fingerprint != base_fp:
            raise MergeError(f"checkpoint {ckpt.source} has backbone fingerprint {ckpt.fingerprint}, "
                             f"base has {base_fp}")
        merged = insert_adapter(merged, extract_adapter(ckpt, language_id))
        sources.append(f"{language_id}:{ckpt.step}")
    if sources:
        merged.metadata["merged_from"] = ",".join(sources)
    merged.source = "<merged>"
    return merged


def zero_adapter(ckpt, language_id):
    """Zero one language's rows of D, U, D_b and U_b, skipping its adapters entirely."""
    model_in = isinstance(ckpt, TransducerModel)
    if model_in:
        ckpt = Checkpoint.from_model(ckpt)
    zeros = AdapterSlice(language_id, {k: np.zeros_like(v) for k, v in
                                       extract_adapter(ckpt, language_id).tensors.items()})
    out = insert_adapter(ckpt, zeros)
    return out.to_model() if model_in else out


__all__ = [
    "ADAPTER_TENSORS", "AdapterSlice", "Checkpoint", "FORMAT_VERSION", "MAGIC", "extract_adapter",
    "fingerprint", "from_bytes", "insert_adapter", "load_checkpoint", "load_optimizer_state",
    "merge_adapters", "save_checkpoint", "save_optimizer_state", "to_bytes", "zero_adapter",
]
