"""Binary checkpoint container.

Layout (little-endian): ``b"EASE"``, u32 format version, u64 manifest
length, UTF-8 JSON manifest, then the raw tensor payloads in manifest order.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..diffcore import RngState

MAGIC = b"EASE"
FORMAT_VERSION = 1
_DTYPES = {"float64": "<f8", "float32": "<f4"}


class CheckpointError(Exception):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class ShapeMismatchError(CheckpointError):
    def __init__(self, name: str, expected, found):
        super().__init__(f"tensor {name!r}: expected shape {tuple(expected)}, checkpoint has {tuple(found)}")
        self.name = name


@dataclass
class Checkpoint:
    config: dict
    vocab: list[str]
    params: dict[str, np.ndarray]
    moments: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)
    step: int = 0
    adam_t: int = 0
    rng: RngState = field(default_factory=lambda: RngState(0))
    format_version: int = FORMAT_VERSION

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        out = [(f"param/{n}", a) for n, a in self.params.items()]
        for kind in sorted(self.moments):
            out.extend((f"{kind}/{n}", a) for n, a in self.moments[kind].items())
        return out


def encode_checkpoint(ckpt: Checkpoint, dtype: str = "float64") -> bytes:
    if dtype not in _DTYPES:
        raise ValueError(f"dtype must be one of {sorted(_DTYPES)}")
    entries, payloads = [], []
    for name, arr in ckpt.tensors():
        buf = np.ascontiguousarray(arr, dtype=_DTYPES[dtype]).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": dtype, "nbytes": len(buf)})
        payloads.append(buf)
    manifest = {
        "config": ckpt.config,
        "vocab": ckpt.vocab,
        "step": ckpt.step,
        "adam_t": ckpt.adam_t,
        "rng": ckpt.rng.to_dict(),
        "tensors": entries,
    }
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return b"".join([MAGIC, struct.pack("<IQ", ckpt.format_version, len(blob)), blob, *payloads])


def save_checkpoint(ckpt: Checkpoint, path: str | Path, dtype: str = "float64") -> None:
    """Write atomically: temp file in the target directory, then rename."""
    data = encode_checkpoint(ckpt, dtype)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def decode_checkpoint(data: bytes, expected_shapes: dict[str, tuple] | None = None) -> Checkpoint:
    if len(data) < 16:
        raise TruncatedCheckpointError(f"file holds {len(data)} bytes, header needs 16")
    if data[:4] != MAGIC:
        raise CorruptCheckpointError("bad magic bytes")
    version, mlen = struct.unpack("<IQ", data[4:16])
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"format version {version}, this build reads {FORMAT_VERSION}")
    if 16 + mlen > len(data):
        raise TruncatedCheckpointError(f"manifest length {mlen} runs past end of file ({len(data)} bytes)")
    try:
        manifest = json.loads(data[16 : 16 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpointError(f"unreadable manifest: {exc}") from None
    offset = 16 + mlen
    arrays: dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        name, shape, dtype, nbytes = entry["name"], tuple(entry["shape"]), entry["dtype"], entry["nbytes"]
        if dtype not in _DTYPES:
            raise CorruptCheckpointError(f"tensor {name!r}: unknown dtype {dtype!r}")
        if int(np.prod(shape, dtype=np.int64)) * np.dtype(_DTYPES[dtype]).itemsize != nbytes:
            raise CorruptCheckpointError(f"tensor {name!r}: byte count does not match shape {shape}")
        if offset + nbytes > len(data):
            raise TruncatedCheckpointError(f"tensor {name!r} payload runs past end of file")
        arr = np.frombuffer(data, dtype=_DTYPES[dtype], count=nbytes // np.dtype(_DTYPES[dtype]).itemsize,
                            offset=offset).reshape(shape)
        arrays[name] = arr.astype(np.float64)
        offset += nbytes
    if offset != len(data):
        raise CorruptCheckpointError(f"{len(data) - offset} trailing bytes after the last tensor")

    params = {n[len("param/"):]: a for n, a in arrays.items() if n.startswith("param/")}
    if expected_shapes is not None:
        for name, shape in expected_shapes.items():
            if name not in params:
                raise ShapeMismatchError(name, shape, ())
            if params[name].shape != tuple(shape):
                raise ShapeMismatchError(name, shape, params[name].shape)
    moments: dict[str, dict[str, np.ndarray]] = {}
    for n, a in arrays.items():
        kind, _, pname = n.partition("/")
        if kind != "param":
            moments.setdefault(kind, {})[pname] = a
    return Checkpoint(
        config=manifest["config"], vocab=manifest["vocab"], params=params, moments=moments,
        step=int(manifest["step"]), adam_t=int(manifest.get("adam_t", 0)),
        rng=RngState.from_dict(manifest["rng"]), format_version=version,
    )


def load_checkpoint(path: str | Path, expected_shapes: dict[str, tuple] | None = None) -> Checkpoint:
    """Read and validate a checkpoint; nothing is returned unless every check passes."""
    with open(path, "rb") as fh:
        data = fh.read()
    return decode_checkpoint(data, expected_shapes)
