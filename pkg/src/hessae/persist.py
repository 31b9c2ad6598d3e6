"""Versioned binary model files.

Layout::

    MAGIC (8 bytes) | format version (u32) | header length (u64) | header JSON
    | array bytes ... | sha256 (32 bytes)

The header holds the object tree (dataclasses, lists, scalars, with arrays
replaced by references into the byte section), the config snapshot, the master
seed and a creation timestamp. The checksum covers the version, the header
without its timestamp, and the array bytes, so two saves of the same model
differ only in the timestamp field.
"""
from __future__ import annotations

import dataclasses
import datetime
import hashlib
import importlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"HESSAEMF"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")
_DIGEST = 32
_ALLOWED_MODULES = ("hessae.",)


class ModelFileError(ValueError):
    pass


class VersionMismatchError(ModelFileError):
    pass


class ChecksumError(ModelFileError):
    pass


def _encode(obj, arrays: list):
    if isinstance(obj, np.ndarray):
        arrays.append(np.ascontiguousarray(obj))
        return {"__array__": len(arrays) - 1}
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        cls = type(obj)
        return {"__dataclass__": f"{cls.__module__}:{cls.__qualname__}",
                "fields": {f.name: _encode(getattr(obj, f.name), arrays)
                           for f in dataclasses.fields(obj)}}
    if isinstance(obj, tuple):
        return {"__tuple__": [_encode(v, arrays) for v in obj]}
    if isinstance(obj, list):
        return [_encode(v, arrays) for v in obj]
    if isinstance(obj, dict):
        if not all(isinstance(k, str) for k in obj):
            return {"__items__": [[_encode(k, arrays), _encode(v, arrays)] for k, v in obj.items()]}
        return {"__dict__": {k: _encode(v, arrays) for k, v in obj.items()}}
    if isinstance(obj, np.generic):
        return obj.item()
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _resolve(path: str):
    module, _, name = path.partition(":")
    if not module.startswith(_ALLOWED_MODULES):
        raise ModelFileError(f"refusing to build type from module {module!r}")
    obj = importlib.import_module(module)
    for part in name.split("."):
        obj = getattr(obj, part)
    return obj


def _decode(node, arrays: list):
    if isinstance(node, list):
        return [_decode(v, arrays) for v in node]
    if not isinstance(node, dict):
        return node
    if "__array__" in node:
        return arrays[node["__array__"]]
    if "__tuple__" in node:
        return tuple(_decode(v, arrays) for v in node["__tuple__"])
    if "__dict__" in node:
        return {k: _decode(v, arrays) for k, v in node["__dict__"].items()}
    if "__items__" in node:
        return {_decode(k, arrays): _decode(v, arrays) for k, v in node["__items__"]}
    if "__dataclass__" in node:
        cls = _resolve(node["__dataclass__"])
        values = {k: _decode(v, arrays) for k, v in node["fields"].items()}
        init = {f.name for f in dataclasses.fields(cls) if f.init}
        obj = cls(**{k: v for k, v in values.items() if k in init})
        for k, v in values.items():
            if k not in init:
                object.__setattr__(obj, k, v)
        return obj
    raise ModelFileError("malformed header node")


def _checksum(version: int, header: dict, blob: bytes) -> bytes:
    stable = {k: v for k, v in header.items() if k != "created"}
    h = hashlib.sha256()
    h.update(struct.pack("<I", version))
    h.update(json.dumps(stable, sort_keys=True).encode())
    h.update(blob)
    return h.digest()


def save_model(path, state, config: dict | None = None, seed: int | None = None) -> Path:
    arrays: list = []
    tree = _encode(state, arrays)
    table, chunks, offset = [], [], 0
    for a in arrays:
        b = a.tobytes()
        table.append({"dtype": a.dtype.str, "shape": list(a.shape), "offset": offset,
                      "nbytes": len(b)})
        chunks.append(b)
        offset += len(b)
    blob = b"".join(chunks)
    header = {"format_version": FORMAT_VERSION, "config": config, "seed": seed, "arrays": table,
              "state": tree,
              "created": datetime.datetime.now(datetime.timezone.utc).isoformat()}
    hbytes = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(hbytes)))
        fh.write(hbytes)
        fh.write(blob)
        fh.write(_checksum(FORMAT_VERSION, header, blob))
    return path


def read_header(path):
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size:
        raise ChecksumError("file too short to be a model file")
    magic, version, hlen = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise ModelFileError("not a model file (bad magic)")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"model file format version {version} does not match supported version {FORMAT_VERSION}")
    start = _PREFIX.size
    try:
        header = json.loads(raw[start:start + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ChecksumError(f"corrupt header: {exc}") from exc
    return raw, version, header, start + hlen


def model_checksum(path) -> str:
    """Hex digest stored in the file (timestamp-independent)."""
    raw = Path(path).read_bytes()
    return raw[-_DIGEST:].hex()


def load_model(path):
    """Returns ``(state, header)``; raises on version mismatch or checksum failure."""
    raw, version, header, body = read_header(path)
    need = sum(t["nbytes"] for t in header.get("arrays", []))
    blob = raw[body:len(raw) - _DIGEST]
    if len(raw) - body < _DIGEST or len(blob) != need:
        raise ChecksumError("model file truncated or padded (checksum cannot match)")
    if _checksum(version, header, blob) != raw[-_DIGEST:]:
        raise ChecksumError("model file checksum mismatch")
    arrays = []
    for t in header["arrays"]:
        a = np.frombuffer(blob, dtype=np.dtype(t["dtype"]), count=int(np.prod(t["shape"])),
                          offset=t["offset"]).reshape(t["shape"]).copy()
        arrays.append(a)
    return _decode(header["state"], arrays), header
