"""Binary checkpoint container.

Layout: magic ``LGI1`` | version byte | u32 little-endian header length |
UTF-8 JSON header (parameter names, shapes, payload offsets, stage metadata) |
raw little-endian float32 payload. Loading a saved file reproduces every
parameter bit-exactly.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError

MAGIC = b"LGI1"
VERSION = 1


@dataclass
class Component:
    """One model's architecture description plus its named parameter arrays."""

    arch: dict
    params: dict[str, np.ndarray]


@dataclass
class Checkpoint:
    meta: dict = field(default_factory=dict)
    components: dict[str, Component] = field(default_factory=dict)


def save(ckpt: Checkpoint, path: str | os.PathLike) -> None:
    entries = {}
    payload = bytearray()
    for cname, comp in ckpt.components.items():
        plist = []
        for pname, arr in comp.params.items():
            arr = np.ascontiguousarray(arr, dtype="<f4")
            plist.append({"name": pname, "shape": list(arr.shape), "offset": len(payload)})
            payload += arr.tobytes()
        entries[cname] = {"arch": comp.arch, "params": plist}
    header = json.dumps(
        {"meta": ckpt.meta, "components": entries},
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([VERSION]))
        fh.write(len(header).to_bytes(4, "little"))
        fh.write(header)
        fh.write(bytes(payload))


def load(path: str | os.PathLike) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 9:
        raise FormatError("checkpoint shorter than its fixed header", offset=len(blob))
    if blob[:4] != MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}", offset=0)
    if blob[4] != VERSION:
        raise FormatError(f"unsupported format version {blob[4]}", offset=4)
    header_len = int.from_bytes(blob[5:9], "little")
    header_end = 9 + header_len
    if len(blob) < header_end:
        raise FormatError("truncated header", offset=len(blob))
    try:
        header = json.loads(blob[9:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable header: {exc}", offset=9) from exc
    payload = blob[header_end:]
    ckpt = Checkpoint(meta=header.get("meta", {}))
    for cname, entry in header.get("components", {}).items():
        params = {}
        for p in entry["params"]:
            shape = tuple(p["shape"])
            count = int(np.prod(shape)) if shape else 1
            start = p["offset"]
            stop = start + count * 4
            if stop > len(payload):
                raise FormatError(
                    f"payload truncated while reading {cname}/{p['name']}",
                    offset=header_end + start,
                )
            arr = np.frombuffer(payload[start:stop], dtype="<f4").reshape(shape)
            params[p["name"]] = arr.copy()
        ckpt.components[cname] = Component(arch=entry["arch"], params=params)
    return ckpt
