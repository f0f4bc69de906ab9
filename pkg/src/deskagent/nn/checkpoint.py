"""Deterministic checkpoint archive for named parameter stores.

Layout: a magic line, an 8-byte big-endian header length, a JSON header
(sorted keys, so identical contents give identical bytes), then all
parameter values as little-endian float64 in header order. The header
carries a SHA-256 of the value blob so corruption and mismatched loads
are detected up front.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .params import ParamStore

MAGIC = b"DESKAGENT-CKPT v1\n"


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path: str | Path, stores: dict[str, ParamStore],
                    meta: dict | None = None) -> None:
    header: dict = {"version": 1, "meta": meta or {}, "stores": {}}
    blob = bytearray()
    for sname in sorted(stores):
        store = stores[sname]
        entry = {"frozen": sorted(store.frozen), "params": []}
        for pname in store.names():
            arr = np.ascontiguousarray(store[pname].data, dtype="<f8")
            entry["params"].append({
                "name": pname,
                "shape": list(arr.shape),
                "offset": len(blob),
            })
            blob.extend(arr.tobytes())
        header["stores"][sname] = entry
    header["blob_sha256"] = hashlib.sha256(bytes(blob)).hexdigest()
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(hbytes).to_bytes(8, "big"))
        fh.write(hbytes)
        fh.write(bytes(blob))


def load_checkpoint(path: str | Path) -> tuple[dict[str, ParamStore], dict]:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"not a checkpoint file: {path}")
    off = len(MAGIC)
    hlen = int.from_bytes(raw[off:off + 8], "big")
    off += 8
    header = json.loads(raw[off:off + hlen])
    if header.get("version") != 1:
        raise CheckpointError(f"unsupported checkpoint version: {header.get('version')}")
    blob = raw[off + hlen:]
    if hashlib.sha256(blob).hexdigest() != header["blob_sha256"]:
        raise CheckpointError("checkpoint blob hash mismatch")
    stores: dict[str, ParamStore] = {}
    for sname, entry in header["stores"].items():
        store = ParamStore()
        frozen = set(entry["frozen"])
        for p in entry["params"]:
            n = int(np.prod(p["shape"])) if p["shape"] else 1
            arr = np.frombuffer(
                blob, dtype="<f8", count=n, offset=p["offset"]
            ).reshape(p["shape"]).copy()
            store.add(p["name"], arr, frozen=p["name"] in frozen)
        stores[sname] = store
    return stores, header["meta"]
