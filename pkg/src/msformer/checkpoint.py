"""Checkpoint directory: ``manifest.json`` plus a flat little-endian float64 blob."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ContractError

MANIFEST = "manifest.json"
BLOB = "params.bin"
_DTYPE = np.dtype("<f8")


def save_params(directory, params: Mapping[str, np.ndarray]) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    offset = 0
    with open(d / BLOB, "wb") as fh:
        for name, arr in params.items():
            a = np.ascontiguousarray(arr, dtype=_DTYPE)
            fh.write(a.tobytes())
            entries.append({"name": name, "shape": list(a.shape), "dtype": "float64-le", "offset": offset})
            offset += a.nbytes
    manifest = {"format": "msformer-checkpoint/1", "total_bytes": offset, "params": entries}
    (d / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")
    return d


def load_params(directory) -> dict[str, np.ndarray]:
    d = Path(directory)
    if not (d / MANIFEST).is_file() or not (d / BLOB).is_file():
        raise FileNotFoundError(f"no checkpoint manifest/blob in {d}")
    manifest = json.loads((d / MANIFEST).read_text())
    blob = (d / BLOB).read_bytes()
    if len(blob) != manifest["total_bytes"]:
        raise ContractError(f"checkpoint blob is {len(blob)} bytes, manifest says {manifest['total_bytes']}")
    out = {}
    for e in manifest["params"]:
        count = int(np.prod(e["shape"], dtype=np.int64))
        arr = np.frombuffer(blob, dtype=_DTYPE, count=count, offset=e["offset"])
        out[e["name"]] = arr.reshape(e["shape"]).astype(np.float64)
    return out
