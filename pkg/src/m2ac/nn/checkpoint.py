"""Parameter checkpoints: one ``.npz`` file of named float64 arrays plus a version tag."""

from __future__ import annotations

import os
from typing import Mapping

import numpy as np

FORMAT_VERSION = 1
_VERSION_KEY = "__format_version__"


def save_checkpoint(path: str | os.PathLike, arrays: Mapping[str, np.ndarray]) -> None:
    if _VERSION_KEY in arrays:
        raise ValueError(f"{_VERSION_KEY} is reserved")
    payload = {k: np.ascontiguousarray(v, dtype=np.float64) for k, v in arrays.items()}
    payload[_VERSION_KEY] = np.array(FORMAT_VERSION, dtype=np.int64)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path: str | os.PathLike) -> dict[str, np.ndarray]:
    with np.load(path, allow_pickle=False) as data:
        if _VERSION_KEY not in data.files:
            raise ValueError(f"{path}: missing format version header")
        version = int(data[_VERSION_KEY])
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        return {k: data[k].copy() for k in data.files if k != _VERSION_KEY}
