"""Parameter archives: one ``.npz`` zip holding little-endian float64 arrays.

Reserved entries: ``__format_version__`` (int64 scalar) and ``__meta__``
(UTF-8 JSON bytes). Every other entry is a parameter keyed by name.
"""

from __future__ import annotations

import json
import zipfile
from pathlib import Path
from typing import Mapping

import numpy as np

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: Mapping[str, np.ndarray], meta: dict | None = None) -> None:
    arrays = {}
    for name, value in params.items():
        if name.startswith("__"):
            raise CheckpointError(f"parameter name {name!r} is reserved")
        arrays[name] = np.ascontiguousarray(np.asarray(value, dtype="<f8"))
    arrays["__format_version__"] = np.array(FORMAT_VERSION, dtype="<i8")
    arrays["__meta__"] = np.frombuffer(json.dumps(meta or {}).encode("utf-8"), dtype=np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, ValueError, zipfile.BadZipFile) as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise CheckpointError(f"{path}: not a checkpoint archive ({exc})") from None
    if not hasattr(archive, "files"):
        raise CheckpointError(f"{path}: not a checkpoint archive")
    with archive:
        if "__format_version__" not in archive.files:
            raise CheckpointError(f"{path}: missing format version header")
        version = int(archive["__format_version__"])
        if version != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        meta = json.loads(archive["__meta__"].tobytes().decode("utf-8"))
        params = {name: archive[name].astype(np.float64) for name in archive.files if not name.startswith("__")}
    return params, meta
