"""Atomic file output and run manifests."""
from __future__ import annotations

import hashlib
import json
import os
import platform
import tempfile
from pathlib import Path
from typing import Iterable, Union

import numpy as np

PathLike = Union[str, Path]


def atomic_write_bytes(path: PathLike, data: bytes) -> Path:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path: PathLike, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def sha256_file(path: PathLike) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir: PathLike, command: str, config_text: str,
                   outputs: Iterable[PathLike]) -> Path:
    """Record the config hash, produced files (with hashes) and library versions."""
    from . import __version__

    out_dir = Path(out_dir)
    files = sorted(Path(p) for p in outputs)
    manifest = {
        "command": command,
        "config_sha256": hashlib.sha256(config_text.encode("utf-8")).hexdigest(),
        "outputs": [{"path": str(p.relative_to(out_dir)) if p.is_relative_to(out_dir) else str(p),
                     "sha256": sha256_file(p)} for p in files],
        "versions": {
            "ctrlscape": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    return atomic_write_text(out_dir / f"manifest-{command}.json",
                             json.dumps(manifest, indent=2, sort_keys=True) + "\n")
