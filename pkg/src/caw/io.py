"""Atomic artifact writers and run manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import platform
import tempfile
from pathlib import Path

import numpy as np

__all__ = ["atomic_write_text", "write_json", "write_csv", "write_manifest", "manifest_path",
           "versions", "dumps_json", "file_sha256"]


_UMASK = os.umask(0)
os.umask(_UMASK)


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n"


def atomic_write_text(path, text: str) -> Path:
    """Write to a temp file in the target directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        os.chmod(tmp, 0o666 & ~_UMASK)
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(path, obj) -> Path:
    return atomic_write_text(path, dumps_json(obj))


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path, header, rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return atomic_write_text(path, buf.getvalue())


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def versions() -> dict:
    import scipy
    from . import __version__
    return {"caw": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def manifest_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".manifest.json")


def write_manifest(out, command: str, cfg_hash, status: str, wall_time: float,
                   artifacts=(), witness=None, extra=None) -> Path:
    """Manifest next to ``out``; wall_time is the only field expected to vary across reruns."""
    arts = {str(a): file_sha256(a) for a in artifacts if Path(a).is_file()}
    body = {"command": command, "config_hash": cfg_hash, "status": status,
            "versions": versions(), "wall_time": float(wall_time), "artifacts": arts,
            "witness": witness}
    if extra:
        body["extra"] = extra
    return write_json(manifest_path(out), body)
