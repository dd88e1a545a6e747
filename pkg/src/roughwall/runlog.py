"""Run manifests and the structured (JSON lines) log stream used by the CLI."""

import hashlib
import json
import logging
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__

_RESERVED = set(vars(logging.makeLogRecord({})).keys()) | {"message", "asctime"}


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def jsonable(v):
    """Plain-JSON copy of nested numpy / dataclass values; non-finite floats become null."""
    if isinstance(v, dict):
        return {str(k): jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return jsonable(v.tolist())
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return jsonable(v.item())
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, Path):
        return str(v)
    return v


class JsonFormatter(logging.Formatter):
    """One JSON object per record: time, level, logger, message and any extra fields."""

    def format(self, record):
        out = {"time": datetime.fromtimestamp(record.created, timezone.utc).isoformat(timespec="milliseconds"),
               "level": record.levelname, "logger": record.name, "message": record.getMessage()}
        for k, v in vars(record).items():
            if k not in _RESERVED and not k.startswith("_"):
                out[k] = jsonable(v)
        if record.exc_info:
            out["exception"] = self.formatException(record.exc_info)
        return json.dumps(out, default=str)


class _StderrHandler(logging.StreamHandler):
    """Writes to whatever sys.stderr is when the record is emitted."""

    def emit(self, record):
        self.stream = sys.stderr
        super().emit(record)


def setup_logging(level="INFO", stream=None):
    """Route the package logger to a JSON stream (stderr by default)."""
    logger = logging.getLogger("roughwall")
    for h in list(logger.handlers):
        if getattr(h, "_roughwall", False):
            logger.removeHandler(h)
            h.close()
    h = logging.StreamHandler(stream) if stream is not None else _StderrHandler()
    h.setFormatter(JsonFormatter())
    h._roughwall = True
    logger.addHandler(h)
    logger.setLevel(getattr(logging, str(level).upper(), logging.INFO))
    logger.propagate = False
    return logger


def add_file_log(path):
    logger = logging.getLogger("roughwall")
    h = logging.FileHandler(path, mode="w")
    h.setFormatter(JsonFormatter())
    h._roughwall = True
    logger.addHandler(h)
    return h


def remove_handler(h):
    logging.getLogger("roughwall").removeHandler(h)
    h.close()


def sha256(path):
    d = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            d.update(chunk)
    return d.hexdigest()


@dataclass
class RunManifest:
    """Record of one CLI invocation; written before compute and finalized at exit."""

    command: str
    argv: list
    config: dict
    seeds: list = field(default_factory=list)
    version: str = __version__
    started: str = field(default_factory=_now)
    finished: str = None
    status: str = "running"
    exit_code: int = None
    steps: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    path: Path = field(default=None, repr=False)

    def to_dict(self):
        d = asdict(self)
        d.pop("path")
        return jsonable(d)

    def write(self):
        if self.path is not None:
            Path(self.path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))

    def step(self, name):
        return _Step(self, name)

    def finalize(self, code, outputs, root):
        """List every output file (relative to ``root``) with size and digest, then write."""
        self.exit_code = int(code)
        self.status = "ok" if code == 0 else "failed"
        self.finished = _now()
        root = Path(root)
        rows = []
        for p in sorted({Path(p) for p in outputs}):
            if not p.is_file():
                continue
            try:
                rel = str(p.resolve().relative_to(root.resolve()))
            except ValueError:
                rel = str(p)
            rows.append({"path": rel, "bytes": p.stat().st_size, "sha256": sha256(p)})
        if self.path is not None:
            rows.append({"path": Path(self.path).name, "bytes": None, "sha256": None})
        self.outputs = rows
        self.write()

    @classmethod
    def read(cls, path):
        path = Path(path)
        d = json.loads(path.read_text())
        m = cls(command=d["command"], argv=d.get("argv", []), config=d.get("config", {}))
        for k in ("seeds", "version", "started", "finished", "status", "exit_code", "steps", "outputs"):
            if k in d:
                setattr(m, k, d[k])
        return m


class _Step:
    def __init__(self, manifest, name):
        self.m = manifest
        self.rec = {"name": name, "status": "running", "started": _now()}

    def __enter__(self):
        self.t0 = time.perf_counter()
        self.m.steps.append(self.rec)
        self.m.write()
        return self.rec

    def __exit__(self, etype, exc, tb):
        self.rec["seconds"] = round(time.perf_counter() - self.t0, 3)
        self.rec["status"] = "ok" if etype is None else f"failed: {etype.__name__}: {exc}"
        self.m.write()
        return False
