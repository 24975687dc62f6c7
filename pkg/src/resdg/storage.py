"""CSV datasets and the on-disk cache for long reference runs."""

from __future__ import annotations

import hashlib
import io
import json
import logging
import os
from pathlib import Path
from typing import Iterable, Mapping, TextIO

import numpy as np

from .integrators import RunMeta, SolverConfig, Trajectory, generate_reference
from .model import SystemModel

log = logging.getLogger(__name__)

FLOAT_FMT = "%.17g"


def _fmt(v: float) -> str:
    return FLOAT_FMT % v


def write_csv(out: TextIO, columns: Mapping[str, Iterable[float]], meta: Mapping | None = None,
              trailer: Iterable[str] = ()) -> None:
    """Write ``#``-prefixed metadata lines, a header row, then one row per sample.

    Floats are written with 17 significant digits, which round-trips doubles.
    Trailer lines are appended as comments after the data.
    """
    for key, value in (meta or {}).items():
        out.write(f"# {key}: {json.dumps(value, sort_keys=True)}\n")
    names = list(columns)
    out.write(",".join(names) + "\n")
    cols = [np.asarray(columns[n], dtype=float).tolist() for n in names]
    lengths = {len(c) for c in cols}
    if len(lengths) > 1:
        raise ValueError(f"columns have different lengths: {sorted(lengths)}")
    for row in zip(*cols):
        out.write(",".join(map(_fmt, row)) + "\n")
    for line in trailer:
        out.write(f"# {line}\n")


def read_csv(src: TextIO) -> tuple[dict, dict[str, np.ndarray], list[str]]:
    """Inverse of :func:`write_csv`: ``(meta, columns, trailer)``."""
    meta: dict = {}
    trailer: list[str] = []
    header: list[str] | None = None
    rows: list[list[float]] = []
    for line in src:
        line = line.rstrip("\n")
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if header is None:
                key, _, value = body.partition(": ")
                meta[key] = json.loads(value)
            else:
                trailer.append(body)
        elif header is None:
            header = line.split(",")
        else:
            rows.append([float(v) for v in line.split(",")])
    if header is None:
        raise ValueError("no header row found")
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return meta, {name: data[:, i].copy() for i, name in enumerate(header)}, trailer


def csv_text(columns, meta=None, trailer=()) -> str:
    buf = io.StringIO()
    write_csv(buf, columns, meta, trailer)
    return buf.getvalue()


def trajectory_columns(model: SystemModel, traj: Trajectory) -> dict[str, np.ndarray]:
    H = traj.H(model)
    return {"t": traj.t, "x": traj.x, "y": traj.y, "z": traj.z, "H": H, "K": H + traj.z}


# --- reference cache --------------------------------------------------------

_CACHE_VERSION = 1


def _reference_key(model: SystemModel, ic, h_ref: float, stride: int, T: float) -> dict:
    return {
        "version": _CACHE_VERSION,
        "system": model.name,
        "params": {k: float(v) for k, v in sorted(model.params.items())},
        "ic": [float(ic[0]), float(ic[1])],
        "h_ref": float(h_ref),
        "stride": int(stride),
        "T": float(T),
    }


def _digest(*arrays: np.ndarray) -> str:
    sha = hashlib.sha256()
    for a in arrays:
        sha.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return sha.hexdigest()


def cached_reference(model: SystemModel, ic, h_ref: float = 1e-6, stride: int = 1000,
                     T: float = 100.0, cache_dir: str | os.PathLike | None = None) -> Trajectory:
    """:func:`generate_reference` backed by an ``.npz`` cache.

    Each file carries a JSON header with the run key and a SHA-256 of the
    stored arrays; files whose header or checksum disagree are regenerated.
    """
    if cache_dir is None:
        return generate_reference(model, ic, h_ref, stride, T)
    key = _reference_key(model, ic, h_ref, stride, T)
    key_json = json.dumps(key, sort_keys=True)
    path = Path(cache_dir) / f"ref-{hashlib.sha256(key_json.encode()).hexdigest()[:20]}.npz"
    if path.exists():
        try:
            with np.load(path, allow_pickle=False) as data:
                header = json.loads(str(data["header"]))
                x, y, z = data["x"], data["y"], data["z"]
            if header["key"] == key and header["sha256"] == _digest(x, y, z):
                h = h_ref * stride
                meta = RunMeta(model.name, dict(model.params), "rk4-38", SolverConfig(h=h_ref),
                               h_ref, stride, (float(ic[0]), float(ic[1])))
                t = np.arange(len(x), dtype=float) * h
                return Trajectory(t, x, y, z, h, meta)
            log.warning("reference cache %s failed its integrity check; regenerating", path)
        except (OSError, KeyError, ValueError) as err:
            log.warning("unreadable reference cache %s (%s); regenerating", path, err)
    traj = generate_reference(model, ic, h_ref, stride, T)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = json.dumps({"key": key, "sha256": _digest(traj.x, traj.y, traj.z)}, sort_keys=True)
    tmp = path.with_suffix(".tmp.npz")
    np.savez(tmp, header=np.array(header), x=traj.x, y=traj.y, z=traj.z)
    os.replace(tmp, path)
    return traj
