"""Artifact files: CSV tables, JSON documents and run metadata.

Floats are written with ``repr`` so identical runs give identical bytes.
JSON keys keep insertion order.
"""

from __future__ import annotations

import csv
import json
import platform
from pathlib import Path

import numpy as np

RUN_META = "run_meta.json"


class CorruptArtifact(ValueError):
    pass


class MissingRunMeta(FileNotFoundError):
    pass


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        # JSON has no nan/inf
        return v if np.isfinite(v) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_plain(obj), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


def read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorruptArtifact(f"{path}:{exc.lineno}: {exc.msg}") from exc


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, header: list[str], rows) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    """Header and rows; a row with the wrong field count is reported by line."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CorruptArtifact(f"{path}:1: missing header row") from None
        rows = []
        for row in reader:
            if len(row) != len(header):
                raise CorruptArtifact(f"{path}:{reader.line_num}: expected {len(header)} fields, found {len(row)}")
            rows.append(row)
    return header, rows


def read_numeric_csv(path) -> tuple[list[str], np.ndarray]:
    header, rows = read_csv(path)
    out = np.empty((len(rows), len(header)))
    for i, row in enumerate(rows):
        for j, v in enumerate(row):
            try:
                out[i, j] = float({"true": "1", "false": "0"}.get(v, v))
            except ValueError:
                raise CorruptArtifact(f"{path}:{i + 2}: column {header[j]!r} is not numeric: {v!r}") from None
    return header, out


def versions() -> dict:
    import pydantic
    import scipy

    from . import __version__

    return {
        "mpflow": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pydantic": pydantic.__version__,
    }


def write_run_meta(out_dir, command: str, config: dict, seeds: list[int], calibration: dict | None, files: list[str]) -> Path:
    out_dir = Path(out_dir)
    meta = {
        "command": command,
        "config": config,
        "seeds": seeds,
        "calibration": calibration,
        "versions": versions(),
        "files": sorted(files),
    }
    return write_json(out_dir / RUN_META, meta)


def require_run_meta(directory) -> dict:
    path = Path(directory) / RUN_META
    if not path.exists():
        raise MissingRunMeta(f"{directory} has no {RUN_META}; refusing to use its outputs")
    return read_json(path)


def trajectory_rows(traj, extra_columns: dict[str, list[float]] | None = None):
    """Header and rows for trajectory.csv."""
    rho = np.asarray(traj.rho)
    m = rho.shape[1] if rho.ndim == 2 else 0
    header = ["t", "H"] + [f"rho_{i}" for i in range(m)]
    has_g = bool(traj.gram)
    if has_g:
        header += [f"G_{i}_{i}" for i in range(m)] + ["G_offdiag_max"]
    header += ["symmetry_z"]
    extra = dict(traj.extras)
    extra.update(extra_columns or {})
    header += list(extra)
    rows = []
    for k, t in enumerate(traj.times):
        row = [t, traj.energy[k], *rho[k]]
        if has_g:
            G = traj.gram[k]
            off = np.abs(G - np.diag(np.diag(G)))
            row += [*np.diag(G), float(off.max()) if m > 1 else 0.0]
        row.append(traj.symmetry[k])
        row += [v[k] for v in extra.values()]
        rows.append(row)
    return header, rows
