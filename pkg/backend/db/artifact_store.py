"""
Artifact storage for experiment runs.
Writes CSV tables (pandas), the binary path dump and the run manifest.

CSV files use '.' as decimal separator, LF line endings and UTF-8; floats are
written with 17 significant digits so re-runs compare byte for byte.
"""
import json
import os
import struct
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import numpy as np
import pandas as pd
from importlib_metadata import PackageNotFoundError, version

from core.config import settings
from services.sde.config import CSV_FLOAT_FORMAT
from services.sde.schemas import (
    CheckResult,
    DensityEvolution,
    Ensemble,
    ExtremumRecord,
    GridDensity,
    OperatorMatrix,
    Quasipotential,
)

PATH_MAGIC = b"SDEPATH1"
VERSIONED_PACKAGES = ("numpy", "scipy", "pandas", "pydantic", "python-dotenv")


# ==============================================================================
# LOW-LEVEL WRITERS
# ==============================================================================

def csv_bytes(frame: pd.DataFrame) -> bytes:
    """The exact bytes write_csv puts on disk."""
    text = frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    return text.encode("utf-8")


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(csv_bytes(frame))
    return path


def write_json(payload: dict, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=str)
        f.write("\n")
    return path


def write_path_dump(paths: np.ndarray, path: Path) -> Path:
    """
    Full-path binary dump.

    Layout: 8-byte magic b"SDEPATH1", three little-endian uint64 dims
    (n_paths, steps + 1, state_dim), then float64 values, little-endian, row-major.
    """
    arr = np.ascontiguousarray(paths, dtype="<f8")
    if arr.ndim != 3:
        raise ValueError(f"path array must be 3-D, got shape {arr.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(PATH_MAGIC)
        f.write(struct.pack("<3Q", *arr.shape))
        f.write(arr.tobytes(order="C"))
    return path


def read_path_dump(path: Path) -> np.ndarray:
    with open(path, "rb") as f:
        if f.read(8) != PATH_MAGIC:
            raise ValueError(f"{path} is not a path dump")
        dims = struct.unpack("<3Q", f.read(24))
        data = np.frombuffer(f.read(), dtype="<f8")
    return data.reshape(dims)


# ==============================================================================
# TABLE BUILDERS
# ==============================================================================

def endpoints_frame(ensemble: Ensemble) -> pd.DataFrame:
    n, dim = ensemble.endpoints.shape
    return pd.DataFrame({
        "path_id": np.repeat(np.arange(n), dim),
        "component_index": np.tile(np.arange(dim), n),
        "value": ensemble.endpoints.ravel(),
    })


def failures_frame(ensemble: Ensemble) -> pd.DataFrame:
    return pd.DataFrame(
        [f.model_dump() for f in ensemble.failures],
        columns=["path_id", "step", "reason"],
    )


def _coordinate_columns(points: np.ndarray) -> Dict[str, np.ndarray]:
    names = ("x", "y")
    return {names[d]: points[:, d] for d in range(points.shape[1])}


def snapshots_frame(evolution: DensityEvolution) -> pd.DataFrame:
    parts = []
    for snap in evolution.snapshots:
        pts = snap.grid.points()
        parts.append(pd.DataFrame({
            "t": np.full(snap.grid.size, snap.t),
            "node_index": np.arange(snap.grid.size),
            **_coordinate_columns(pts),
            "w": snap.values,
        }))
    return pd.concat(parts, ignore_index=True)


def extrema_frame(records: Iterable[ExtremumRecord]) -> pd.DataFrame:
    rows = []
    for r in records:
        row = {"t": r.t, "node_index": r.index}
        row.update({f"position_{d}": p for d, p in enumerate(r.position)})
        row.update({"on_boundary": r.on_boundary, "unique": r.unique})
        rows.append(row)
    return pd.DataFrame(rows)


def operator_frame(op: OperatorMatrix) -> pd.DataFrame:
    """Coordinate list (row, col, value), sorted by row then column."""
    coo = op.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    return pd.DataFrame({"row": coo.row[order], "col": coo.col[order], "value": coo.data[order]})


def steady_frame(density: GridDensity, potential: Optional[Quasipotential] = None) -> pd.DataFrame:
    frame = pd.DataFrame({**_coordinate_columns(density.grid.points()), "w": density.values})
    if potential is not None:
        frame["phi"] = potential.phi
    return frame


def checks_frame(results: Iterable[CheckResult]) -> pd.DataFrame:
    """Rows sorted by test_name, then quantity; pass written as true/false."""
    rows = sorted(results, key=lambda r: (r.test_name, r.quantity))
    return pd.DataFrame({
        "test_name": [r.test_name for r in rows],
        "quantity": [r.quantity for r in rows],
        "expected": [r.expected for r in rows],
        "observed": [r.observed for r in rows],
        "tolerance": [r.tolerance for r in rows],
        "pass": ["true" if r.passed else "false" for r in rows],
    })


# ==============================================================================
# MANIFEST
# ==============================================================================

def package_versions() -> Dict[str, str]:
    versions = {settings.PROJECT_NAME: settings.VERSION}
    for name in VERSIONED_PACKAGES:
        try:
            versions[name] = version(name)
        except PackageNotFoundError:
            versions[name] = "not installed"
    return versions


def write_manifest(out_dir: Path, config: dict, seed: int, wall_time: float, files: List[str],
                   exit_code: int, warnings: List[str], summary: dict, error: Optional[str] = None) -> Path:
    manifest = {
        "config": config,
        "seed": seed,
        "versions": package_versions(),
        "wall_time_seconds": round(wall_time, 3),
        "finished_at": datetime.now(timezone.utc).isoformat(),
        "files": sorted(files),
        "exit_code": exit_code,
        "warnings": warnings,
        "summary": summary,
    }
    if error is not None:
        manifest["error"] = error
    return write_json(manifest, Path(out_dir) / "manifest.json")


def resolve_output_dir(requested: Optional[str]) -> Path:
    """The requested directory, else ALPHA_SDE_OUTPUT_DIR or ./runs; created if missing."""
    out = Path(requested) if requested else Path(settings.OUTPUT_DIR)
    os.makedirs(out, exist_ok=True)
    return out
