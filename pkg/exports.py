"""
exports.py - Result files of a reconstruction run

Writes the artifacts listed in Contract.md:

    run_log.csv          per-iteration log (append-only, one row per step)
    grid_r{r}_final.vtk  leaves with level, phi and d at the end of run r
    surface_final.obj    3D triangle mesh (original coordinates)
    contour_final.csv    2D polylines: columns x,y; loops separated by blank lines
    report.json          config echo, per-run summaries, final metrics
    run_log.db           optional SQLite copy of the log (tables iterations, runs)

Usage:
    from exports import RunLog, write_report
    log_csv = RunLog("out/run_log.csv")
    log_csv.append(row_dict)

Dependencies:
    - pandas (CSV writing)
    - numpy
"""
import json
import os
import sqlite3

import numpy as np
import pandas as pd

from amr_grid import write_vtk
from create_run_db import create_run_database
from log_config import get_logger

log = get_logger("EXPORT")

LOG_COLUMNS = ["r", "n", "E2", "deltaE", "band_size", "ErrS", "Err1", "wall_ms", "Ep", "fallback", "cavity"]
RUN_COLUMNS = ["r", "max_level", "dx_min", "dt", "p", "mu", "operator", "iterations", "stop_reason",
               "E2", "ErrS", "Err1", "leaves"]


class RunLog:
    """Append-only CSV log; the header is written with the first row."""

    def __init__(self, path):
        self.path = path
        if os.path.exists(path):
            os.remove(path)

    def append(self, row):
        frame = pd.DataFrame([{k: row.get(k) for k in LOG_COLUMNS}], columns=LOG_COLUMNS)
        frame.to_csv(self.path, mode="a", header=not os.path.exists(self.path), index=False,
                     float_format="%.10g")


class RunDatabase:
    """SQLite mirror of the run log; failures are logged, never fatal."""

    def __init__(self, db_path, session):
        self.db_path = db_path
        self.session = session
        create_run_database(db_path)

    def _persist_iteration(self, row):
        try:
            conn = sqlite3.connect(self.db_path)
            cursor = conn.cursor()
            cursor.execute(f"""INSERT OR REPLACE INTO iterations (session, {', '.join(LOG_COLUMNS)})
                              VALUES ({', '.join('?' * (len(LOG_COLUMNS) + 1))})""",
                           (self.session, *[_sql_value(row.get(k)) for k in LOG_COLUMNS]))
            conn.commit()
            conn.close()
        except Exception as e:
            log.error(f"failed to persist iteration r={row.get('r')} n={row.get('n')}: {e}")

    def _persist_run(self, summary):
        try:
            conn = sqlite3.connect(self.db_path)
            cursor = conn.cursor()
            cursor.execute(f"""INSERT OR REPLACE INTO runs (session, {', '.join(RUN_COLUMNS)})
                              VALUES ({', '.join('?' * (len(RUN_COLUMNS) + 1))})""",
                           (self.session, *[_sql_value(summary.get(k)) for k in RUN_COLUMNS]))
            conn.commit()
            conn.close()
        except Exception as e:
            log.error(f"failed to persist run r={summary.get('r')}: {e}")


def _sql_value(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        return None if not np.isfinite(value) else float(value)
    return value


def _jsonable(value):
    """Plain Python values for json; non-finite floats become None."""
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if np.isfinite(value) else None
    return value


def write_report(path, report):
    with open(path, "w") as f:
        json.dump(_jsonable(report), f, indent=2, allow_nan=False)


def write_grid(path, forest, phi, distance):
    write_vtk(path, forest, {"phi": phi, "d": distance})


def write_obj(path, mesh):
    with open(path, "w") as f:
        f.write(f"# {len(mesh.vertices)} vertices, {len(mesh.faces)} triangles\n")
        np.savetxt(f, mesh.vertices, fmt="v %.10g %.10g %.10g")
        np.savetxt(f, np.asarray(mesh.faces) + 1, fmt="f %d %d %d")


def write_contours(path, mesh):
    """x,y rows per polyline, a blank line between polylines."""
    with open(path, "w") as f:
        f.write("x,y\n")
        for k, line in enumerate(mesh.polylines):
            if k:
                f.write("\n")
            np.savetxt(f, line, fmt="%.10g", delimiter=",")


def read_contours(path):
    """Inverse of write_contours: list of (K, 2) arrays."""
    lines, current = [], []
    with open(path, "r") as f:
        next(f)
        for text in f:
            text = text.strip()
            if not text:
                if current:
                    lines.append(np.array(current))
                current = []
                continue
            current.append([float(v) for v in text.split(",")])
    if current:
        lines.append(np.array(current))
    return lines


def write_surface(outdir, mesh):
    """surface_final.obj (3D) or contour_final.csv (2D); returns the path."""
    if mesh.dimension == 3:
        path = os.path.join(outdir, "surface_final.obj")
        write_obj(path, mesh)
    else:
        path = os.path.join(outdir, "contour_final.csv")
        write_contours(path, mesh)
    log.info(f"surface written to {path}")
    return path
