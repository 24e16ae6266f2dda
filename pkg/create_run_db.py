"""
create_run_db.py

Initializes the SQLite run-log database written by `reconstruct --export db`.
It creates the two tables the pipeline persists into: one row per iteration
and one summary row per run.

Usage:
    python create_run_db.py [path/to/run_log.db]
"""

import sqlite3
import sys

from log_config import configure, get_logger

log = get_logger("EXPORT")


def create_run_database(db_path="run_log.db"):
    """
    Creates (or opens) the run-log database and ensures the schema exists.
    Returns True on success.
    """
    conn = None
    try:
        conn = sqlite3.connect(db_path)
        cursor = conn.cursor()

        # One row per solver iteration; mirrors run_log.csv
        cursor.execute('''
            CREATE TABLE IF NOT EXISTS iterations (
                session TEXT,
                r INTEGER,
                n INTEGER,
                E2 REAL,
                deltaE REAL,
                band_size INTEGER,
                ErrS REAL,
                Err1 REAL,
                wall_ms REAL,
                Ep REAL,
                fallback INTEGER,
                cavity INTEGER,
                PRIMARY KEY (session, r, n)
            )
        ''')
        log.debug("table 'iterations' created or already exists")

        # One row per run r = 1..R
        cursor.execute('''
            CREATE TABLE IF NOT EXISTS runs (
                session TEXT,
                r INTEGER,
                max_level INTEGER,
                dx_min REAL,
                dt REAL,
                p REAL,
                mu REAL,
                operator TEXT,
                iterations INTEGER,
                stop_reason TEXT,
                E2 REAL,
                ErrS REAL,
                Err1 REAL,
                leaves INTEGER,
                PRIMARY KEY (session, r)
            )
        ''')
        log.debug("table 'runs' created or already exists")

        conn.commit()
        log.info(f"run-log schema ready in '{db_path}'")
        return True
    except sqlite3.Error as e:
        log.error(f"database error: {e}")
        return False
    finally:
        if conn:
            conn.close()


if __name__ == "__main__":
    configure()
    create_run_database(sys.argv[1] if len(sys.argv) > 1 else "run_log.db")
