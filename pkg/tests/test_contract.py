import json
import os
import sqlite3
import sys
import tempfile
import unittest

import numpy as np
import pandas as pd

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), ".."))

from errors import (EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL, EXIT_OK, CloudFormatError, ConfigError,  # noqa: E402
                    LostInterfaceError, exit_code_for)
from exports import LOG_COLUMNS, RUN_COLUMNS, read_contours  # noqa: E402
from reconstruct import main  # noqa: E402
from shapes import sample_circle  # noqa: E402


def write_cloud(directory, name, points):
    path = os.path.join(directory, name)
    np.savetxt(path, points, fmt="%.12g")
    return path


class TestContract(unittest.TestCase):
    """Result files of a short command-line run, as documented in Contract.md."""

    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cls.outdir = os.path.join(cls.tmp.name, "out")
        preset = os.path.join(cls.tmp.name, "circle.json")
        with open(preset, "w") as f:
            json.dump({"input": "circle.xyz", "min_iterations": 2, "max_iterations": 3, "stop_window": 2}, f)
        write_cloud(cls.tmp.name, "circle.xyz", sample_circle(64))
        cls.code = main([preset, "--outdir", cls.outdir, "--runs", "1", "--domain-halfwidth", "1.5",
                         "--exact", "circle", "--export", "csv,vtk,obj,db", "--seed", "7"])

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def path(self, name):
        return os.path.join(self.outdir, name)

    def assert_run_summary_structure(self, summary):
        for key in RUN_COLUMNS:
            self.assertIn(key, summary)
        self.assertIsInstance(summary["r"], int)
        self.assertIsInstance(summary["max_level"], int)
        self.assertIsInstance(summary["dx_min"], float)
        self.assertIsInstance(summary["iterations"], int)
        self.assertIn(summary["operator"], ("p1", "cweno"))
        self.assertIn(summary["stop_reason"], ("flat-energy", "max-iterations"))

    def assert_report_structure(self, data):
        for key in ("config", "h_s", "rng_seed", "total_iterations", "stop_reasons", "runs", "final"):
            self.assertIn(key, data)
        self.assertIsInstance(data["config"], dict)
        self.assertIsInstance(data["h_s"], float)
        self.assertIsInstance(data["total_iterations"], int)
        self.assertEqual(len(data["stop_reasons"]), len(data["runs"]))
        for summary in data["runs"]:
            self.assert_run_summary_structure(summary)
        for key in ("ErrS", "Err1", "E2", "leaves"):
            self.assertIn(key, data["final"])

    def test_exit_code(self):
        self.assertEqual(self.code, EXIT_OK)

    def test_report(self):
        with open(self.path("report.json")) as f:
            data = json.load(f)
        self.assert_report_structure(data)
        self.assertEqual(data["rng_seed"], 7)
        self.assertEqual(data["config"]["runs"], 1)
        self.assertEqual(data["config"]["exact"], "circle")
        self.assertIsInstance(data["final"]["Err1"], float)

    def test_run_log_columns(self):
        frame = pd.read_csv(self.path("run_log.csv"))
        self.assertEqual(list(frame.columns), LOG_COLUMNS)
        self.assertTrue((frame["r"] == 1).all())
        self.assertEqual(frame["n"].tolist(), list(range(1, len(frame) + 1)))
        self.assertTrue(np.isinf(frame["deltaE"].iloc[0]))

    def test_database_mirrors_log(self):
        frame = pd.read_csv(self.path("run_log.csv"))
        conn = sqlite3.connect(self.path("run_log.db"))
        iterations = pd.read_sql_query("SELECT * FROM iterations ORDER BY n", conn)
        runs = pd.read_sql_query("SELECT * FROM runs", conn)
        conn.close()
        self.assertEqual(len(iterations), len(frame))
        np.testing.assert_allclose(iterations["E2"], frame["E2"], rtol=1e-9)
        self.assertEqual(len(runs), 1)
        self.assertEqual(int(runs["iterations"].iloc[0]), len(frame))

    def test_grid_file(self):
        with open(self.path("grid_r1_final.vtk")) as f:
            text = f.read()
        self.assertIn("DATASET UNSTRUCTURED_GRID", text)
        self.assertIn("CELL_TYPES", text)
        for name in ("level", "phi", "d"):
            self.assertIn(f"SCALARS {name} double 1", text)

    def test_contour_encloses_cloud(self):
        lines = read_contours(self.path("contour_final.csv"))
        self.assertGreaterEqual(len(lines), 1)
        # the front starts outside the unit circle and moves toward it
        radii = np.linalg.norm(np.concatenate(lines), axis=1)
        self.assertTrue(np.all(radii > 0.9))
        self.assertTrue(np.all(radii < 1.5))


class TestExitCodes(unittest.TestCase):
    def test_exit_code_mapping(self):
        self.assertEqual(exit_code_for(ConfigError("bad key")), EXIT_CONFIG)
        self.assertEqual(exit_code_for(CloudFormatError("bad row", line_number=3)), EXIT_CONFIG)
        self.assertEqual(exit_code_for(FileNotFoundError("cloud.xyz")), EXIT_IO)
        self.assertEqual(exit_code_for(LostInterfaceError("gone")), EXIT_NUMERICAL)
        self.assertEqual(exit_code_for(ValueError("other")), EXIT_NUMERICAL)
        err = LostInterfaceError("gone", run=2).with_context(run=3, iteration=5)
        self.assertEqual(err.context, {"run": 2, "iteration": 5})
        self.assertEqual(str(err), "gone (run=2, iteration=5)")

    def test_missing_input_is_config_error(self):
        self.assertEqual(main(["--runs", "1"]), EXIT_CONFIG)

    def test_missing_cloud_is_io_error(self):
        with tempfile.TemporaryDirectory() as tmp:
            missing = os.path.join(tmp, "nothing.xyz")
            self.assertEqual(main(["--input", missing, "--outdir", tmp]), EXIT_IO)

    def test_malformed_cloud_is_config_error(self):
        with tempfile.TemporaryDirectory() as tmp:
            bad = os.path.join(tmp, "bad.xyz")
            with open(bad, "w") as f:
                f.write("0 0\n1 one\n")
            self.assertEqual(main(["--input", bad, "--outdir", tmp]), EXIT_CONFIG)

    def test_degenerate_cloud_is_config_error(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_cloud(tmp, "same.xyz", np.ones((3, 2)))
            self.assertEqual(main(["--input", path, "--outdir", tmp]), EXIT_CONFIG)

    def test_bad_flag_values(self):
        with self.assertRaises(SystemExit):
            main(["--input", "a.xyz", "--cavity", "maybe"])
        with self.assertRaises(SystemExit):
            main(["--input", "a.xyz", "--exact", "torus"])

    def test_domain_too_small_is_config_error(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_cloud(tmp, "circle.xyz", sample_circle(64))
            self.assertEqual(main(["--input", path, "--outdir", tmp, "--domain-halfwidth", "1.05"]), EXIT_CONFIG)


if __name__ == '__main__':
    unittest.main()
