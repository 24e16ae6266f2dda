import os
import sys
import tempfile
import unittest

import numpy as np
import pandas as pd

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..")
sys.path.insert(0, ROOT)
sys.path.insert(0, os.path.join(ROOT, "aux_scripts"))

from analyze_run import analyze_log, summarize  # noqa: E402
from generate_clouds import generate  # noqa: E402
from PointCloud import load_cloud  # noqa: E402


class TestGenerateClouds(unittest.TestCase):
    def test_writes_loadable_clouds(self):
        with tempfile.TemporaryDirectory() as tmp:
            paths = generate(tmp, ["square", "cube-spheres", "nope"], seed=3)
            self.assertEqual([os.path.basename(p) for p in paths], ["square.xyz", "cube_spheres.xyz"])
            square = load_cloud(paths[0])
            self.assertEqual(len(square), 24)
            again = generate(os.path.join(tmp, "again"), ["cube-spheres"], seed=3)
            np.testing.assert_array_equal(np.loadtxt(paths[1]), np.loadtxt(again[0]))


class TestAnalyzeRun(unittest.TestCase):
    def sample_log(self):
        rows = []
        for r, count in ((1, 4), (2, 6)):
            for n in range(1, count + 1):
                rows.append({"r": r, "n": n, "E2": 1.0 / (r * n), "deltaE": 0.5 / n, "band_size": 100 * r,
                             "ErrS": 0.01 / n, "Err1": np.nan, "wall_ms": 10.0, "Ep": 1.0 / n,
                             "fallback": 1, "cavity": 0})
        return pd.DataFrame(rows)

    def test_summary_per_run(self):
        stats = summarize(self.sample_log())
        self.assertEqual(stats.loc[1, "iterations"], 4)
        self.assertEqual(stats.loc[2, "iterations"], 6)
        self.assertAlmostEqual(stats.loc[1, "E2_drop%"], 75.0)
        self.assertEqual(stats.loc[2, "fallbacks"], 6)

    def test_analyze_missing_and_present(self):
        with tempfile.TemporaryDirectory() as tmp:
            self.assertIsNone(analyze_log(os.path.join(tmp, "missing.csv")))
            path = os.path.join(tmp, "run_log.csv")
            self.sample_log().to_csv(path, index=False)
            stats = analyze_log(path)
        self.assertEqual(list(stats.index), [1, 2])


if __name__ == '__main__':
    unittest.main()
