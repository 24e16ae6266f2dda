"""
generate_clouds.py - Synthetic point clouds for the presets and tests

Writes one .xyz file per shape into data/ (or the given directory) using the
samplers in shapes.py. Clouds are deterministic: the only random sampler
(cube-spheres) is driven by --seed.

Usage:
    python aux_scripts/generate_clouds.py
    python aux_scripts/generate_clouds.py --outdir data --shapes square,heart --seed 7
"""
import argparse
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), ".."))

from shapes import SAMPLERS  # noqa: E402

SEEDED = ("cube-spheres", "cube-spheres-aligned")


def write_xyz(path, points, comment=None):
    with open(path, "w") as f:
        if comment:
            f.write(f"# {comment}\n")
        np.savetxt(f, points, fmt="%.12g")


def generate(outdir, shapes=None, seed=0):
    os.makedirs(outdir, exist_ok=True)
    written = []
    for name in shapes or SAMPLERS:
        if name not in SAMPLERS:
            print(f"[WARN] unknown shape '{name}', skipped")
            continue
        points = SAMPLERS[name](rng_seed=seed) if name in SEEDED else SAMPLERS[name]()
        path = os.path.join(outdir, f"{name.replace('-', '_')}.xyz")
        write_xyz(path, points, f"{name}: {len(points)} points")
        print(f"[OK] {path} ({len(points)} points)")
        written.append(path)
    return written


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Synthetic point cloud generator")
    parser.add_argument('--outdir', type=str, default='data', help='Output directory')
    parser.add_argument('--shapes', type=str, default=None,
                        help='Comma separated shape names (default: all)')
    parser.add_argument('--seed', type=int, default=0, help='Seed of the cube-spheres sampler')
    args = parser.parse_args()

    generate(args.outdir, args.shapes.split(",") if args.shapes else None, args.seed)
