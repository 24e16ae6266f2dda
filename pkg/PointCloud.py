"""
PointCloud - Point Cloud Ingestion and Binning

Reads an unorganized 2D/3D point cloud, rescales it into the computational
box, estimates its resolution h_S and bins the points into grid leaves.

Key Features:
- ASCII xyz (2 or 3 columns, '#' comments) and ASCII ply (vertex element)
- Uniform rescale: longest bounding-box side -> [-1, 1], box center -> origin,
  stored transform for writing results back in original coordinates
- h_S: mean distance from a seeded random sample to the nearest *other* point
- Leaf binning consistent with the grid's half-open point location

Usage:
    from PointCloud import load_cloud, estimate_resolution, bin_points

    cloud = load_cloud("data/square.xyz")
    h_s = estimate_resolution(cloud, sample_fraction=0.10, rng_seed=7)
    bins = bin_points(cloud, forest)

Dependencies:
    - numpy
    - scipy (cKDTree nearest-neighbor queries)
"""
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from errors import CloudFormatError, ContractViolation, DegenerateInputError
from log_config import get_logger

log = get_logger("CLOUD")

FORMATS = ("xyz", "ply")


@dataclass
class PointCloud:
    """Scaled points plus the affine map back to the input frame."""
    points: np.ndarray
    center: np.ndarray
    scale: float
    source: str = ""
    resolution: float = None
    rng_seed: int = None
    _tree: object = field(default=None, repr=False, compare=False)

    @classmethod
    def from_points(cls, raw, source=""):
        raw = np.asarray(raw, dtype=float)
        if raw.ndim != 2 or raw.shape[1] not in (2, 3):
            raise CloudFormatError(f"points must be an (M, 2) or (M, 3) array, got shape {raw.shape}")
        if not np.all(np.isfinite(raw)):
            raise CloudFormatError("point cloud contains non-finite coordinates")
        distinct = np.unique(raw, axis=0)
        if len(distinct) < 2:
            raise DegenerateInputError(f"cloud needs at least 2 distinct points, found {len(distinct)}")
        lo, hi = raw.min(axis=0), raw.max(axis=0)
        longest = float(np.max(hi - lo))
        if longest <= 0.0:
            raise DegenerateInputError("cloud bounding box has zero extent")
        center = (lo + hi) / 2.0
        scale = 2.0 / longest
        points = (raw - center) * scale
        # the longest side must land on [-1, 1] exactly
        axis = int(np.argmax(hi - lo))
        points[raw[:, axis] == lo[axis], axis] = -1.0
        points[raw[:, axis] == hi[axis], axis] = 1.0
        return cls(points=points, center=center, scale=scale, source=source)

    @property
    def dimension(self):
        return self.points.shape[1]

    def __len__(self):
        return len(self.points)

    @property
    def tree(self):
        if self._tree is None:
            self._tree = cKDTree(self.points)
        return self._tree

    def to_original(self, x):
        return np.asarray(x, dtype=float) / self.scale + self.center

    def to_scaled(self, x):
        return (np.asarray(x, dtype=float) - self.center) * self.scale

    def bbox_center(self):
        return (self.points.min(axis=0) + self.points.max(axis=0)) / 2.0

    def distance_to(self, x):
        """Exact distance from each row of x to the nearest cloud point."""
        dist, _ = self.tree.query(np.atleast_2d(x))
        return dist


@dataclass
class LeafBins:
    """Partition of point indices by containing leaf (CSR over occupied leaves)."""
    leaf_of_point: np.ndarray
    leaves: np.ndarray
    indptr: np.ndarray
    members: np.ndarray
    leaf_ids: np.ndarray

    def __len__(self):
        return len(self.leaves)

    def points_in(self, k):
        """Point indices of the k-th occupied leaf."""
        return self.members[self.indptr[k]:self.indptr[k + 1]]

    def as_dict(self):
        return {int(self.leaf_ids[k]): self.points_in(k) for k in range(len(self.leaves))}


# ----------------------------------------------------------------------
# readers
# ----------------------------------------------------------------------

def _read_xyz(path):
    rows = []
    width = None
    with open(path, "r") as f:
        for line_number, line in enumerate(f, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) not in (2, 3):
                raise CloudFormatError(f"{path}: expected 2 or 3 columns, got {len(parts)}", line_number)
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise CloudFormatError(f"{path}: mixed 2D/3D rows", line_number)
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise CloudFormatError(f"{path}: malformed coordinate in '{text}'", line_number) from None
    if not rows:
        raise DegenerateInputError(f"{path}: no points found")
    return np.array(rows, dtype=float)


def _read_ply(path):
    with open(path, "r") as f:
        lines = f.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise CloudFormatError(f"{path}: missing 'ply' magic", 1)
    elements = []  # [name, count, [properties]]
    body_start = None
    for line_number, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            if len(parts) < 2 or parts[1] != "ascii":
                raise CloudFormatError(f"{path}: only ASCII ply is supported", line_number)
        elif parts[0] == "element":
            try:
                elements.append([parts[1], int(parts[2]), []])
            except (IndexError, ValueError):
                raise CloudFormatError(f"{path}: bad element line", line_number) from None
        elif parts[0] == "property":
            if not elements:
                raise CloudFormatError(f"{path}: property before element", line_number)
            elements[-1][2].append(parts[-1])
        elif parts[0] == "end_header":
            body_start = line_number
            break
    if body_start is None:
        raise CloudFormatError(f"{path}: missing end_header")

    cursor = body_start  # 0-based index of first body line
    for name, count, props in elements:
        if name != "vertex":
            cursor += count
            continue
        if "x" not in props or "y" not in props:
            raise CloudFormatError(f"{path}: vertex element lacks x/y properties")
        cols = [props.index("x"), props.index("y")] + ([props.index("z")] if "z" in props else [])
        rows = []
        for k in range(count):
            line_number = cursor + k + 1
            if cursor + k >= len(lines):
                raise CloudFormatError(f"{path}: file ends inside vertex data", line_number)
            parts = lines[cursor + k].split()
            try:
                rows.append([float(parts[c]) for c in cols])
            except (IndexError, ValueError):
                raise CloudFormatError(f"{path}: malformed vertex row", line_number) from None
        return np.array(rows, dtype=float).reshape(-1, len(cols))
    raise CloudFormatError(f"{path}: no vertex element")


def infer_format(path):
    ext = os.path.splitext(path)[1].lower().lstrip(".")
    return ext if ext in FORMATS else "xyz"


def load_cloud(path, fmt=None):
    """Reads and rescales a cloud. fmt defaults to the file extension."""
    fmt = fmt or infer_format(path)
    if fmt not in FORMATS:
        raise CloudFormatError(f"unknown cloud format '{fmt}'")
    raw = _read_xyz(path) if fmt == "xyz" else _read_ply(path)
    cloud = PointCloud.from_points(raw, source=path)
    log.info(f"loaded {len(cloud)} points ({cloud.dimension}D) from {path}, scale={cloud.scale:.6g}")
    return cloud


# ----------------------------------------------------------------------
# resolution and binning
# ----------------------------------------------------------------------

def estimate_resolution(cloud, sample_fraction=0.10, rng_seed=0):
    """
    Mean distance from a random sample of the cloud to the nearest other
    point. Exact duplicates are merged first, so the result is never 0.
    """
    if not 0.0 < sample_fraction <= 1.0:
        raise ContractViolation(f"sample fraction must lie in (0, 1], got {sample_fraction}")
    distinct = np.unique(cloud.points, axis=0)
    if len(distinct) < 2:
        raise DegenerateInputError("cloud needs at least 2 distinct points")
    size = min(len(distinct), max(1, math.ceil(sample_fraction * len(distinct))))
    if size == len(distinct):
        sample = distinct
    else:
        rng = np.random.default_rng(rng_seed)
        sample = distinct[rng.choice(len(distinct), size=size, replace=False)]
    dist, _ = cKDTree(distinct).query(sample, k=2)
    h_s = float(np.mean(dist[:, 1]))
    cloud.resolution = h_s
    cloud.rng_seed = rng_seed
    log.info(f"resolution h_S={h_s:.6g} from {size} of {len(distinct)} distinct points")
    return h_s


def bin_points(cloud, forest):
    """Groups point indices by the leaf that contains them."""
    if len(cloud) == 0:
        raise ContractViolation("cannot bin an empty cloud")
    leaf = forest.locate(cloud.points)
    order = np.argsort(leaf, kind="stable")
    leaves, starts = np.unique(leaf[order], return_index=True)
    indptr = np.append(starts, len(order))
    return LeafBins(leaf_of_point=leaf, leaves=leaves, indptr=indptr, members=order,
                    leaf_ids=forest.ids[leaves])
