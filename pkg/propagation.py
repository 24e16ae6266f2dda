"""
propagation.py - Layer-by-layer propagation of minimized distances

A frontier of leaves hands its reference points to adjacent leaves. Each leaf
keeps the k nearest distinct points it has been offered (k = 1 reduces to a
single carried reference); its value is the distance to the nearest one. A
leaf whose reference set changed joins the next frontier. Two modes share the
sweep:

- distance:      unsigned distance d to the point cloud; every leaf stays
                 updatable, values only decrease.
- signed-reinit: spreading reinitialized level-set values; a frozen seed set
                 is never touched, magnitudes are compared, the recorded
                 sign of each leaf is kept.

Also hosts DistanceField, the run-level distance d with its reference points
and the cached P1 gradient of d, kept in step with grid adaptation.

Usage:
    from propagation import DistanceField
    dist = DistanceField(cloud, references=4)
    d = dist.build(forest)
    grad_d = dist.gradient()

Dependencies:
    - numpy
"""
from dataclasses import dataclass

import numpy as np

from amr_grid import EDGE_CORNER, nearest_references
from errors import ContractViolation, PropagationError
from log_config import get_logger
from parallel import chunked_map, concat
from PointCloud import bin_points
from recon_ops import fit_p1

log = get_logger("PROPAGATE")

DISTANCE = "distance"
SIGNED = "signed-reinit"
REFERENCES = 4


@dataclass
class PropagationState:
    """
    values: g per leaf (+inf when uninitialized; signed in reinit mode)
    refs:   (leaves, k, n) reference points per leaf, nearest first, nan
            padded; an (leaves, n) array is taken as k = 1
    frontier: leaf indices of the current frontier
    frozen: mask of leaves that are never updated (reinit mode)
    region: mask of leaves that may be updated at all
    signs:  recorded sign per leaf in reinit mode (0 = not yet known)
    """
    values: np.ndarray
    refs: np.ndarray
    frontier: np.ndarray
    mode: str = DISTANCE
    frozen: np.ndarray = None
    region: np.ndarray = None
    signs: np.ndarray = None
    sweeps: int = 0

    def __post_init__(self):
        count = len(self.values)
        refs = np.asarray(self.refs, dtype=float)
        self.refs = refs[:, None, :] if refs.ndim == 2 else refs
        if self.frozen is None:
            self.frozen = np.zeros(count, dtype=bool)
        if self.region is None:
            self.region = np.ones(count, dtype=bool)
        if self.signs is None:
            self.signs = np.sign(self.values).astype(np.int8) if self.mode == SIGNED else np.zeros(count, np.int8)

    @property
    def width(self):
        return self.refs.shape[1]

    @property
    def nearest(self):
        return self.refs[:, 0]

    @property
    def updatable(self):
        return self.region & ~self.frozen


def nearest_of(centers, pool, k):
    """The k nearest distinct points of each row of pool (m, j, n) to centers (m, n)."""
    m, j, n = pool.shape
    points = pool.reshape(-1, n)
    dist = np.linalg.norm(np.repeat(centers, j, axis=0) - points, axis=1)
    return nearest_references(np.repeat(np.arange(m), j), m, points, dist, k)[:2]


def exact_leaf_distances(forest, bins, cloud, k=1):
    """(leaves, distances (L, k), reference points (L, k, n)) for every occupied leaf."""
    leaf = bins.leaf_of_point
    dist = np.linalg.norm(forest.centers[leaf] - cloud.points, axis=1)
    out_d, out_p, _ = nearest_references(leaf, len(forest), cloud.points, dist, k)
    leaves = np.unique(leaf)
    return leaves, out_d[leaves], out_p[leaves]


def init_distance_exact(forest, bins, cloud, references=REFERENCES):
    """Exact distance to contained points on occupied leaves, +inf elsewhere."""
    if len(cloud) == 0:
        raise ContractViolation("cannot initialize distances from an empty cloud")
    count, n = len(forest), forest.dimension
    values = np.full(count, np.inf)
    refs = np.full((count, references, n), np.nan)
    leaves, dist, ref = exact_leaf_distances(forest, bins, cloud, references)
    values[leaves] = dist[:, 0]
    refs[leaves] = ref
    return PropagationState(values=values, refs=refs, frontier=leaves, mode=DISTANCE)


def _offers(forest, state, frontier, workers):
    """Every (receiver, distance, point, source) offer made by one frontier."""
    indptr, indices = forest.neighbor_table(EDGE_CORNER)
    centers = forest.centers
    updatable = state.updatable
    k, n = state.width, forest.dimension

    def work(lo, hi):
        src = frontier[lo:hi]
        counts = indptr[src + 1] - indptr[src]
        owner = np.repeat(src, counts)
        starts = np.repeat(indptr[src] - np.cumsum(counts) + counts, counts)
        recv = indices[starts + np.arange(len(owner))]
        ok = updatable[recv]
        owner, recv = np.repeat(owner[ok], k), np.repeat(recv[ok], k)
        pts = state.refs[owner[::k]].reshape(-1, n)
        filled = ~np.isnan(pts[:, 0])
        owner, recv, pts = owner[filled], recv[filled], pts[filled]
        dist = np.linalg.norm(centers[recv] - pts, axis=1)
        return recv, dist, pts, owner

    parts = chunked_map(work, len(frontier), workers)
    return (concat([p[0] for p in parts], (0,), np.int64), concat([p[1] for p in parts], (0,)),
            concat([p[2] for p in parts], (0, n)), concat([p[3] for p in parts], (0,), np.int64))


def sweep(state, forest, workers=None):
    """One layer: merges offers into the reference sets and returns the next frontier."""
    recv, dist, pts, src = _offers(forest, state, state.frontier, workers)
    receivers = np.unique(recv)
    state.sweeps += 1
    if len(receivers) == 0:
        state.frontier = receivers
        return receivers
    k, n = state.width, forest.dimension
    old = state.refs[receivers]
    old_recv = np.repeat(receivers, k)
    old_pts = old.reshape(-1, n)
    old_dist = np.linalg.norm(forest.centers[old_recv] - old_pts, axis=1)
    group = np.searchsorted(receivers, np.concatenate([old_recv, recv]))
    sources = np.concatenate([old_recv, src])
    best_d, best_p, pick = nearest_references(group, len(receivers), np.concatenate([old_pts, pts]),
                                              np.concatenate([old_dist, dist]), k)
    same = (best_p == old) | (np.isnan(best_p) & np.isnan(old))
    changed = ~np.all(same, axis=(1, 2))
    recv, best_d, best_p, pick = receivers[changed], best_d[changed], best_p[changed], pick[changed]
    if state.mode == DISTANCE:
        state.values[recv] = best_d[:, 0]
    else:
        unknown = state.signs[recv] == 0
        state.signs[recv[unknown]] = state.signs[sources[pick[unknown, 0]]]
        state.values[recv] = state.signs[recv] * best_d[:, 0]
    state.refs[recv] = best_p
    state.frontier = recv
    return recv


def propagate(state, forest, workers=None, max_sweeps=None):
    """
    Sweeps until no reference set changes (or `max_sweeps` sweeps). Returns
    the final values; raises PropagationError if the sweep count exceeds the
    leaf count.
    """
    if len(state.frontier) == 0:
        raise ContractViolation("propagation needs a non-empty initial frontier")
    limit = len(forest)
    done = 0
    while len(state.frontier):
        if max_sweeps is not None and done >= max_sweeps:
            break
        if done > limit:
            raise PropagationError(f"propagation did not terminate after {done} sweeps", leaves=limit)
        sweep(state, forest, workers)
        done += 1
    log.debug(f"{state.mode} propagation: {done} sweeps over {len(forest)} leaves, k={state.width}")
    return state.values


class DistanceField:
    """
    Distance from leaf centers to the cloud, following the grid through
    adaptation. Reference sets travel with the leaves (children inherit,
    coarsened parents keep the nearest child references); after a topology
    change the new leaves merge in their own cloud points and a local
    propagation restores the minimum.
    """

    def __init__(self, cloud, workers=None, references=REFERENCES):
        self.cloud = cloud
        self.workers = workers
        self.references = int(references)
        self.forest = None
        self.values = None
        self.refs = None
        self._grad = None

    def build(self, forest):
        bins = bin_points(self.cloud, forest)
        state = init_distance_exact(forest, bins, self.cloud, self.references)
        propagate(state, forest, self.workers)
        if not np.all(np.isfinite(state.values)):
            raise PropagationError("distance left unreached leaves", unreached=int(np.sum(~np.isfinite(state.values))))
        self._adopt(forest, state.values, state.refs)
        log.info(f"distance built on {len(forest)} leaves from {len(bins)} occupied leaves")
        return self.values

    def _adopt(self, forest, values, refs):
        self.forest = forest
        self.values = values
        self.refs = refs
        self._grad = None

    def update(self, forest, refs, dirty):
        """Re-establishes d on `forest` after adapt; `dirty` marks new leaves."""
        dirty = np.asarray(dirty, dtype=bool)
        refs = np.array(refs, dtype=float)
        if refs.ndim == 2:
            refs = refs[:, None, :]
        if np.any(dirty):
            bins = bin_points(self.cloud, forest)
            leaves, _, own = exact_leaf_distances(forest, bins, self.cloud, refs.shape[1])
            rows = leaves[dirty[leaves]]
            pool = np.concatenate([refs[rows], own[dirty[leaves]]], axis=1)
            refs[rows] = nearest_of(forest.centers[rows], pool, refs.shape[1])[1]
        values = np.linalg.norm(forest.centers - refs[:, 0], axis=1)
        values = np.where(np.isfinite(values), values, np.inf)
        if np.any(dirty):
            seeds = forest.dilate(dirty, 1) & np.isfinite(values)
            state = PropagationState(values=values, refs=refs, frontier=np.nonzero(seeds)[0], mode=DISTANCE)
            if len(state.frontier):
                propagate(state, forest, self.workers)
            values, refs = state.values, state.refs
        self._adopt(forest, values, refs)
        return self.values

    def gradient(self):
        """P1 gradient of d at every leaf center, cached for the current forest."""
        if self._grad is None:
            poly = fit_p1(None, self.values, self.forest, self.workers)
            self._grad = poly.center_gradient()
        return self._grad
