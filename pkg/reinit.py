"""
reinit.py - Closest-point reinitialization of the level-set field

Restores phi to a signed distance near its zero level set without moving it:

1. front leaves (sign change against a neighbor) project their 2^n sub-cell
   centers onto the zero set of their local polynomial (damped Newton);
2. leaves in the front and one layer around it take the distance to the
   zero set, found by a Lagrange-Newton closest-point solve started at the
   nearest seed, with the sign of the old value;
3. signed propagation carries these values through the reinit band, and
   everything outside the band is cut to +/- gamma;
4. a band value within keep_tol leaf edges of its new value is left alone,
   so reinitializing a reinitialized field returns it unchanged.

Usage:
    from reinit import reinitialize, ReinitParams
    phi, stats = reinitialize(phi, forest, band, operator="p1")

Dependencies:
    - numpy
    - scipy (cKDTree for the nearest-seed lookup)
"""
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from errors import ConfigError, LostInterfaceError
from log_config import get_logger
from propagation import SIGNED, PropagationState, propagate
from recon_ops import Reconstructor
from sl_solver import cut, detect_front_set

log = get_logger("REINIT")

_SINGULAR_DET = 1e-12


@dataclass
class ReinitParams:
    newton_max_iter: int = 20
    newton_tol: float = 1e-10
    projection_max_iter: int = 20
    projection_tol: float = 1e-8
    seed_clamp: float = 2.0
    keep_tol: float = 0.02

    def __post_init__(self):
        if self.newton_max_iter < 1 or self.projection_max_iter < 1:
            raise ConfigError("Newton iteration caps must be >= 1")
        if self.seed_clamp <= 0:
            raise ConfigError(f"seed clamp must be positive, got {self.seed_clamp}")
        if self.keep_tol < 0:
            raise ConfigError(f"keep tolerance must be >= 0, got {self.keep_tol}")


@dataclass
class SeedSet:
    """Projected interface points, the leaf that owns each, and its polynomial."""
    points: np.ndarray
    owners: np.ndarray
    poly: object
    discarded: int = 0
    barren: int = 0
    _tree: object = None

    def __len__(self):
        return len(self.points)

    @property
    def tree(self):
        if self._tree is None:
            self._tree = cKDTree(self.points)
        return self._tree

    def nearest(self, x):
        _, k = self.tree.query(np.atleast_2d(x))
        return np.atleast_1d(k)


@dataclass
class ReinitStats:
    front: int = 0
    seeds: int = 0
    discarded: int = 0
    barren: int = 0
    frozen: int = 0
    newton_fallback: int = 0
    kept: int = 0


def detect_front(field, forest):
    """Q0: leaves with phi_i phi_j <= 0 against some neighbor."""
    front = detect_front_set(field, forest)
    if len(front) == 0:
        raise LostInterfaceError("no sign change in the field: the interface was lost")
    return front


def _within_clamp(points, owners, forest, clamp):
    offset = np.abs(points - forest.centers[owners]).max(axis=1)
    return offset <= (0.5 + clamp) * forest.edges[owners]


def make_seeds(front, field, forest, rec=None, operator="p1", params=None):
    """
    Projects the sub-cell centers of every front leaf onto {R_j = 0} with
    x <- x - R grad R / |grad R|^2, steps capped at one leaf width.
    Projections that miss the tolerance or leave the clamp are discarded.
    """
    params = params or ReinitParams()
    rec = rec or Reconstructor(forest, field, operator)
    leaves = np.asarray(getattr(front, "leaves", front), dtype=np.int64)
    n = forest.dimension
    rec.ensure(leaves)
    poly = rec.poly
    corners = np.array([[(c >> d) & 1 for d in range(n)] for c in range(2 ** n)], dtype=float) - 0.5
    owners = np.repeat(leaves, 2 ** n)
    edges = forest.edges[owners]
    x = (forest.centers[leaves][:, None, :] + 0.5 * corners[None, :, :] * forest.edges[leaves][:, None, None]).reshape(-1, n)

    alive = np.ones(len(x), dtype=bool)
    for _ in range(params.projection_max_iter):
        r = poly.evaluate_at(x, owners)
        done = np.abs(r) <= params.projection_tol * edges
        if np.all(done | ~alive):
            break
        g = poly.gradient_at(x, owners)
        g2 = np.einsum("kn,kn->k", g, g)
        flat = g2 == 0.0
        alive &= ~(flat & ~done)
        step = -(r / np.where(flat, 1.0, g2))[:, None] * g
        length = np.linalg.norm(step, axis=1)
        step *= np.minimum(1.0, edges / np.where(length > 0, length, 1.0))[:, None]
        move = alive & ~done
        x[move] += step[move]
        alive &= _within_clamp(x, owners, forest, params.seed_clamp)

    r = poly.evaluate_at(x, owners)
    keep = alive & (np.abs(r) <= params.projection_tol * edges) & _within_clamp(x, owners, forest, params.seed_clamp)
    counted = np.bincount(np.searchsorted(leaves, owners[keep]), minlength=len(leaves)) if len(leaves) else []
    barren = int(np.count_nonzero(np.asarray(counted) == 0))
    discarded = int(np.count_nonzero(~keep))
    if discarded:
        log.debug(f"{discarded} seed projections discarded, {barren} front leaves without seeds")
    return SeedSet(points=x[keep], owners=owners[keep], poly=poly, discarded=discarded, barren=barren)


def closest_point_newton(x, seeds, nearest=None, params=None):
    """
    Distance from each row of x to the zero set of the nearest seed's owner
    polynomial, by Newton on the KKT system of min |x - y|^2 s.t. R(y) = 0.
    Returns (distance, closest point, fallback flag); a fallback uses the seed.
    """
    params = params or ReinitParams()
    x = np.atleast_2d(np.asarray(x, dtype=float))
    k = seeds.nearest(x) if nearest is None else np.atleast_1d(nearest)
    rows = seeds.owners[k]
    poly = seeds.poly
    n = x.shape[1]
    edges = poly.edges[rows]
    y = seeds.points[k].copy()
    g = poly.gradient_at(y, rows)
    g2 = np.einsum("kn,kn->k", g, g)
    lam = np.einsum("kn,kn->k", x - y, g) / np.where(g2 > 0, g2, 1.0)
    failed = g2 == 0.0
    converged = np.zeros(len(x), dtype=bool)
    eye = np.eye(n)

    for _ in range(params.newton_max_iter):
        r = poly.evaluate_at(y, rows)
        g = poly.gradient_at(y, rows)
        residual = np.concatenate([y - x + lam[:, None] * g, r[:, None]], axis=1)
        converged |= ~failed & (np.linalg.norm(residual, axis=1) <= params.newton_tol * edges)
        active = ~failed & ~converged
        if not np.any(active):
            break
        H = poly.hessian(rows)
        kkt = np.zeros((len(x), n + 1, n + 1))
        kkt[:, :n, :n] = eye + lam[:, None, None] * H
        kkt[:, :n, n] = g
        kkt[:, n, :n] = g
        singular = np.abs(np.linalg.det(kkt)) < _SINGULAR_DET
        failed |= active & singular
        active &= ~singular
        kkt[~active] = np.eye(n + 1)
        delta = np.linalg.solve(kkt, -np.where(active[:, None], residual, 0.0)[..., None])[..., 0]
        y[active] += delta[active, :n]
        lam[active] += delta[active, n]
        drift = np.linalg.norm(y - seeds.points[k], axis=1) > params.seed_clamp * edges
        failed |= active & drift

    fallback = ~converged
    y = np.where(fallback[:, None], seeds.points[k], y)
    return np.linalg.norm(x - y, axis=1), y, fallback


def reinitialize(field, forest, band, operator="p1", params=None, cweno_params=None, workers=None):
    """
    Returns (phi, stats). Leaves of the front and its one-layer rim inside the
    reinit band are frozen at their closest-point distances; the rest of the
    band is filled by signed propagation; values that moved by at most
    keep_tol leaf edges are restored and the whole field is then cut.
    """
    params = params or ReinitParams()
    phi = np.asarray(field, dtype=float)
    stats = ReinitStats()
    front = detect_front(phi, forest)
    stats.front = len(front)
    rec = Reconstructor(forest, phi, operator, cweno_params, workers)
    seeds = make_seeds(front, phi, forest, rec, operator, params)
    stats.seeds, stats.discarded, stats.barren = len(seeds), seeds.discarded, seeds.barren
    if len(seeds) == 0:
        log.warning("no seed survived projection; field left as is")
        return cut(phi, band.gamma), stats

    region = np.asarray(band.reinit, dtype=bool)
    front_mask = np.zeros(len(forest), dtype=bool)
    front_mask[front.leaves] = True
    frozen = forest.dilate(front_mask, 1) & region
    frozen_idx = np.nonzero(frozen)[0]
    dist, closest, fallback = closest_point_newton(forest.centers[frozen_idx], seeds, params=params)
    stats.frozen = len(frozen_idx)
    stats.newton_fallback = int(np.count_nonzero(fallback))

    values = np.where(region, np.where(phi < 0, -np.inf, np.inf), phi)
    values[frozen_idx] = np.sign(phi[frozen_idx]) * dist
    refs = np.full((len(forest), forest.dimension), np.nan)
    refs[frozen_idx] = closest
    state = PropagationState(values=values, refs=refs, frontier=frozen_idx, mode=SIGNED,
                             frozen=frozen, region=region)
    # phi == 0 on a non-frozen leaf: sign comes from the first offer
    state.signs[region & ~frozen & (phi == 0.0)] = 0
    state.values[region & ~frozen & (phi == 0.0)] = np.inf
    propagate(state, forest, workers)
    out = np.where(np.isfinite(state.values), state.values, phi)
    # values already within keep_tol leaf edges of their distance stay as they are
    kept = region & (np.sign(out) == np.sign(phi)) & (np.abs(out - phi) <= params.keep_tol * forest.edges)
    out = np.where(kept, phi, out)
    stats.kept = int(np.count_nonzero(kept))
    if stats.newton_fallback:
        log.debug(f"{stats.newton_fallback} closest-point solves fell back to the seed distance")
    return cut(out, band.gamma), stats
