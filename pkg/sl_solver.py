"""
sl_solver.py - Semi-Lagrangian step of the localized level-set equation

One explicit step moves the zero level set of phi toward the point cloud:
every band leaf follows the characteristic foot x + C dt v (v = grad d, or
grad phi inside detected cavities) and averages the reconstruction at
symmetric tangential displacements around the foot, which realizes the
weighted curvature term. Leaves with a vanishing gradient take the neighbor
average instead, and a cut-off blend confines the update to the narrow band.

Also: band selection and cut, front detection, the discrete energy and the
cut-off function.

Usage:
    from sl_solver import SolverParams, select_band, sl_step
    params = SolverParams(p=1, mu=0.05, dt=0.225, dx_min=0.15)
    band = select_band(phi, forest, params)
    phi_next, stats = sl_step(phi, dist.values, dist.gradient(), params, band, energy, forest)

Dependencies:
    - numpy
"""
import math
from dataclasses import dataclass

import numpy as np

from amr_grid import EDGE_CORNER
from errors import ConfigError, ContractViolation, EmptyBandError, LostInterfaceError
from log_config import get_logger
from recon_ops import Reconstructor

log = get_logger("SL")


@dataclass
class SolverParams:
    p: float
    mu: float
    dt: float
    dx_min: float
    degenerate_D: float = 1e-3
    degenerate_alpha: float = 1.0
    cavity_mode: bool = False
    cavity_distance_factor: float = 4.0
    cavity_gradient_threshold: float = 0.9

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"time step must be positive, got {self.dt}")
        if self.mu < 0:
            raise ConfigError(f"curvature weight mu must be >= 0, got {self.mu}")
        if self.p < 1:
            raise ConfigError(f"fidelity exponent p must be >= 1, got {self.p}")
        if not self.dx_min > 0:
            raise ConfigError(f"dx_min must be positive, got {self.dx_min}")

    @property
    def courant(self):
        return self.dt / self.dx_min

    @property
    def beta(self):
        return 2.0 * self.courant * self.dx_min

    @property
    def gamma(self):
        return 4.0 * self.courant * self.dx_min

    @property
    def gradient_floor(self):
        return self.degenerate_D * self.dt ** self.degenerate_alpha


@dataclass
class BandState:
    active: np.ndarray
    reinit: np.ndarray
    beta: float
    gamma: float
    courant: float

    @property
    def size(self):
        return len(self.active)

    @property
    def reinit_mask(self):
        return self.reinit


@dataclass
class FrontSet:
    leaves: np.ndarray

    def __len__(self):
        return len(self.leaves)


@dataclass
class StepStats:
    fallback: int = 0
    clamped: int = 0
    cavity: int = 0
    updated: int = 0
    degenerate: int = 0


def detect_front_set(field, forest):
    """Leaves with a sign change (phi_i phi_j <= 0) against some neighbor."""
    field = np.asarray(field, dtype=float)
    owner, nb = forest.neighbor_pairs(EDGE_CORNER)
    hit = field[owner] * field[nb] <= 0.0
    mask = np.zeros(len(forest), dtype=bool)
    mask[owner[hit]] = True
    return FrontSet(np.nonzero(mask)[0])


def cutoff(phi, beta, gamma):
    """Smooth cut-off: 1 for |phi| <= beta, 0 for |phi| >= gamma, cubic in between."""
    if not 0.0 < beta < gamma:
        raise ContractViolation(f"cut-off needs 0 < beta < gamma, got beta={beta}, gamma={gamma}")
    a = np.abs(np.asarray(phi, dtype=float))
    mid = (a - gamma) ** 2 * (2.0 * a + gamma - 3.0 * beta) / (gamma - beta) ** 3
    out = np.where(a <= beta, 1.0, np.where(a <= gamma, mid, 0.0))
    return float(out) if out.ndim == 0 else out


def cut(field, gamma):
    """Clamps the field to [-gamma, gamma] (no-op inside the active band)."""
    return np.clip(np.asarray(field, dtype=float), -gamma, gamma)


def select_band(field, forest, params):
    """Active band |phi| < gamma plus its ceil(2 lambda)-layer reinit dilation."""
    field = np.asarray(field, dtype=float)
    active_mask = np.abs(field) < params.gamma
    active = np.nonzero(active_mask)[0]
    if len(active) == 0:
        raise EmptyBandError("narrow band is empty: the zero level set left the domain")
    layers = math.ceil(2.0 * params.courant)
    reinit = forest.dilate(active_mask, layers)
    return BandState(active=active, reinit=reinit, beta=params.beta, gamma=params.gamma,
                     courant=params.courant)


def compute_energy(field, distance, forest, p, front=None):
    """Discrete energy over the front: (sum |d_j|^p dx_min^(n-1))^(1/p)."""
    front = front if front is not None else detect_front_set(field, forest)
    if len(front) == 0:
        raise LostInterfaceError("no front leaves: the interface was lost")
    n = forest.dimension
    weight = forest.domain.dx_min ** (n - 1)
    d = np.abs(np.asarray(distance, dtype=float)[front.leaves])
    total = math.fsum((d ** p * weight).tolist())
    return total ** (1.0 / p)


def gradient(rec, leaves):
    """Center gradient of each leaf's reconstruction and a zero/degenerate flag."""
    leaves = np.asarray(leaves, dtype=np.int64)
    g = rec.gradient(leaves)
    zero = rec.degenerate(leaves) | (np.linalg.norm(g, axis=1) == 0.0)
    return g, zero


def tangent_frame(g):
    """
    2D: sigma = (g_y, -g_x)/|g|. 3D: sigma1 = unit(g x e_k) with e_k the axis
    of smallest |g_k|, sigma2 = unit(g x sigma1). Accepts one vector or rows.
    """
    g = np.asarray(g, dtype=float)
    single = g.ndim == 1
    g = np.atleast_2d(g)
    norm = np.linalg.norm(g, axis=1)
    if np.any(norm == 0.0):
        raise ContractViolation("tangent frame of a zero gradient")
    if g.shape[1] == 2:
        sigma = np.stack([g[:, 1], -g[:, 0]], axis=1) / norm[:, None]
        return sigma[0] if single else sigma
    axis = np.argmin(np.abs(g), axis=1)
    e = np.zeros_like(g)
    e[np.arange(len(g)), axis] = 1.0
    s1 = np.cross(g, e)
    s1 /= np.linalg.norm(s1, axis=1)[:, None]
    s2 = np.cross(g, s1)
    s2 /= np.linalg.norm(s2, axis=1)[:, None]
    return (s1[0], s2[0]) if single else (s1, s2)


def effective_velocity(d, grad_d, grad_phi, params):
    """
    grad phi where the data is far (d > factor dx_min) and grad d is weak
    (|grad d| < threshold) in cavity mode, grad d otherwise. Returns
    (velocity, switched mask).
    """
    grad_d = np.atleast_2d(np.asarray(grad_d, dtype=float))
    grad_phi = np.atleast_2d(np.asarray(grad_phi, dtype=float))
    d = np.atleast_1d(np.asarray(d, dtype=float))
    if not params.cavity_mode:
        return grad_d, np.zeros(len(d), dtype=bool)
    switch = ((d > params.cavity_distance_factor * params.dx_min)
              & (np.linalg.norm(grad_d, axis=1) < params.cavity_gradient_threshold))
    return np.where(switch[:, None], grad_phi, grad_d), switch


def neighbor_average(field, forest, leaves):
    """Mean of the field over each leaf's edge+corner neighbors."""
    indptr, indices = forest.neighbor_table(EDGE_CORNER)
    leaves = np.asarray(leaves, dtype=np.int64)
    counts = indptr[leaves + 1] - indptr[leaves]
    rows = np.repeat(np.arange(len(leaves)), counts)
    starts = np.repeat(indptr[leaves] - np.cumsum(counts) + counts, counts)
    members = indices[starts + np.arange(len(rows))]
    sums = np.bincount(rows, weights=np.asarray(field, dtype=float)[members], minlength=len(leaves))
    return sums / np.maximum(counts, 1)


def _displacements(sigma, h):
    if isinstance(sigma, tuple):
        s1, s2 = sigma
        pairs = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)
        return h[:, None, None] * (pairs[None, :, 0, None] * s1[:, None, :] + pairs[None, :, 1, None] * s2[:, None, :])
    return h[:, None, None] * np.stack([sigma, -sigma], axis=1)


def sl_step(field, distance, grad_distance, params, band, energy, forest, operator="p1",
            cweno_params=None, workers=None):
    """
    Advances phi on the active band by one step. Returns (phi_next, StepStats);
    leaves outside the band keep their values.
    """
    phi = np.asarray(field, dtype=float)
    d_all = np.asarray(distance, dtype=float)
    rec = Reconstructor(forest, phi, operator, cweno_params, workers)
    q = band.active
    stats = StepStats(updated=len(q))
    g, zero = gradient(rec, q)
    gnorm = np.linalg.norm(g, axis=1)
    flat = zero | (gnorm < params.gradient_floor)
    stats.fallback = int(np.count_nonzero(flat))
    stats.degenerate = int(np.count_nonzero(zero))
    update = np.empty(len(q))

    if np.any(flat):
        update[flat] = neighbor_average(phi, forest, q[flat])

    live = ~flat
    if np.any(live):
        j = q[live]
        d = d_all[j]
        if params.p == 1:
            C = np.ones(len(j))
        else:
            C = np.divide(d, energy, out=np.zeros(len(j)), where=energy > 0) ** (params.p - 1)
        v, switched = effective_velocity(d, grad_distance[j], g[live], params)
        stats.cavity = int(np.count_nonzero(switched))
        foot = forest.centers[j] + (C * params.dt)[:, None] * v
        h = np.sqrt(np.maximum(2.0 * C * params.mu * d * params.dt / params.p, 0.0))
        sigma = tangent_frame(g[live])
        pts = foot[:, None, :] + _displacements(sigma, h)
        m = forest.domain.half_width
        outside = np.any(np.abs(pts) > m, axis=2)
        stats.clamped = int(np.count_nonzero(outside))
        pts = np.clip(pts, -m, m)
        vals = rec.evaluate_points(pts.reshape(-1, forest.dimension)).reshape(pts.shape[:2])
        update[live] = vals.mean(axis=1)

    out = phi.copy()
    out[q] = phi[q] + cutoff(phi[q], band.beta, band.gamma) * (update - phi[q])
    if stats.clamped:
        log.debug(f"{stats.clamped} displaced points clamped to the domain")
    if stats.fallback:
        log.debug(f"{stats.fallback} leaves took the flat-gradient neighbor average")
    return out, stats
