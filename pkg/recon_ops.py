"""
recon_ops.py - Local polynomial reconstruction on leaf stencils

Constrained least-squares P1 fits and third-order CWENO reconstructions on
the edge+corner neighbor stencil of a leaf, in 2D and 3D. Every polynomial
lives in the scaled local basis of its owner leaf, x^ = (x - x_j) / dx_j:

    degree 1: {1, x^, y^[, z^]}
    degree 2: 2D {1, x^, y^, x^2, x^y^, y^2}
              3D {1, x^, y^, z^, x^2, x^y^, y^2, z^2, x^z^, y^z^}

The constant coefficient is pinned to the owner value, so every fit
interpolates at the leaf center.

Fits are batched: a call fits many leaves at once (padded stencils, stacked
SVD) and returns a LocalPolynomial holding one coefficient row per leaf.

Usage:
    from recon_ops import Reconstructor
    rec = Reconstructor(forest, phi, operator="cweno")
    values = rec.evaluate_points(points)
    grad = rec.gradient()            # per-leaf gradient at the center

Dependencies:
    - numpy
"""
from dataclasses import dataclass

import numpy as np

from amr_grid import EDGE_CORNER, Leaf
from errors import ConfigError
from log_config import get_logger
from parallel import chunked_map, concat

log = get_logger("RECON")

RANK_TOL = 1e-10
OFFSET_TOL = 1e-9
OPERATORS = ("p1", "cweno")

_EXPONENTS = {
    (2, 1): [(0, 0), (1, 0), (0, 1)],
    (2, 2): [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)],
    (3, 1): [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)],
    (3, 2): [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1),
             (2, 0, 0), (1, 1, 0), (0, 2, 0), (0, 0, 2), (1, 0, 1), (0, 1, 1)],
}

# diagonal of the oscillation-indicator quadratic form, same order as the degree-2 basis
_INDICATOR_DIAG = {
    2: np.array([0.0, 1.0, 1.0, 13.0 / 3.0, 7.0 / 6.0, 13.0 / 3.0]),
    3: np.array([0.0, 1.0, 1.0, 1.0, 13.0 / 3.0, 7.0 / 6.0, 13.0 / 3.0, 13.0 / 3.0, 7.0 / 6.0, 7.0 / 6.0]),
}


def exponents(dimension, degree):
    return np.array(_EXPONENTS[(dimension, degree)], dtype=np.int64)


def basis_size(dimension, degree):
    return len(_EXPONENTS[(dimension, degree)])


def basis(u, dimension, degree):
    """Basis values at scaled coordinates u (..., n) -> (..., nb)."""
    e = exponents(dimension, degree)
    return np.prod(np.asarray(u)[..., None, :] ** e, axis=-1)


def basis_gradient(u, dimension, degree):
    """d(basis)/du: (..., nb, n)."""
    e = exponents(dimension, degree)
    u = np.asarray(u)[..., None, :]
    out = np.empty(u.shape[:-2] + (len(e), dimension))
    for d in range(dimension):
        lowered = e.copy()
        lowered[:, d] = np.maximum(e[:, d] - 1, 0)
        out[..., d] = e[:, d] * np.prod(u ** lowered, axis=-1)
    return out


def basis_hessian(dimension, degree):
    """Second derivatives of the basis in scaled coordinates: (nb, n, n), constant."""
    e = exponents(dimension, degree)
    out = np.zeros((len(e), dimension, dimension))
    for b, ex in enumerate(e):
        for a in range(dimension):
            for c in range(dimension):
                if a == c:
                    out[b, a, c] = ex[a] * (ex[a] - 1) if ex[a] >= 2 and ex.sum() == 2 else 0.0
                elif ex[a] == 1 and ex[c] == 1 and ex.sum() == 2:
                    out[b, a, c] = 1.0
    return out


def promote(coeffs, dimension):
    """Zero-pads degree-1 coefficient rows to the degree-2 layout."""
    coeffs = np.asarray(coeffs, dtype=float)
    full = basis_size(dimension, 2)
    if coeffs.shape[-1] == full:
        return coeffs
    pad = np.zeros(coeffs.shape[:-1] + (full - coeffs.shape[-1],))
    return np.concatenate([coeffs, pad], axis=-1)


@dataclass
class FitFlags:
    degenerate: np.ndarray
    fallback: np.ndarray

    @classmethod
    def clear(cls, count):
        return cls(np.zeros(count, dtype=bool), np.zeros(count, dtype=bool))

    def subset(self, rows):
        return FitFlags(self.degenerate[rows], self.fallback[rows])


@dataclass
class LocalPolynomial:
    """One polynomial per owner leaf, coefficients in the owner's scaled basis."""
    owners: np.ndarray
    degree: int
    coeffs: np.ndarray
    centers: np.ndarray
    edges: np.ndarray
    flags: FitFlags = None

    def __post_init__(self):
        if self.flags is None:
            self.flags = FitFlags.clear(len(self.owners))

    def __len__(self):
        return len(self.owners)

    @property
    def dimension(self):
        return self.centers.shape[1]

    def subset(self, rows):
        return LocalPolynomial(self.owners[rows], self.degree, self.coeffs[rows], self.centers[rows],
                               self.edges[rows], self.flags.subset(rows))

    def scaled(self, points, rows=None):
        if rows is None:
            shape = (len(self),) + (1,) * (np.ndim(points) - 2) + (self.dimension,)
            return (points - self.centers.reshape(shape)) / self.edges.reshape(shape[:-1] + (1,))
        return (points - self.centers[rows]) / self.edges[rows][:, None]

    def evaluate(self, points):
        """points (m, ..., n), row i evaluated with polynomial i -> (m, ...)."""
        points = np.asarray(points, dtype=float)
        phi = basis(self.scaled(points), self.dimension, self.degree)
        c = self.coeffs.reshape((len(self),) + (1,) * (points.ndim - 2) + (self.coeffs.shape[1],))
        return np.sum(phi * c, axis=-1)

    def evaluate_at(self, points, rows):
        """points (k, n) each evaluated with polynomial rows[k]."""
        phi = basis(self.scaled(np.asarray(points, dtype=float), rows), self.dimension, self.degree)
        return np.einsum("kb,kb->k", phi, self.coeffs[rows])

    def center_gradient(self):
        n = self.dimension
        return self.coeffs[:, 1:n + 1] / self.edges[:, None]

    def gradient_at(self, points, rows):
        u = self.scaled(np.asarray(points, dtype=float), rows)
        g = basis_gradient(u, self.dimension, self.degree)
        return np.einsum("kbn,kb->kn", g, self.coeffs[rows]) / self.edges[rows][:, None]

    def hessian(self, rows):
        if self.degree == 1:
            return np.zeros((len(rows), self.dimension, self.dimension))
        h = basis_hessian(self.dimension, self.degree)
        return np.einsum("bac,kb->kac", h, self.coeffs[rows]) / (self.edges[rows] ** 2)[:, None, None]


@dataclass
class CwenoWeights:
    linear: np.ndarray
    omega: np.ndarray
    indicators: np.ndarray
    eps: np.ndarray
    power: int = 2


@dataclass
class CwenoParams:
    d0: float = 0.75
    power: int = 2

    def __post_init__(self):
        if not 0.0 < self.d0 < 1.0:
            raise ConfigError(f"CWENO central weight d0 must lie in (0, 1), got {self.d0}")

    def linear_weights(self, laterals):
        return np.concatenate([[self.d0], np.full(laterals, (1.0 - self.d0) / laterals)])


# ----------------------------------------------------------------------
# stencils and the constrained least-squares kernel
# ----------------------------------------------------------------------

def _leaf_array(leaves, forest):
    if leaves is None:
        return np.arange(len(forest))
    if isinstance(leaves, Leaf):
        return np.array([leaves.index])
    return np.atleast_1d(np.asarray(leaves, dtype=np.int64))


def _stencils(forest, idx):
    """Padded edge+corner neighbor stencils: (m, K) indices and mask."""
    indptr, indices = forest.neighbor_table(EDGE_CORNER)
    counts = indptr[idx + 1] - indptr[idx]
    width = int(counts.max()) if len(idx) else 0
    pos = np.arange(width)[None, :]
    mask = pos < counts[:, None]
    flat = np.where(mask, indptr[idx][:, None] + pos, 0)
    nb = np.where(mask, indices[np.minimum(flat, max(len(indices) - 1, 0))], 0) if len(indices) else flat
    return nb, mask


def _solve(A, b):
    """Min-norm least squares per batch row via SVD; returns (x, rank)."""
    norms = np.linalg.norm(A, axis=1)
    norms = np.where(norms > 0, norms, 1.0)
    U, s, Vt = np.linalg.svd(A / norms[:, None, :], full_matrices=False)
    smax = s[:, :1] if s.shape[1] else np.zeros((len(s), 1))
    keep = s > RANK_TOL * smax
    inv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    y = np.einsum("mki,mk->mi", U, b) * inv
    x = np.einsum("mij,mi->mj", Vt, y) / norms
    return x, keep.sum(axis=1)


def constrained_fit(owner_centers, owner_edges, owner_values, points, values, mask, degree):
    """
    c0 = owner value; remaining coefficients solve the least-squares system
    sum_s c_s psi_s(x^_i) = phi_i - phi_j over the masked stencil rows.
    Returns (coeffs (m, nb), degenerate (m,)).
    """
    m, width, n = points.shape
    nb = basis_size(n, degree)
    unknowns = nb - 1
    rows = max(width, unknowns)
    u = (points - owner_centers[:, None, :]) / owner_edges[:, None, None]
    A = np.zeros((m, rows, unknowns))
    rhs = np.zeros((m, rows))
    if width:
        A[:, :width, :] = basis(u, n, degree)[..., 1:] * mask[..., None]
        rhs[:, :width] = np.where(mask, values - owner_values[:, None], 0.0)
    sol, rank = _solve(A, rhs)
    coeffs = np.concatenate([owner_values[:, None], sol], axis=1)
    return coeffs, rank < unknowns


def _lateral_patterns(dimension):
    return np.array([[1 if (k >> d) & 1 else -1 for d in range(dimension)] for k in range(2 ** dimension)])


def _gather(forest, field, idx):
    nb, mask = _stencils(forest, idx)
    centers = forest.centers
    return (centers[idx], forest.edges[idx], field[idx], centers[nb], field[nb], mask,
            (centers[nb] - centers[idx][:, None, :]) / forest.edges[idx][:, None, None])


# ----------------------------------------------------------------------
# operations
# ----------------------------------------------------------------------

def fit_p1(leaves, field, forest, workers=None):
    """Degree-1 constrained least-squares fit on the full stencil."""
    idx = _leaf_array(leaves, forest)
    field = np.asarray(field, dtype=float)

    def work(lo, hi):
        c, e, v, pts, vals, mask, _ = _gather(forest, field, idx[lo:hi])
        return constrained_fit(c, e, v, pts, vals, mask, 1)

    parts = chunked_map(work, len(idx), workers)
    n = forest.dimension
    coeffs = concat([p[0] for p in parts], (0, n + 1))
    degenerate = concat([p[1] for p in parts], (0,), bool)
    flags = FitFlags(degenerate, np.zeros(len(idx), dtype=bool))
    return LocalPolynomial(idx, 1, coeffs, forest.centers[idx], forest.edges[idx], flags)


def _lateral_fits(c, e, v, pts, vals, mask, offsets):
    """All 2^n directional degree-1 fits: (m, 2^n, n+1) coefficients plus flags."""
    m, _, n = pts.shape
    patterns = _lateral_patterns(n)
    coeffs = np.zeros((m, len(patterns), n + 1))
    degenerate = np.zeros((m, len(patterns)), dtype=bool)
    fallback = np.zeros((m, len(patterns)), dtype=bool)
    full, full_deg = constrained_fit(c, e, v, pts, vals, mask, 1)
    for k, sign in enumerate(patterns):
        sub = mask & np.all(offsets * sign >= -OFFSET_TOL, axis=2)
        empty = ~np.any(sub, axis=1)
        ck, dk = constrained_fit(c, e, v, pts, vals, sub, 1)
        coeffs[:, k] = np.where(empty[:, None], full, ck)
        degenerate[:, k] = np.where(empty, full_deg, dk)
        fallback[:, k] = empty
    return coeffs, degenerate, fallback


def lateral_directions(dimension):
    """Names of the directional substencils in lateral order."""
    if dimension == 2:
        return ["sw", "se", "nw", "ne"]
    return ["".join(("e" if s[0] > 0 else "w", "n" if s[1] > 0 else "s", "f" if s[2] > 0 else "b"))
            for s in _lateral_patterns(3)]


def fit_lateral(leaves, field, forest, direction):
    """
    Degree-1 fit restricted to the substencil of `direction` (2D: sw, se, nw,
    ne; 3D: octant names such as "wsb" or "enf"). Neighbors with a zero offset
    component belong to both adjacent substencils. An empty substencil falls
    back to the full stencil and sets the fallback flag.
    """
    idx = _leaf_array(leaves, forest)
    names = lateral_directions(forest.dimension)
    if direction not in names:
        raise ConfigError(f"unknown lateral direction '{direction}', expected one of {names}")
    k = names.index(direction)
    c, e, v, pts, vals, mask, offsets = _gather(forest, np.asarray(field, dtype=float), idx)
    coeffs, degenerate, fallback = _lateral_fits(c, e, v, pts, vals, mask, offsets)
    return LocalPolynomial(idx, 1, coeffs[:, k], c, e, FitFlags(degenerate[:, k], fallback[:, k]))


def oscillation_indicator(poly):
    """I = c^T M c with the diagonal indicator matrix; accepts a polynomial or raw coefficients."""
    coeffs = poly.coeffs if isinstance(poly, LocalPolynomial) else np.asarray(poly, dtype=float)
    nb = coeffs.shape[-1]
    dimension = 2 if nb in (3, 6) else 3
    full = promote(coeffs, dimension)
    return np.sum(_INDICATOR_DIAG[dimension] * full ** 2, axis=-1)


def _cweno_kernel(c, e, v, pts, vals, mask, offsets, params):
    n = pts.shape[2]
    opt, opt_deg = constrained_fit(c, e, v, pts, vals, mask, 2)
    lat, lat_deg, lat_fb = _lateral_fits(c, e, v, pts, vals, mask, offsets)
    lat = promote(lat, n)
    d = params.linear_weights(lat.shape[1])
    central = (opt - np.einsum("k,mkb->mb", d[1:], lat)) / d[0]
    polys = np.concatenate([central[:, None, :], lat], axis=1)
    indicators = np.concatenate([oscillation_indicator(opt)[:, None], oscillation_indicator(lat)], axis=1)
    eps = e ** 2
    alpha = d[None, :] / (eps[:, None] + indicators) ** params.power
    omega = alpha / alpha.sum(axis=1, keepdims=True)
    coeffs = np.einsum("mk,mkb->mb", omega, polys)
    coeffs[:, 0] = v
    degenerate = opt_deg | np.any(lat_deg, axis=1)
    return coeffs, degenerate, np.any(lat_fb, axis=1), omega, indicators, eps


def fit_cweno(leaves, field, forest, params=None, workers=None, return_weights=False):
    """
    Third-order CWENO: central degree-2 optimal fit blended with the 2^n
    directional degree-1 fits through smoothness-indicator weights
    (eps = dx_j^2).
    """
    params = params or CwenoParams()
    idx = _leaf_array(leaves, forest)
    field = np.asarray(field, dtype=float)

    def work(lo, hi):
        return _cweno_kernel(*_gather(forest, field, idx[lo:hi]), params)

    parts = chunked_map(work, len(idx), workers)
    n = forest.dimension
    nb = basis_size(n, 2)
    m = 2 ** n + 1
    coeffs = concat([p[0] for p in parts], (0, nb))
    flags = FitFlags(concat([p[1] for p in parts], (0,), bool), concat([p[2] for p in parts], (0,), bool))
    poly = LocalPolynomial(idx, 2, coeffs, forest.centers[idx], forest.edges[idx], flags)
    if not return_weights:
        return poly
    weights = CwenoWeights(linear=params.linear_weights(m - 1),
                           omega=concat([p[3] for p in parts], (0, m)),
                           indicators=concat([p[4] for p in parts], (0, m)),
                           eps=concat([p[5] for p in parts], (0,)), power=params.power)
    return poly, weights


def evaluate(poly, x):
    """Value of a single-leaf polynomial (or row 0 of a batch) at x."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    vals = poly.evaluate_at(pts, np.zeros(len(pts), dtype=np.int64))
    return float(vals[0]) if single else vals


def fit(operator, leaves, field, forest, params=None, workers=None):
    if operator == "p1":
        return fit_p1(leaves, field, forest, workers)
    if operator == "cweno":
        return fit_cweno(leaves, field, forest, params, workers)
    raise ConfigError(f"unknown reconstruction operator '{operator}'")


class Reconstructor:
    """
    Lazily fitted per-leaf reconstructions of one field on one forest.
    Coefficients are computed on first use and cached for the snapshot.
    """

    def __init__(self, forest, values, operator="p1", params=None, workers=None):
        if operator not in OPERATORS:
            raise ConfigError(f"unknown reconstruction operator '{operator}'")
        self.forest = forest
        self.values = np.asarray(values, dtype=float)
        self.operator = operator
        self.params = params
        self.workers = workers
        degree = 1 if operator == "p1" else 2
        nb = basis_size(forest.dimension, degree)
        self.poly = LocalPolynomial(np.arange(len(forest)), degree, np.zeros((len(forest), nb)),
                                    forest.centers, forest.edges)
        self._done = np.zeros(len(forest), dtype=bool)

    def ensure(self, leaves):
        leaves = np.unique(np.asarray(leaves, dtype=np.int64))
        todo = leaves[~self._done[leaves]]
        if len(todo):
            fitted = fit(self.operator, todo, self.values, self.forest, self.params, self.workers)
            self.poly.coeffs[todo] = fitted.coeffs
            self.poly.flags.degenerate[todo] = fitted.flags.degenerate
            self.poly.flags.fallback[todo] = fitted.flags.fallback
            self._done[todo] = True
            bad = int(np.count_nonzero(fitted.flags.degenerate))
            if bad:
                log.debug(f"{bad} degenerate {self.operator} fits out of {len(todo)}")
        return leaves

    def polys(self, leaves):
        """Batch aligned with `leaves` (usable as refinement transfer)."""
        leaves = np.asarray(leaves, dtype=np.int64)
        self.ensure(leaves)
        return self.poly.subset(leaves)

    def evaluate_points(self, points, leaves=None):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if leaves is None:
            leaves = self.forest.locate(points)
        self.ensure(leaves)
        return self.poly.evaluate_at(points, leaves)

    def gradient(self, leaves=None):
        leaves = np.arange(len(self.forest)) if leaves is None else np.asarray(leaves, dtype=np.int64)
        self.ensure(leaves)
        n = self.forest.dimension
        return self.poly.coeffs[leaves, 1:n + 1] / self.forest.edges[leaves][:, None]

    def degenerate(self, leaves):
        self.ensure(leaves)
        return self.poly.flags.degenerate[np.asarray(leaves, dtype=np.int64)]
