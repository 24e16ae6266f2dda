"""
amr_grid.py - Graded quadtree / octree over a cubic domain

Stores the active leaves of a single-tree quadtree (2D) or octree (3D) over
[-M, M]^n as a linear, Morton-ordered array and provides the grid services the
level-set solver needs:

- point location (half-open cells, top domain faces closed)
- edge-only / edge+corner neighbor tables
- refinement with values transferred through a local reconstruction
- coarsening of complete sibling families by averaging
- 2:1 balancing over full (edge+corner) adjacency, refine-only
- criterion-driven adaptation around the zero level set
- legacy VTK dump of the leaves

Leaf coordinates are integers at a fixed internal depth (TREE_DEPTH), so a
forest keeps the same anchors when the run-level maximum level grows.

Usage:
    from amr_grid import Domain, Forest, locate_point, neighbors
    domain = Domain(dimension=2, half_width=1.2, max_level=6)
    forest = Forest.uniform(domain, level=3)
    leaf = forest.leaf(locate_point(forest, (0.01, 0.01)))

Dependencies:
    - numpy
"""
import itertools
from dataclasses import dataclass

import numpy as np

from errors import ConfigError, ContractViolation, DomainViolationError
from log_config import get_logger

log = get_logger("GRID")

TREE_DEPTH = 20
MAX_SUPPORTED_LEVEL = TREE_DEPTH - 2
EDGE_ONLY = "edge"
EDGE_CORNER = "edge+corner"
_LOOKUP_CHUNK = 8192


@dataclass(frozen=True)
class Domain:
    """The cube [-M, M]^n with its refinement cap L."""
    dimension: int
    half_width: float
    max_level: int

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ConfigError(f"dimension must be 2 or 3, got {self.dimension}")
        if not self.half_width > 1.0:
            raise ConfigError(f"domain half-width M must exceed 1, got {self.half_width}")
        if not 0 <= self.max_level <= MAX_SUPPORTED_LEVEL:
            raise ConfigError(f"max level must lie in [0, {MAX_SUPPORTED_LEVEL}], got {self.max_level}")

    @property
    def extent(self):
        return 2.0 * self.half_width

    @property
    def dx_min(self):
        return self.extent / 2 ** self.max_level

    def edge(self, level):
        return self.extent / 2.0 ** np.asarray(level)

    def with_max_level(self, max_level):
        return Domain(self.dimension, self.half_width, max_level)


@dataclass(frozen=True)
class Leaf:
    index: int
    level: int
    center: tuple
    edge: float
    id: int
    path: tuple


@dataclass
class Remap:
    """
    Old-to-new bookkeeping of one topology change.

    origin[i] is the old leaf a new leaf i descends from (the parent for
    refined children, the first child for coarsened parents, itself when
    kept). is_new marks leaves that did not exist before.
    """
    origin: np.ndarray
    is_new: np.ndarray

    @classmethod
    def identity(cls, count):
        return cls(np.arange(count), np.zeros(count, dtype=bool))

    def then(self, later):
        return Remap(self.origin[later.origin], later.is_new | self.is_new[later.origin])


def _morton(coords):
    coords = np.asarray(coords, dtype=np.int64)
    n = coords.shape[1]
    key = np.zeros(coords.shape[0], dtype=np.int64)
    for bit in range(TREE_DEPTH):
        for d in range(n):
            key |= ((coords[:, d] >> bit) & 1) << (bit * n + d)
    return key


def _child_offsets(dimension):
    """Child c sits at bit (c >> d) & 1 along axis d; matches Morton order."""
    return np.array([[(c >> d) & 1 for d in range(dimension)] for c in range(2 ** dimension)], dtype=np.int64)


def _lookup_templates(dimension, mode):
    """
    Lookup points (in quarters of the leaf size, plus a -1 unit shift) that hit
    every same-size, coarser or one-level-finer leaf adjacent to a leaf.
    """
    quarters, shifts = [], []
    for direction in itertools.product((-1, 0, 1), repeat=dimension):
        nonzero = sum(1 for e in direction if e)
        if nonzero == 0 or (mode == EDGE_ONLY and nonzero != 1):
            continue
        free = [(1, 3) if e == 0 else ((0,) if e < 0 else (4,)) for e in direction]
        for q in itertools.product(*free):
            quarters.append(q)
            shifts.append(tuple(-1 if e < 0 else 0 for e in direction))
    return np.array(quarters, dtype=np.int64), np.array(shifts, dtype=np.int64)


class Forest:
    """
    Linear quadtree/octree: leaves sorted by the Morton key of their anchor
    (lowest corner) at TREE_DEPTH resolution. Instances are never mutated;
    refine/coarsen/balance return new forests.
    """

    def __init__(self, domain, levels, anchors, _presorted=False):
        self.domain = domain
        levels = np.asarray(levels, dtype=np.int64)
        anchors = np.asarray(anchors, dtype=np.int64).reshape(len(levels), domain.dimension)
        keys = _morton(anchors)
        if not _presorted:
            order = np.argsort(keys, kind="stable")
            levels, anchors, keys = levels[order], anchors[order], keys[order]
            self.order = order
        else:
            self.order = np.arange(len(levels))
        self.levels = levels
        self.anchors = anchors
        self.keys = keys
        self._centers = None
        self._tables = {}
        self._balanced = None

    @classmethod
    def uniform(cls, domain, level):
        if level > domain.max_level:
            raise ConfigError(f"uniform level {level} exceeds max level {domain.max_level}")
        n = domain.dimension
        side = 2 ** level
        size = 2 ** (TREE_DEPTH - level)
        grid = np.array(list(itertools.product(range(side), repeat=n)), dtype=np.int64)[:, ::-1]
        return cls(domain, np.full(len(grid), level), grid * size)

    def with_domain(self, domain):
        """Same leaves under a different refinement cap (run-level change of L)."""
        if domain.dimension != self.domain.dimension or domain.half_width != self.domain.half_width:
            raise ConfigError("only the max level may change between forests")
        return Forest(domain, self.levels, self.anchors, _presorted=True)

    def __len__(self):
        return len(self.levels)

    @property
    def dimension(self):
        return self.domain.dimension

    @property
    def level_bounds(self):
        return int(self.levels.min()), int(self.levels.max())

    @property
    def sizes(self):
        """Leaf edge in TREE_DEPTH units."""
        return np.left_shift(np.int64(1), TREE_DEPTH - self.levels)

    @property
    def edges(self):
        return self.domain.edge(self.levels)

    @property
    def centers(self):
        if self._centers is None:
            unit = self.domain.extent / 2 ** TREE_DEPTH
            half = (self.sizes / 2.0)[:, None]
            self._centers = -self.domain.half_width + (self.anchors + half) * unit
        return self._centers

    @property
    def volumes(self):
        return self.edges ** self.dimension

    @property
    def ids(self):
        """Stable ids: level offset plus Morton index within the level."""
        n = self.dimension
        offsets = np.array([sum(2 ** (n * k) for k in range(l)) for l in range(TREE_DEPTH + 1)], dtype=np.int64)
        return offsets[self.levels] + (self.keys >> (n * (TREE_DEPTH - self.levels)))

    def leaf(self, index):
        level = int(self.levels[index])
        path = []
        for k in range(1, level + 1):
            bits = (self.anchors[index] >> (TREE_DEPTH - k)) & 1
            path.append(int(sum(int(b) << d for d, b in enumerate(bits))))
        return Leaf(index=int(index), level=level, center=tuple(float(c) for c in self.centers[index]),
                    edge=float(self.edges[index]), id=int(self.ids[index]), path=tuple(path))

    # ------------------------------------------------------------------
    # point location
    # ------------------------------------------------------------------
    def integer_coords(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        m = self.domain.half_width
        outside = np.any((points < -m) | (points > m) | ~np.isfinite(points), axis=1)
        if np.any(outside):
            bad = points[np.argmax(outside)]
            raise DomainViolationError(f"point {tuple(bad)} lies outside [-{m}, {m}]^{self.dimension}")
        scaled = np.floor((points + m) / (2.0 * m) * 2 ** TREE_DEPTH).astype(np.int64)
        return np.minimum(scaled, 2 ** TREE_DEPTH - 1)

    def locate(self, points):
        """Leaf index for each row of `points` (half-open cells)."""
        keys = _morton(self.integer_coords(points))
        return np.searchsorted(self.keys, keys, side="right") - 1

    def _locate_integer(self, coords):
        return np.searchsorted(self.keys, _morton(coords), side="right") - 1

    # ------------------------------------------------------------------
    # adjacency
    # ------------------------------------------------------------------
    def _lookup(self, mode, lo, hi):
        quarters, shifts = _lookup_templates(self.dimension, mode)
        sizes = self.sizes[lo:hi]
        coords = (self.anchors[lo:hi, None, :] + (quarters[None, :, :] * sizes[:, None, None]) // 4
                  + shifts[None, :, :])
        owner = np.repeat(np.arange(lo, hi), len(quarters))
        coords = coords.reshape(-1, self.dimension)
        inside = np.all((coords >= 0) & (coords < 2 ** TREE_DEPTH), axis=1)
        return owner[inside], self._locate_integer(coords[inside])

    def neighbor_table(self, mode=EDGE_CORNER):
        """CSR (indptr, indices) of neighbors for every leaf, sorted per leaf."""
        if mode not in self._tables:
            owners, hits = [], []
            for lo in range(0, len(self), _LOOKUP_CHUNK):
                o, h = self._lookup(mode, lo, min(lo + _LOOKUP_CHUNK, len(self)))
                owners.append(o)
                hits.append(h)
            owner = np.concatenate(owners) if owners else np.zeros(0, dtype=np.int64)
            hit = np.concatenate(hits) if hits else np.zeros(0, dtype=np.int64)
            pair = np.unique(owner * len(self) + hit)
            owner, hit = pair // len(self), pair % len(self)
            keep = owner != hit
            owner, hit = owner[keep], hit[keep]
            indptr = np.zeros(len(self) + 1, dtype=np.int64)
            np.add.at(indptr, owner + 1, 1)
            self._tables[mode] = (np.cumsum(indptr), hit)
        return self._tables[mode]

    def neighbors_of(self, index, mode=EDGE_CORNER):
        indptr, indices = self.neighbor_table(mode)
        return indices[indptr[index]:indptr[index + 1]]

    def neighbor_pairs(self, mode=EDGE_CORNER):
        indptr, indices = self.neighbor_table(mode)
        return np.repeat(np.arange(len(self)), np.diff(indptr)), indices

    def dilate(self, mask, layers, mode=EDGE_CORNER):
        """Grows a leaf mask by `layers` neighbor rings."""
        mask = np.asarray(mask, dtype=bool).copy()
        owner, nb = self.neighbor_pairs(mode)
        for _ in range(int(layers)):
            grown = mask.copy()
            grown[nb[mask[owner]]] = True
            if np.array_equal(grown, mask):
                break
            mask = grown
        return mask

    def imbalance(self):
        """
        Indices of leaves that have an adjacent leaf two or more levels finer.
        Detected from the finer side, whose lookup points always land in the coarse
        neighbor.
        """
        coarse = []
        for lo in range(0, len(self), _LOOKUP_CHUNK):
            owner, hit = self._lookup(EDGE_CORNER, lo, min(lo + _LOOKUP_CHUNK, len(self)))
            bad = self.levels[owner] - self.levels[hit] >= 2
            coarse.append(hit[bad])
        if not coarse:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(coarse))

    @property
    def balanced(self):
        if self._balanced is None:
            self._balanced = len(self.imbalance()) == 0
        return self._balanced

    # ------------------------------------------------------------------
    # sibling families
    # ------------------------------------------------------------------
    def families(self):
        """(m, 2^n) array of complete sibling families present as leaves."""
        n = self.dimension
        count = 2 ** n
        if len(self) < count:
            return np.zeros((0, count), dtype=np.int64)
        levels, keys = self.levels, self.keys
        first = np.zeros(len(self), dtype=bool)
        shift = TREE_DEPTH - levels
        is_first_child = (levels >= 1) & np.all(((self.anchors >> shift[:, None]) & 1) == 0, axis=1)
        candidates = np.nonzero(is_first_child[: len(self) - count + 1])[0]
        ok = np.ones(len(candidates), dtype=bool)
        stride = np.left_shift(np.int64(1), n * shift[candidates])
        for c in range(1, count):
            j = candidates + c
            ok &= (levels[j] == levels[candidates]) & (keys[j] == keys[candidates] + c * stride)
        first[candidates[ok]] = True
        starts = np.nonzero(first)[0]
        return starts[:, None] + np.arange(count)[None, :]


# ----------------------------------------------------------------------
# operations
# ----------------------------------------------------------------------

def locate_point(forest, x):
    """The unique leaf whose half-open cell contains x."""
    return int(forest.locate(np.asarray(x, dtype=float)[None, :])[0])


def neighbors(forest, leaf, mode=EDGE_CORNER):
    """Neighbor leaf indices of `leaf` (an index or a Leaf)."""
    index = leaf.index if isinstance(leaf, Leaf) else int(leaf)
    return forest.neighbors_of(index, mode)


def _transfer(values, origin, children_of=None, child_points=None, polys=None):
    out = {}
    for name, arr in (values or {}).items():
        arr = np.asarray(arr)
        moved = arr[origin].copy() if len(origin) else np.zeros((0,) + arr.shape[1:], dtype=arr.dtype)
        out[name] = moved
    if polys and children_of is not None:
        for name, poly in polys.items():
            if name not in out:
                continue
            vals = np.asarray(poly.evaluate(child_points)).reshape(-1)
            out[name][children_of] = vals
    return out


def refine_leaves(forest, indices, values=None, polys=None):
    """
    Splits each listed leaf into 2^n children. Values named in `polys` are
    set on children by evaluating the parent's reconstruction (an object with
    evaluate(points) over an (m, 2^n, n) array, aligned with `indices`);
    other values are copied from the parent.

    Returns (forest, values, remap, skipped) where skipped counts leaves
    already at the max level.
    """
    indices = np.unique(np.asarray(indices, dtype=np.int64))
    capped = forest.levels[indices] >= forest.domain.max_level
    skipped = int(np.count_nonzero(capped))
    if skipped:
        log.warning(f"refinement past max level ignored for {skipped} leaves")
    if polys:
        keep_rows = ~capped
        polys = {name: (p.subset(keep_rows) if skipped else p) for name, p in polys.items()}
    indices = indices[~capped]
    if len(indices) == 0:
        return forest, dict(values or {}), Remap.identity(len(forest)), skipped

    n = forest.dimension
    count = 2 ** n
    offsets = _child_offsets(n)
    half = (forest.sizes[indices] // 2)[:, None, None]
    child_anchors = (forest.anchors[indices][:, None, :] + offsets[None, :, :] * half).reshape(-1, n)
    child_levels = np.repeat(forest.levels[indices] + 1, count)

    keep = np.ones(len(forest), dtype=bool)
    keep[indices] = False
    kept = np.nonzero(keep)[0]
    levels = np.concatenate([forest.levels[kept], child_levels])
    anchors = np.concatenate([forest.anchors[kept], child_anchors])
    origin = np.concatenate([kept, np.repeat(indices, count)])
    is_new = np.concatenate([np.zeros(len(kept), dtype=bool), np.ones(len(child_levels), dtype=bool)])

    new = Forest(forest.domain, levels, anchors)
    origin, is_new = origin[new.order], is_new[new.order]

    child_points = None
    children_of = None
    if polys:
        # child rows in sorted order, grouped per parent in `indices` order
        rank = np.empty(len(origin), dtype=np.int64)
        rank[new.order] = np.arange(len(origin))
        children_of = rank[len(kept):].reshape(len(indices), count).reshape(-1)
        child_points = new.centers[children_of].reshape(len(indices), count, n)
    moved = _transfer(values, origin, children_of, child_points, polys)
    return new, moved, Remap(origin, is_new), skipped


def refine_leaf(forest, leaf, field, recon):
    """
    Single-leaf refinement: `field` is the value array, `recon` the leaf's
    LocalPolynomial. Returns (forest, field, remap); a leaf at the max level
    is left untouched (remap.is_new all False).
    """
    index = leaf.index if isinstance(leaf, Leaf) else int(leaf)
    new, moved, remap, _ = refine_leaves(forest, [index], {"phi": field}, {"phi": recon})
    return new, moved["phi"], remap


def nearest_references(groups, size, points, dist, k):
    """
    Per group id in [0, size): the k nearest distinct points, nearest first
    (ties broken by coordinates). Rows with a non-finite distance are ignored.

    Returns (dist (size, k), points (size, k, n), pick (size, k)) where pick
    indexes the input rows; unfilled slots hold inf / nan / -1.
    """
    groups = np.asarray(groups, dtype=np.int64)
    points = np.asarray(points, dtype=float)
    dist = np.asarray(dist, dtype=float)
    n = points.shape[1]
    out_d = np.full((size, k), np.inf)
    out_p = np.full((size, k, n), np.nan)
    out_i = np.full((size, k), -1, dtype=np.int64)
    valid = np.nonzero(np.isfinite(dist))[0]
    if len(valid) == 0:
        return out_d, out_p, out_i
    keys = tuple(points[valid, d] for d in range(n - 1, -1, -1)) + (dist[valid], groups[valid])
    order = valid[np.lexsort(keys)]
    g, p = groups[order], points[order]
    dup = np.zeros(len(order), dtype=bool)
    dup[1:] = (g[1:] == g[:-1]) & np.all(p[1:] == p[:-1], axis=1)
    order, g = order[~dup], g[~dup]
    start = np.ones(len(g), dtype=bool)
    start[1:] = g[1:] != g[:-1]
    first = np.maximum.accumulate(np.where(start, np.arange(len(g)), 0))
    rank = np.arange(len(g)) - first
    keep = rank < k
    order, g, rank = order[keep], g[keep], rank[keep]
    out_d[g, rank] = dist[order]
    out_p[g, rank] = points[order]
    out_i[g, rank] = order
    return out_d, out_p, out_i


def coarsen_families(forest, families, values=None, reducers=None):
    """
    Replaces each complete sibling family (rows of `families`) by its parent.
    Scalars are averaged; names mapped to "nearest" in `reducers` hold
    reference points, one (m, n) or several (m, k, n) per leaf, and keep the
    child points nearest to the parent center.
    """
    families = np.atleast_2d(np.asarray(families, dtype=np.int64))
    n = forest.dimension
    count = 2 ** n
    if families.size == 0:
        return forest, dict(values or {}), Remap.identity(len(forest))
    if families.shape[1] != count:
        raise ContractViolation(f"sibling family must have {count} members")
    lv = forest.levels[families]
    if np.any(lv != lv[:, :1]) or np.any(lv[:, 0] < 1):
        raise ContractViolation("coarsening requires complete sibling families at equal level")
    sizes = forest.sizes[families[:, 0]]
    parent_anchor = (forest.anchors[families[:, 0]] // (2 * sizes[:, None])) * (2 * sizes[:, None])
    expected = parent_anchor[:, None, :] + _child_offsets(n)[None, :, :] * sizes[:, None, None]
    if not np.array_equal(np.sort(_morton(forest.anchors[families].reshape(-1, n)).reshape(-1, count), axis=1),
                          np.sort(_morton(expected.reshape(-1, n)).reshape(-1, count), axis=1)):
        raise ContractViolation("coarsening requires complete sibling families at equal level")

    keep = np.ones(len(forest), dtype=bool)
    keep[families.reshape(-1)] = False
    kept = np.nonzero(keep)[0]
    levels = np.concatenate([forest.levels[kept], lv[:, 0] - 1])
    anchors = np.concatenate([forest.anchors[kept], parent_anchor])
    new = Forest(forest.domain, levels, anchors)

    origin = np.concatenate([kept, families[:, 0]])[new.order]
    is_new = np.concatenate([np.zeros(len(kept), dtype=bool), np.ones(len(families), dtype=bool)])[new.order]
    rank = np.empty(len(new), dtype=np.int64)
    rank[new.order] = np.arange(len(new))
    parents = rank[len(kept):]

    parent_centers = forest.centers[families].mean(axis=1)
    reducers = reducers or {}
    out = {}
    for name, arr in (values or {}).items():
        arr = np.asarray(arr)
        moved = arr[origin].copy()
        if reducers.get(name) == "nearest" and arr.ndim == 3:
            k = arr.shape[1]
            pool = arr[families].reshape(-1, n)
            groups = np.repeat(np.arange(len(families)), count * k)
            dist = np.linalg.norm(pool - np.repeat(parent_centers, count * k, axis=0), axis=1)
            _, kept_refs, _ = nearest_references(groups, len(families), pool, dist, k)
            moved[parents] = kept_refs
        elif reducers.get(name) == "nearest":
            cand = arr[families]
            dist = np.linalg.norm(cand - parent_centers[:, None, :], axis=2)
            dist = np.where(np.isfinite(dist), dist, np.inf)
            pick = np.argmin(dist, axis=1)
            moved[parents] = cand[np.arange(len(families)), pick]
        else:
            moved[parents] = arr[families].mean(axis=1)
        out[name] = moved
    return new, out, Remap(origin, is_new)


def coarsen_family(forest, children, field):
    """Single-family coarsening; returns (forest, field, parent index)."""
    new, moved, remap = coarsen_families(forest, [children], {"phi": field})
    parent = int(np.nonzero(remap.is_new)[0][0])
    return new, moved["phi"], parent


def balance_2to1(forest, values=None, polys_fn=None):
    """
    Refines coarse leaves until no two adjacent leaves (edge or corner
    contact) differ by more than one level. polys_fn(forest, values, idx)
    returns the reconstructions used to value new children.
    """
    remap = Remap.identity(len(forest))
    values = dict(values or {})
    rounds = 0
    while True:
        coarse = forest.imbalance()
        if len(coarse) == 0:
            break
        polys = polys_fn(forest, values, coarse) if polys_fn else None
        forest, values, step, _ = refine_leaves(forest, coarse, values, polys)
        remap = remap.then(step)
        rounds += 1
    forest._balanced = True
    if rounds:
        log.debug(f"balance: {rounds} refinement rounds, {len(forest)} leaves")
    return forest, values, remap


def adapt(forest, values, polys_fn, gamma, min_level=0, phi_name="phi", reducers=None):
    """
    Coarsens sibling families with no |phi| < gamma member (down to
    min_level), refines leaves with |phi| < gamma up to the max level, then
    balances. Returns (forest, values, remap).
    """
    remap = Remap.identity(len(forest))
    values = dict(values)
    while True:
        fam = forest.families()
        if len(fam) == 0:
            break
        phi = values[phi_name]
        # a mixed-sign family would average into the band and be split again
        quiet = (np.all(np.abs(phi[fam]) >= gamma, axis=1) & (np.abs(phi[fam].mean(axis=1)) >= gamma)
                 & (forest.levels[fam[:, 0]] > min_level))
        if not np.any(quiet):
            break
        forest, values, step = coarsen_families(forest, fam[quiet], values, reducers)
        remap = remap.then(step)

    # balancing can create band leaves below the cap, so refine and balance until both are stable
    while True:
        phi = values[phi_name]
        marked = np.nonzero((np.abs(phi) < gamma) & (forest.levels < forest.domain.max_level))[0]
        if len(marked):
            forest, values, step, _ = refine_leaves(forest, marked, values, polys_fn(forest, values, marked))
            remap = remap.then(step)
            continue
        forest, values, step = balance_2to1(forest, values, polys_fn)
        remap = remap.then(step)
        if not step.is_new.any():
            break
    return forest, values, remap


def write_vtk(path, forest, cell_data=None, title="adaptive level-set grid"):
    """Legacy ASCII unstructured grid, one pixel/voxel cell per leaf."""
    n = forest.dimension
    corners = np.array(list(itertools.product((0, 1), repeat=n)))[:, ::-1]  # x fastest: VTK pixel/voxel order
    half = forest.edges[:, None, None] / 2.0
    pts = forest.centers[:, None, :] + (2 * corners[None, :, :] - 1) * half
    if n == 2:
        pts = np.concatenate([pts, np.zeros(pts.shape[:2] + (1,))], axis=2)
    pts = pts.reshape(-1, 3)
    per = 2 ** n
    cell_type = 8 if n == 2 else 11
    with open(path, "w") as f:
        f.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {len(pts)} double\n")
        np.savetxt(f, pts, fmt="%.9g")
        f.write(f"CELLS {len(forest)} {len(forest) * (per + 1)}\n")
        conn = np.hstack([np.full((len(forest), 1), per), np.arange(len(forest) * per).reshape(-1, per)])
        np.savetxt(f, conn, fmt="%d")
        f.write(f"CELL_TYPES {len(forest)}\n")
        np.savetxt(f, np.full(len(forest), cell_type), fmt="%d")
        data = {"level": forest.levels}
        data.update(cell_data or {})
        f.write(f"CELL_DATA {len(forest)}\n")
        for name, arr in data.items():
            arr = np.asarray(arr, dtype=float)
            arr = np.where(np.isfinite(arr), arr, 1e30)
            f.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            np.savetxt(f, arr, fmt="%.12g")
    log.debug(f"wrote {len(forest)} leaves to {path}")
