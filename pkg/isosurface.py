"""
isosurface.py - Zero level-set extraction

Resamples phi through the leaf reconstructions onto a uniform virtual grid at
dx_min covering the narrow band, then runs marching squares (2D polylines) or
marching cubes (3D triangles) from scikit-image. Output coordinates are
mapped back to the input frame of the cloud when a transform is given.

Usage:
    from isosurface import extract_isosurface
    mesh = extract_isosurface(phi, forest, gamma, operator="cweno", cloud=cloud)
    mesh.watertight

Dependencies:
    - numpy
    - scikit-image (measure.find_contours, measure.marching_cubes)
    - scipy (connected components of the triangle graph)
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from skimage import measure

from errors import EmptyBandError
from log_config import get_logger
from parallel import chunked_map, concat
from recon_ops import Reconstructor

log = get_logger("EXPORT")

_PAD_NODES = 2
_SAMPLE_CHUNK = 262144


@dataclass
class Mesh:
    dimension: int
    vertices: np.ndarray = None
    faces: np.ndarray = None
    polylines: list = field(default_factory=list)
    closed: list = field(default_factory=list)
    touches_box: bool = False

    def edge_use_counts(self):
        """Number of triangles using each undirected edge (3D)."""
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        e.sort(axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return counts

    @property
    def watertight(self):
        if self.dimension == 2:
            return bool(self.polylines) and all(self.closed) and not self.touches_box
        if self.faces is None or len(self.faces) == 0:
            return False
        return bool(np.all(self.edge_use_counts() == 2))

    def components(self):
        """Number of connected triangle components (3D)."""
        used = np.unique(self.faces)
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]]])
        graph = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(len(self.vertices),) * 2)
        _, labels = connected_components(graph, directed=False)
        return len(np.unique(labels[used]))


def sample_grid(phi, forest, gamma, operator="p1", workers=None):
    """(values, origin, spacing) on the padded virtual grid over the band."""
    phi = np.asarray(phi, dtype=float)
    band = np.abs(phi) < gamma
    if not np.any(band):
        raise EmptyBandError("cannot extract a surface from an empty band")
    dx = forest.domain.dx_min
    m = forest.domain.half_width
    half = forest.edges[band][:, None] / 2.0
    lo = (forest.centers[band] - half).min(axis=0) - _PAD_NODES * dx
    hi = (forest.centers[band] + half).max(axis=0) + _PAD_NODES * dx
    lo, hi = np.maximum(lo, -m), np.minimum(hi, m)
    shape = tuple(int(np.floor((h - l) / dx + 1e-9)) + 1 for l, h in zip(lo, hi))
    axes = [lo[d] + dx * np.arange(shape[d]) for d in range(forest.dimension)]
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, forest.dimension)
    rec = Reconstructor(forest, phi, operator, workers=workers)
    leaves = forest.locate(nodes)
    rec.ensure(np.unique(leaves))
    parts = chunked_map(lambda a, b: rec.poly.evaluate_at(nodes[a:b], leaves[a:b]), len(nodes), workers,
                        chunk=_SAMPLE_CHUNK)
    return concat(parts).reshape(shape), lo, dx


def _on_box(values):
    faces = []
    for d in range(values.ndim):
        faces.append(np.take(values, 0, axis=d).ravel())
        faces.append(np.take(values, -1, axis=d).ravel())
    return bool(np.any(np.concatenate(faces) <= 0.0))


def extract_isosurface(phi, forest, gamma, operator="p1", cloud=None, workers=None):
    """Zero level set of phi as polylines (2D) or a triangle mesh (3D)."""
    values, origin, dx = sample_grid(phi, forest, gamma, operator, workers)
    to_out = cloud.to_original if cloud is not None else (lambda x: x)
    mesh = Mesh(dimension=forest.dimension, touches_box=_on_box(values))
    if not values.min() < 0.0 < values.max():
        log.warning("no zero crossing on the sampling grid: empty surface")
        if mesh.dimension == 3:
            mesh.vertices, mesh.faces = np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64)
        return mesh
    if forest.dimension == 2:
        for line in measure.find_contours(values, 0.0):
            closed = bool(np.allclose(line[0], line[-1]))
            mesh.polylines.append(to_out(origin + dx * line))
            mesh.closed.append(closed)
    else:
        verts, faces, _, _ = measure.marching_cubes(values, level=0.0, spacing=(dx, dx, dx),
                                                    allow_degenerate=False)
        mesh.vertices = to_out(origin + verts)
        mesh.faces = faces
    if mesh.touches_box:
        log.warning("zero level set touches the sampling box: surface is not watertight")
    elif not mesh.watertight:
        log.warning("extracted surface is not watertight")
    count = len(mesh.polylines) if mesh.dimension == 2 else len(mesh.faces)
    log.info(f"extracted {count} {'polylines' if mesh.dimension == 2 else 'triangles'} at spacing {dx:.4g}")
    return mesh
