"""
shapes.py - Synthetic test shapes

Point samplers and exact signed distance functions for the reconstruction
gallery. Everything is expressed in the shape's own (unscaled) coordinates;
callers map through PointCloud.to_original / scale when working in the
computational box.

Shapes:
    circle        unit circle
    sphere        unit sphere (Fibonacci sampling)
    square        axis-aligned square of side 2, 24 boundary points
    heart         24 points on a heart curve (no exact SDF)
    cube-spheres  cube of edge 0.8, a sphere of radius 0.25 on an edge
                  midpoint, spheres of radius 0.15 on both vertices of the
                  opposite edge; rotated off the grid axes
                  (cube-spheres-aligned: same solid without the rotation)
    tunnel        two parallel open rows of points (2D channel)
"""
import math

import numpy as np

from errors import ConfigError

CUBE_HALF = 0.4
BIG_RADIUS = 0.25
SMALL_RADIUS = 0.15
CUBE_SPHERES_POINTS = 2346
_ROTATION_ANGLES = (0.37, 0.61, 0.23)
_ON_BOUNDARY = 1e-9
_DEPTH_CHUNK = 8192


def _rotation(angles):
    a, b, c = angles
    rx = np.array([[1, 0, 0], [0, math.cos(a), -math.sin(a)], [0, math.sin(a), math.cos(a)]])
    ry = np.array([[math.cos(b), 0, math.sin(b)], [0, 1, 0], [-math.sin(b), 0, math.cos(b)]])
    rz = np.array([[math.cos(c), -math.sin(c), 0], [math.sin(c), math.cos(c), 0], [0, 0, 1]])
    return rz @ ry @ rx


ROTATION = _rotation(_ROTATION_ANGLES)


def box_sdf(x, half):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    q = np.abs(x) - half
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
    inside = np.minimum(q.max(axis=1), 0.0)
    return outside + inside


def ball_sdf(x, center, radius):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return np.linalg.norm(x - np.asarray(center, dtype=float), axis=1) - radius


# ----------------------------------------------------------------------
# samplers
# ----------------------------------------------------------------------

def sample_circle(count=64, radius=1.0):
    t = 2.0 * np.pi * np.arange(count) / count
    return radius * np.stack([np.cos(t), np.sin(t)], axis=1)


def sample_sphere(count=500, radius=1.0):
    k = np.arange(count) + 0.5
    polar = np.arccos(1.0 - 2.0 * k / count)
    azimuth = np.pi * (1.0 + 5.0 ** 0.5) * k
    return radius * np.stack([np.cos(azimuth) * np.sin(polar), np.sin(azimuth) * np.sin(polar), np.cos(polar)], axis=1)


def sample_square(count=24, half=1.0):
    """Equally spaced points on the boundary, starting at a corner."""
    s = 8.0 * half * np.arange(count) / count
    side = (s // (2.0 * half)).astype(int)
    u = s - side * 2.0 * half - half
    pts = np.empty((count, 2))
    for k, (x, y) in enumerate(zip(u, side)):
        pts[k] = [(x, -half), (half, x), (-x, half), (-half, -x)][y]
    return pts


def sample_heart(count=24):
    t = 2.0 * np.pi * np.arange(count) / count
    x = 16.0 * np.sin(t) ** 3
    y = 13.0 * np.cos(t) - 5.0 * np.cos(2 * t) - 2.0 * np.cos(3 * t) - np.cos(4 * t)
    return np.stack([x, y], axis=1) / 16.0


def sample_tunnel(length=2.0, gap=0.4, spacing=0.04):
    xs = np.arange(-length / 2.0, length / 2.0 + 0.5 * spacing, spacing)
    lower = np.stack([xs, np.full_like(xs, -gap / 2.0)], axis=1)
    upper = np.stack([xs, np.full_like(xs, gap / 2.0)], axis=1)
    return np.concatenate([lower, upper])


def _cube_spheres_parts():
    h = CUBE_HALF
    big = (np.array([0.0, h, h]), BIG_RADIUS)
    small = [(np.array([-h, -h, -h]), SMALL_RADIUS), (np.array([h, -h, -h]), SMALL_RADIUS)]
    return big, small


def _primitive_min(x):
    """Min of the primitive distances: exact outside the union, zero on its boundary."""
    big, small = _cube_spheres_parts()
    parts = [box_sdf(x, CUBE_HALF), ball_sdf(x, *big)] + [ball_sdf(x, *s) for s in small]
    return np.min(np.stack(parts), axis=0)


def _on_union_boundary(p):
    return np.abs(_primitive_min(p)) <= _ON_BOUNDARY


def _nearest_on_sphere(x, center, radius):
    v = x - center
    norm = np.linalg.norm(v, axis=1)
    u = np.where(norm[:, None] > 0, v / np.where(norm > 0, norm, 1.0)[:, None], [1.0, 0.0, 0.0])
    return center + radius * u


def _nearest_on_circle(x, center, radius, axis):
    """Circle in the plane x_axis = center[axis]."""
    v = x - center
    v[:, axis] = 0.0
    norm = np.linalg.norm(v, axis=1)
    spare = np.zeros(3)
    spare[(axis + 1) % 3] = 1.0
    u = np.where(norm[:, None] > 0, v / np.where(norm > 0, norm, 1.0)[:, None], spare)
    return center + radius * u


def _fixed_boundary_points():
    """Box vertices and sphere/edge crossings that lie on the union's boundary."""
    h = CUBE_HALF
    big, small = _cube_spheres_parts()
    pts = [np.array(v, dtype=float) for v in np.ndindex(2, 2, 2)]
    pts = [h * (2.0 * v - 1.0) for v in pts]
    for k in range(3):
        others = [d for d in range(3) if d != k]
        for a in (-h, h):
            for b in (-h, h):
                for center, radius in [big] + small:
                    d2 = (a - center[others[0]]) ** 2 + (b - center[others[1]]) ** 2
                    if d2 > radius ** 2:
                        continue
                    for t in (center[k] - math.sqrt(radius ** 2 - d2), center[k] + math.sqrt(radius ** 2 - d2)):
                        p = np.empty(3)
                        p[k], p[others[0]], p[others[1]] = t, a, b
                        pts.append(p)
    pts = np.array(pts)
    return pts[_on_union_boundary(pts)]


def _boundary_distance(x):
    """
    Distance from each row of x to the union's boundary. The nearest boundary
    point is a critical point of the distance on one boundary stratum, so it
    is among: projections on the face planes and edge lines, nearest points
    on the spheres, nearest points on the sphere/face circles, and the fixed
    vertices and sphere/edge crossings. Candidates off the boundary are dropped.
    """
    h = CUBE_HALF
    big, small = _cube_spheres_parts()
    candidates = []
    for k in range(3):
        for s in (-h, h):
            p = x.copy()
            p[:, k] = s
            candidates.append(p)
        others = [d for d in range(3) if d != k]
        for a in (-h, h):
            for b in (-h, h):
                p = np.empty_like(x)
                p[:, k] = np.clip(x[:, k], -h, h)
                p[:, others[0]], p[:, others[1]] = a, b
                candidates.append(p)
    for center, radius in [big] + small:
        candidates.append(_nearest_on_sphere(x, center, radius))
        for k in range(3):
            for s in (-h, h):
                off = center[k] - s
                if abs(off) < radius:
                    on_plane = center.copy()
                    on_plane[k] = s
                    candidates.append(_nearest_on_circle(x, on_plane, math.sqrt(radius ** 2 - off ** 2), k))
    pts = np.stack(candidates, axis=1)
    valid = _on_union_boundary(pts.reshape(-1, 3)).reshape(len(x), -1)
    dist = np.where(valid, np.linalg.norm(pts - x[:, None, :], axis=2), np.inf)
    fixed = _fixed_boundary_points()
    best = dist.min(axis=1)
    if len(fixed):
        best = np.minimum(best, np.linalg.norm(x[:, None, :] - fixed[None, :, :], axis=2).min(axis=1))
    return best


def cube_spheres_body_sdf(x):
    """
    Exact signed distance to the union of the unrotated primitives. Outside
    it is the min of the primitive distances; inside, the min would only
    bound the depth near the seams, so the distance to the boundary is
    searched explicitly.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = _primitive_min(x)
    inside = np.nonzero(out < 0.0)[0]
    for start in range(0, len(inside), _DEPTH_CHUNK):
        rows = inside[start:start + _DEPTH_CHUNK]
        out[rows] = -_boundary_distance(x[rows])
    return out


def sample_cube_spheres(count=CUBE_SPHERES_POINTS, rng_seed=0, aligned=False):
    """Uniform samples of the union's boundary, area-proportional per primitive."""
    rng = np.random.default_rng(rng_seed)
    big, small = _cube_spheres_parts()
    candidates = []
    # cube faces
    faces = rng.integers(0, 6, size=8 * count)
    uv = rng.uniform(-CUBE_HALF, CUBE_HALF, size=(8 * count, 2))
    axis, sign = faces // 2, np.where(faces % 2 == 0, -1.0, 1.0)
    cube = np.empty((8 * count, 3))
    for k in range(3):
        others = [d for d in range(3) if d != k]
        sel = axis == k
        cube[sel, k] = sign[sel] * CUBE_HALF
        cube[np.ix_(sel, others)] = uv[sel]
    candidates.append(cube)
    area_cube = 6 * (2 * CUBE_HALF) ** 2
    for center, radius in [big] + small:
        m = int(8 * count * 4 * np.pi * radius ** 2 / area_cube) + 1
        v = rng.normal(size=(m, 3))
        candidates.append(center + radius * v / np.linalg.norm(v, axis=1)[:, None])
    pts = np.concatenate(candidates)
    on_surface = _on_union_boundary(pts)
    pts = pts[on_surface]
    pts = pts[rng.permutation(len(pts))[:count]]
    return pts if aligned else pts @ ROTATION.T


SAMPLERS = {
    "circle": sample_circle,
    "sphere": sample_sphere,
    "square": sample_square,
    "heart": sample_heart,
    "cube-spheres": sample_cube_spheres,
    "cube-spheres-aligned": lambda **kw: sample_cube_spheres(aligned=True, **kw),
    "tunnel": sample_tunnel,
}


# ----------------------------------------------------------------------
# exact signed distances
# ----------------------------------------------------------------------

def exact_sdf(name):
    """Signed distance callable (points -> values) in the shape's own frame."""
    if name in ("circle", "sphere"):
        return lambda x: np.linalg.norm(np.atleast_2d(x), axis=1) - 1.0
    if name == "square":
        return lambda x: box_sdf(x, 1.0)
    if name == "cube-spheres":
        return lambda x: cube_spheres_body_sdf(np.atleast_2d(x) @ ROTATION)
    if name == "cube-spheres-aligned":
        return cube_spheres_body_sdf
    raise ConfigError(f"no exact signed distance for shape '{name}'")
