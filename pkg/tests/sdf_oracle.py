"""Independent distance-field oracle built from dense surface sampling.

Used by the distance-field unit tests and the acceptance suite.  The oracle
never calls into the package: it rebuilds the pose from raw numbers, decides
inside/outside with closed-form membership tests, and approximates |distance|
as the minimum Euclidean distance to a dense cloud of points sampled on the
primitive's surface.  With m samples on a surface of area A the approximation
error is O(sqrt(A / m)).
"""

import numpy as np


def quat_matrix(q) -> np.ndarray:
    """Body-to-world rotation matrix of a unit quaternion (w, x, y, z)."""
    w, x, y, z = (float(v) for v in q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def box_surface(dims, m: int, rng: np.random.Generator) -> np.ndarray:
    """m points uniform on the surface of the local box |p| <= dims."""
    hx, hy, hz = dims
    areas = np.array([hy * hz, hy * hz, hx * hz, hx * hz, hx * hy, hx * hy])
    face = rng.choice(6, size=m, p=areas / areas.sum())
    u = rng.uniform(-1.0, 1.0, size=(m, 2))
    pts = np.empty((m, 3))
    for f, (fixed_ax, sign) in enumerate([(0, 1), (0, -1), (1, 1), (1, -1), (2, 1), (2, -1)]):
        sel = face == f
        free = [ax for ax in range(3) if ax != fixed_ax]
        pts[sel, fixed_ax] = sign * dims[fixed_ax]
        pts[sel, free[0]] = u[sel, 0] * dims[free[0]]
        pts[sel, free[1]] = u[sel, 1] * dims[free[1]]
    return pts


def cylinder_surface(radius: float, half_height: float, m: int,
                     rng: np.random.Generator) -> np.ndarray:
    """m points uniform on a capped cylinder about the local z axis."""
    lateral = 2.0 * np.pi * radius * (2.0 * half_height)
    cap = np.pi * radius * radius
    areas = np.array([lateral, cap, cap])
    part = rng.choice(3, size=m, p=areas / areas.sum())
    theta = rng.uniform(0.0, 2.0 * np.pi, size=m)
    pts = np.empty((m, 3))
    side = part == 0
    pts[side, 0] = radius * np.cos(theta[side])
    pts[side, 1] = radius * np.sin(theta[side])
    pts[side, 2] = rng.uniform(-half_height, half_height, size=int(side.sum()))
    for which, z in ((1, half_height), (2, -half_height)):
        sel = part == which
        r = radius * np.sqrt(rng.uniform(0.0, 1.0, size=int(sel.sum())))
        pts[sel, 0] = r * np.cos(theta[sel])
        pts[sel, 1] = r * np.sin(theta[sel])
        pts[sel, 2] = z
    return pts


def sphere_surface(radius: float, m: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=(m, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return radius * v


def contains_local(kind: str, dims, local: np.ndarray) -> np.ndarray:
    """Closed-form membership test in the primitive's local frame."""
    if kind == "box":
        return np.all(np.abs(local) <= np.asarray(dims), axis=1)
    if kind == "cylinder":
        radius, half_height = dims
        return (np.hypot(local[:, 0], local[:, 1]) <= radius) & \
               (np.abs(local[:, 2]) <= half_height)
    if kind == "sphere":
        return np.linalg.norm(local, axis=1) <= dims[0]
    raise ValueError(f"unknown kind {kind!r}")


def sample_surface(kind: str, dims, m: int, rng: np.random.Generator) -> np.ndarray:
    if kind == "box":
        return box_surface(dims, m, rng)
    if kind == "cylinder":
        return cylinder_surface(dims[0], dims[1], m, rng)
    if kind == "sphere":
        return sphere_surface(dims[0], m, rng)
    raise ValueError(f"unknown kind {kind!r}")


def oracle_signed_distance(kind: str, center, quat, dims, queries: np.ndarray,
                           m: int, rng: np.random.Generator) -> np.ndarray:
    """Approximate signed distance of world-frame queries to one primitive."""
    center = np.asarray(center, dtype=np.float64)
    rot = quat_matrix(quat)
    surf_world = center + sample_surface(kind, dims, m, rng) @ rot.T
    queries = np.asarray(queries, dtype=np.float64)
    local = (queries - center) @ rot
    inside = contains_local(kind, dims, local)

    ss = np.einsum("ij,ij->i", surf_world, surf_world)
    dist = np.empty(queries.shape[0])
    for lo in range(0, queries.shape[0], 128):
        hi = min(queries.shape[0], lo + 128)
        q = queries[lo:hi]
        qq = np.einsum("ij,ij->i", q, q)
        d2 = qq[:, None] + ss[None, :] - 2.0 * (q @ surf_world.T)
        np.maximum(d2, 0.0, out=d2)
        dist[lo:hi] = np.sqrt(d2.min(axis=1))
    return np.where(inside, -dist, dist)


def fd_gradient(fn, points: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar field at (n, 3) points."""
    points = np.asarray(points, dtype=np.float64)
    grad = np.empty_like(points)
    for ax in range(3):
        step = np.zeros(3)
        step[ax] = h
        grad[:, ax] = (fn(points + step) - fn(points - step)) / (2.0 * h)
    return grad
