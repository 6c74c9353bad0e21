"""Forward kinematics of a three-fiber soft robotic arm.

The arm is modeled as an extensible filament: a centerline r(z) with an
orthonormal director frame {d1, d2, d3} attached at every material
coordinate z in [0, L].  Fiber activations set an intrinsic Darboux
curvature vector and an intrinsic axial extension, and the unloaded shape
follows from integrating

    r'(z)  = zeta * d3,
    di'(z) = zeta * (u x di),      u = u1*d1 + u2*d2 + u3*d3,

with a classical RK4 scheme.  Frames are re-orthonormalized by
Gram-Schmidt after every step.  All functions are pure and thread-safe.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

# Fiber activation bounds: negative values contract a fiber, extension is
# not allowed.
GAMMA_MIN = -1.67
GAMMA_MAX = 0.0

DEFAULT_LENGTH = 1.0
DEFAULT_N_Z = 100

# Default affine actuation map.  Column 1: a straight off-axis fiber that
# bends about d1.  Columns 2-3: a mirror-symmetric helical pair sharing a
# bending direction (d2) and twisting with opposite signs, so equal pair
# activations produce a twist-free planar shape.  Units: 1/m per unit
# activation.
DEFAULT_CURVATURE_MATRIX = (
    (2.4, 0.0, 0.0),
    (0.0, 1.8, 1.8),
    (0.0, 1.2, -1.2),
)
# Dimensionless axial extension per unit activation; contraction shortens.
DEFAULT_EXTENSION_COEFFS = (0.12, 0.12, 0.12)


class ActivationBoundsError(ValueError):
    """A fiber activation lies outside [GAMMA_MIN, GAMMA_MAX]."""


class ActuationMapError(ValueError):
    """An actuation map admits a non-positive axial extension."""


def as_gamma(value) -> np.ndarray:
    """Validate and canonicalize an activation vector to a (3,) float array."""
    if isinstance(value, ActivationVector):
        return value.gamma
    gamma = np.asarray(value, dtype=np.float64).reshape(-1)
    if gamma.shape != (3,):
        raise ActivationBoundsError(f"expected 3 fiber activations, got shape {gamma.shape}")
    if not np.all(np.isfinite(gamma)):
        raise ActivationBoundsError(f"non-finite activation {gamma}")
    if np.any(gamma < GAMMA_MIN) or np.any(gamma > GAMMA_MAX):
        raise ActivationBoundsError(
            f"activation {gamma.tolist()} outside [{GAMMA_MIN}, {GAMMA_MAX}]"
        )
    return gamma


@dataclass(frozen=True)
class ActivationVector:
    """Activations of the three fibers, each in [GAMMA_MIN, GAMMA_MAX]."""

    gamma: np.ndarray

    def __post_init__(self):
        if isinstance(self.gamma, ActivationVector):  # pragma: no cover - misuse guard
            raise TypeError("nested ActivationVector")
        object.__setattr__(self, "gamma", as_gamma(self.gamma))

    @classmethod
    def zero(cls) -> "ActivationVector":
        return cls(np.zeros(3))


@dataclass(frozen=True)
class IntrinsicState:
    """Intrinsic Darboux curvatures (1/m) and axial extension (dimensionless)."""

    u_hat: np.ndarray
    zeta_hat: float

    def __post_init__(self):
        u = np.asarray(self.u_hat, dtype=np.float64).reshape(-1)
        if u.shape != (3,) or not np.all(np.isfinite(u)):
            raise ValueError(f"invalid intrinsic curvature {self.u_hat}")
        z = float(self.zeta_hat)
        if not np.isfinite(z) or z <= 0.0:
            raise ValueError(f"intrinsic extension must be > 0, got {z}")
        object.__setattr__(self, "u_hat", u)
        object.__setattr__(self, "zeta_hat", z)


def _activation_box_corners() -> np.ndarray:
    corners = np.array(
        [[GAMMA_MIN if i & (1 << j) else GAMMA_MAX for j in range(3)] for i in range(8)],
        dtype=np.float64,
    )
    return corners


@dataclass(frozen=True)
class ActuationMap:
    """Affine map from fiber activations to intrinsic curvature and extension.

    u_hat(gamma) = curvature_matrix @ gamma        [1/m]
    zeta_hat(gamma) = 1 + extension_coeffs . gamma [-]

    Construction fails if zeta_hat can reach <= 0 anywhere on the
    activation box (the affine form attains its extrema at the corners).
    """

    curvature_matrix: np.ndarray
    extension_coeffs: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.curvature_matrix, dtype=np.float64)
        c = np.asarray(self.extension_coeffs, dtype=np.float64).reshape(-1)
        if b.shape != (3, 3) or not np.all(np.isfinite(b)):
            raise ActuationMapError(f"curvature matrix must be finite 3x3, got {b!r}")
        if c.shape != (3,) or not np.all(np.isfinite(c)):
            raise ActuationMapError(f"extension coefficients must be 3 finite reals, got {c!r}")
        min_zeta = 1.0 + (_activation_box_corners() @ c).min()
        if min_zeta <= 0.0:
            raise ActuationMapError(
                f"axial extension reaches {min_zeta:.6g} <= 0 on the activation box"
            )
        object.__setattr__(self, "curvature_matrix", b)
        object.__setattr__(self, "extension_coeffs", c)

    def min_extension(self) -> float:
        """Smallest zeta_hat over the whole activation box."""
        return 1.0 + float((_activation_box_corners() @ self.extension_coeffs).min())

    def max_extension(self) -> float:
        """Largest zeta_hat over the whole activation box."""
        return 1.0 + float((_activation_box_corners() @ self.extension_coeffs).max())

    def digest(self) -> bytes:
        """32-byte digest pinning the map coefficients."""
        h = hashlib.sha256(b"rodmap/affine-map/v1")
        h.update(self.curvature_matrix.astype("<f8").tobytes())
        h.update(self.extension_coeffs.astype("<f8").tobytes())
        return h.digest()


def default_actuation_map() -> ActuationMap:
    return ActuationMap(DEFAULT_CURVATURE_MATRIX, DEFAULT_EXTENSION_COEFFS)


@dataclass(frozen=True)
class DirectorFrame:
    """Right-handed orthonormal director triad; d3 is the tangent direction."""

    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray

    def __post_init__(self):
        m = np.column_stack(
            [np.asarray(d, dtype=np.float64).reshape(3) for d in (self.d1, self.d2, self.d3)]
        )
        residual = np.abs(m.T @ m - np.eye(3)).max()
        if residual > 1e-9:
            raise ValueError(f"directors not orthonormal (residual {residual:.3g})")
        if np.dot(np.cross(m[:, 0], m[:, 1]), m[:, 2]) <= 0.0:
            raise ValueError("director frame is not right-handed")
        object.__setattr__(self, "d1", m[:, 0])
        object.__setattr__(self, "d2", m[:, 1])
        object.__setattr__(self, "d3", m[:, 2])

    @classmethod
    def identity(cls) -> "DirectorFrame":
        return cls(np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), np.array([0, 0, 1.0]))

    def matrix(self) -> np.ndarray:
        return np.column_stack([self.d1, self.d2, self.d3])


@dataclass(frozen=True)
class CenterlineShape:
    """Discrete centerline: points[k] = r(z_k) in meters, z_k in [0, L]."""

    points: np.ndarray
    arc_params: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        z = np.asarray(self.arc_params, dtype=np.float64).reshape(-1)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 2:
            raise ValueError(f"centerline must be (n_z>=2, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("centerline contains non-finite points")
        if z.shape[0] != pts.shape[0]:
            raise ValueError("arc_params length does not match points")
        if z[0] != 0.0 or z[-1] <= 0.0 or np.any(np.diff(z) <= 0.0):
            raise ValueError("arc_params must increase from 0 to L > 0")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "arc_params", z)

    @property
    def n_z(self) -> int:
        return self.points.shape[0]

    @property
    def length(self) -> float:
        """Material length L of the rod (not the deformed polyline length)."""
        return float(self.arc_params[-1])

    @property
    def base(self) -> np.ndarray:
        return self.points[0]

    @property
    def tip(self) -> np.ndarray:
        return self.points[-1]


def actuation_to_intrinsic(actuation_map: ActuationMap, gamma) -> IntrinsicState:
    """Map fiber activations to the intrinsic curvature/extension state."""
    g = as_gamma(gamma)
    u_hat = actuation_map.curvature_matrix @ g
    zeta_hat = 1.0 + float(actuation_map.extension_coeffs @ g)
    return IntrinsicState(u_hat=u_hat, zeta_hat=zeta_hat)


def _frame_rates(rx, D, u_hat, zeta):
    """Batched right-hand side of the kinematic ODE.

    rx: (B, 3) centerline points, D: (B, 3, 3) with directors as columns,
    u_hat: (B, 3), zeta: (B,).  The arithmetic is unrolled componentwise so
    results are bit-identical for any batch size.
    """
    u1 = u_hat[:, 0]
    u2 = u_hat[:, 1]
    u3 = u_hat[:, 2]
    # world-frame Darboux vector, one component at a time
    ux = D[:, 0, 0] * u1 + D[:, 0, 1] * u2 + D[:, 0, 2] * u3
    uy = D[:, 1, 0] * u1 + D[:, 1, 1] * u2 + D[:, 1, 2] * u3
    uz = D[:, 2, 0] * u1 + D[:, 2, 1] * u2 + D[:, 2, 2] * u3

    dr = zeta[:, None] * D[:, :, 2]

    dD = np.empty_like(D)
    dD[:, 0, :] = uy[:, None] * D[:, 2, :] - uz[:, None] * D[:, 1, :]
    dD[:, 1, :] = uz[:, None] * D[:, 0, :] - ux[:, None] * D[:, 2, :]
    dD[:, 2, :] = ux[:, None] * D[:, 1, :] - uy[:, None] * D[:, 0, :]
    dD *= zeta[:, None, None]
    return dr, dD


def _dot3(a, b):
    return a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1] + a[:, 2] * b[:, 2]


def _gram_schmidt(D):
    """Re-orthonormalize director columns in place (classical Gram-Schmidt)."""
    d1 = D[:, :, 0]
    d1 /= np.sqrt(_dot3(d1, d1))[:, None]
    d2 = D[:, :, 1]
    d2 -= _dot3(d2, d1)[:, None] * d1
    d2 /= np.sqrt(_dot3(d2, d2))[:, None]
    d3 = D[:, :, 2]
    d3 -= _dot3(d3, d1)[:, None] * d1
    d3 -= _dot3(d3, d2)[:, None] * d2
    d3 /= np.sqrt(_dot3(d3, d3))[:, None]


def _integrate_batch(u_hat, zeta_hat, length, n_z, keep_frames=False):
    """Integrate a batch of intrinsic states from the clamped base.

    Returns points (B, n_z, 3) and, when requested, frames (B, n_z, 3, 3).
    Base: r = 0, frame = identity (d3 along global z).
    """
    u_hat = np.ascontiguousarray(u_hat, dtype=np.float64)
    zeta = np.ascontiguousarray(zeta_hat, dtype=np.float64).reshape(-1)
    if u_hat.ndim != 2 or u_hat.shape[1] != 3 or u_hat.shape[0] != zeta.shape[0]:
        raise ValueError("u_hat must be (B, 3) matching zeta_hat (B,)")
    if not (np.all(np.isfinite(u_hat)) and np.all(np.isfinite(zeta)) and np.all(zeta > 0)):
        raise ValueError("non-finite or non-positive intrinsic state")
    if n_z < 2:
        raise ValueError(f"n_z must be >= 2, got {n_z}")
    length = float(length)
    if not np.isfinite(length) or length <= 0.0:
        raise ValueError(f"length must be > 0, got {length}")

    B = u_hat.shape[0]
    h = length / (n_z - 1)
    r = np.zeros((B, 3))
    D = np.broadcast_to(np.eye(3), (B, 3, 3)).copy()
    points = np.empty((B, n_z, 3))
    points[:, 0] = r
    frames = None
    if keep_frames:
        frames = np.empty((B, n_z, 3, 3))
        frames[:, 0] = D

    for step in range(1, n_z):
        k1r, k1D = _frame_rates(r, D, u_hat, zeta)
        k2r, k2D = _frame_rates(r + (h / 2) * k1r, D + (h / 2) * k1D, u_hat, zeta)
        k3r, k3D = _frame_rates(r + (h / 2) * k2r, D + (h / 2) * k2D, u_hat, zeta)
        k4r, k4D = _frame_rates(r + h * k3r, D + h * k3D, u_hat, zeta)
        r = r + (h / 6) * (k1r + 2.0 * k2r + 2.0 * k3r + k4r)
        D = D + (h / 6) * (k1D + 2.0 * k2D + 2.0 * k3D + k4D)
        _gram_schmidt(D)
        points[:, step] = r
        if keep_frames:
            frames[:, step] = D

    return points, frames


def integrate_centerline(state: IntrinsicState, length: float = DEFAULT_LENGTH,
                         n_z: int = DEFAULT_N_Z) -> CenterlineShape:
    """Integrate one intrinsic state into a discrete centerline shape."""
    points, _ = _integrate_batch(state.u_hat[None, :], np.array([state.zeta_hat]), length, n_z)
    return CenterlineShape(points=points[0], arc_params=np.linspace(0.0, length, n_z))


def integrate_with_frames(state: IntrinsicState, length: float = DEFAULT_LENGTH,
                          n_z: int = DEFAULT_N_Z):
    """Like integrate_centerline, also returning the (n_z, 3, 3) director frames."""
    points, frames = _integrate_batch(
        state.u_hat[None, :], np.array([state.zeta_hat]), length, n_z, keep_frames=True
    )
    shape = CenterlineShape(points=points[0], arc_params=np.linspace(0.0, length, n_z))
    return shape, frames[0]


def forward_kinematics(actuation_map: ActuationMap, gamma,
                       length: float = DEFAULT_LENGTH, n_z: int = DEFAULT_N_Z) -> CenterlineShape:
    """Full activation-to-shape map: gamma -> intrinsic state -> centerline."""
    return integrate_centerline(actuation_to_intrinsic(actuation_map, gamma), length, n_z)
