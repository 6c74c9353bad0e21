"""Multi-objective edge costs.

An edge (i, j) with endpoint activations g_i, g_j and RMS shape distance
d_rms is weighted

    w = alpha * d_rms + beta * d_mag + delta * d_smo

where d_mag = (g_i' K g_i + g_j' K g_j) / 2 averages the activation energy
of the endpoints and d_smo = ||g_i - g_j||^2 penalizes activation jumps.
K must be symmetric positive semidefinite; alpha must stay positive so the
graph never acquires zero-cost cycles.

Presets: geometry_only() recovers pure shortest-shape-path search,
energy_aware() adds both activation terms with unit weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import ShapeGraph
from .library import ShapeLibrary

_PSD_TOL = -1e-12


class CostWeightError(ValueError):
    """Cost weights violate their admissibility constraints."""


@dataclass(frozen=True)
class CostWeights:
    """(alpha, beta, delta, K) bundle with admissibility checks."""

    alpha: float = 1.0
    beta: float = 0.0
    delta: float = 0.0
    stiffness: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise CostWeightError(f"alpha must be > 0, got {self.alpha}")
        if self.beta < 0.0 or self.delta < 0.0:
            raise CostWeightError(
                f"beta and delta must be >= 0, got beta={self.beta}, delta={self.delta}")
        k = np.asarray(self.stiffness, dtype=np.float64)
        if k.shape != (3, 3):
            raise CostWeightError(f"stiffness matrix must be 3x3, got {k.shape}")
        if not np.allclose(k, k.T, atol=1e-12, rtol=0.0):
            raise CostWeightError("stiffness matrix must be symmetric")
        eigs = np.linalg.eigvalsh(k)
        if eigs.min() < _PSD_TOL:
            raise CostWeightError(
                f"stiffness matrix must be positive semidefinite; "
                f"smallest eigenvalue {eigs.min():.3e}")
        object.__setattr__(self, "stiffness", k)

    @classmethod
    def geometry_only(cls) -> "CostWeights":
        return cls(alpha=1.0, beta=0.0, delta=0.0)

    @classmethod
    def energy_aware(cls) -> "CostWeights":
        return cls(alpha=1.0, beta=1.0, delta=1.0)

    def describe(self) -> str:
        return f"alpha={self.alpha:g} beta={self.beta:g} delta={self.delta:g}"


def activation_energy(gamma, stiffness=None) -> float:
    """Quadratic form g' K g of one activation vector (K defaults to I)."""
    g = np.asarray(gamma, dtype=np.float64).reshape(3)
    if stiffness is None:
        return float(g @ g)
    k = np.asarray(stiffness, dtype=np.float64)
    return float(g @ k @ g)


def activation_rate(gamma_a, gamma_b) -> float:
    """Squared activation jump ||g_a - g_b||^2 across one edge."""
    diff = np.asarray(gamma_a, dtype=np.float64).reshape(3) - \
        np.asarray(gamma_b, dtype=np.float64).reshape(3)
    return float(diff @ diff)


def edge_weight(d_rms: float, gamma_i, gamma_j, weights: CostWeights) -> float:
    """Scalar cost of one edge; matches compute_edge_weights elementwise."""
    d_mag = 0.5 * (activation_energy(gamma_i, weights.stiffness)
                   + activation_energy(gamma_j, weights.stiffness))
    d_smo = activation_rate(gamma_i, gamma_j)
    return weights.alpha * float(d_rms) + weights.beta * d_mag + weights.delta * d_smo


def compute_edge_weights(graph: ShapeGraph, lib: ShapeLibrary,
                         weights: CostWeights) -> np.ndarray:
    """Vector of costs for every stored edge (dead edges included)."""
    if graph.node_count != lib.n:
        raise ValueError(
            f"graph has {graph.node_count} nodes, library has {lib.n}")
    out = weights.alpha * graph.edge_rms
    if weights.beta != 0.0:
        energy = np.einsum("ni,ij,nj->n", lib.gammas, weights.stiffness, lib.gammas)
        out = out + weights.beta * 0.5 * (energy[graph.edges_i] + energy[graph.edges_j])
    if weights.delta != 0.0:
        diff = lib.gammas[graph.edges_i] - lib.gammas[graph.edges_j]
        out = out + weights.delta * np.einsum("ni,ni->n", diff, diff)
    return np.ascontiguousarray(out, dtype=np.float64)
