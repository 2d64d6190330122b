"""Maxwellian-weighted velocity-space discretization.

Conventions used throughout the package:

* The global equilibrium weight is M(v) = (2*pi)^(-3/2) exp(-|v|^2/2) and every
  velocity inner product is taken in L^2(M dv):  <f, g> = Int f g M dv.
* The 1D building block is the orthonormal probabilists' Hermite family
  e_n(x) = He_n(x)/sqrt(n!), which satisfies

      x e_n  = sqrt(n+1) e_{n+1} + sqrt(n) e_{n-1}
      e_n'   = sqrt(n)   e_{n-1}

  so multiplication by v_i and d/dv_i are exact sparse ladder matrices on the
  truncated space (multiplication is truncated back to total degree <= K).
* The 3D basis is the tensor family e_a(v) = e_{a1}(v1) e_{a2}(v2) e_{a3}(v3)
  restricted to total degree a1+a2+a3 <= K, ordered by (degree, lexicographic).
  Its dimension is C(K+3, 3).

The hard-sphere collision frequency nu(v) = Int |v-v*| M(v*) dv* has the closed
radial form (mean distance of a standard normal point to a fixed point)

    nu(r) = sqrt(2/pi) exp(-r^2/2) + (r + 1/r) erf(r/sqrt(2)),   r = |v|,

with nu(0) = 2 sqrt(2/pi); it grows like r + 1/r for large r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .errors import ConfigError

_TWO_PI = 2.0 * math.pi


def maxwellian(v: np.ndarray) -> np.ndarray:
    """Normalized Maxwellian M(v) for points v with shape (..., 3)."""
    v = np.asarray(v, dtype=float)
    return (_TWO_PI) ** (-1.5) * np.exp(-0.5 * np.sum(v * v, axis=-1))


def collision_frequency(v: np.ndarray) -> np.ndarray:
    """Hard-sphere collision frequency nu(v) = Int |v-v*| M dv*, shape (..., 3) -> (...)."""
    v = np.asarray(v, dtype=float)
    r = np.sqrt(np.sum(v * v, axis=-1))
    return collision_frequency_radial(r)


def collision_frequency_radial(r: np.ndarray) -> np.ndarray:
    """nu as a function of r = |v|; even and analytic, series used near r = 0."""
    r = np.asarray(r, dtype=float)
    small = r < 1.0e-4
    rs = np.where(small, 1.0, r)
    closed = np.sqrt(2.0 / math.pi) * np.exp(-0.5 * r * r) + (rs + 1.0 / rs) * erf(
        rs / math.sqrt(2.0)
    )
    series = np.sqrt(2.0 / math.pi) * (2.0 + r * r / 3.0 - r**4 / 60.0)
    return np.where(small, series, closed)


def hermite_values(points: np.ndarray, max_degree: int) -> np.ndarray:
    """Orthonormal 1D Hermite values e_n(x), n = 0..max_degree, shape (max_degree+1, ...)."""
    x = np.asarray(points, dtype=float)
    out = np.empty((max_degree + 1,) + x.shape, dtype=float)
    out[0] = 1.0
    if max_degree >= 1:
        out[1] = x
    for n in range(1, max_degree):
        # orthonormal recurrence: sqrt(n+1) e_{n+1} = x e_n - sqrt(n) e_{n-1}
        out[n + 1] = (x * out[n] - math.sqrt(n) * out[n - 1]) / math.sqrt(n + 1)
    return out


@dataclass(frozen=True)
class QuadratureGrid:
    """Tensor Gauss-Hermite grid normalized so that sum(weights) = Int M dv = 1."""

    nodes: np.ndarray  # (n, 3)
    weights: np.ndarray  # (n,)
    order_per_axis: int

    @classmethod
    def build(cls, order_per_axis: int) -> "QuadratureGrid":
        if order_per_axis < 4:
            raise ConfigError(f"quadrature order must be >= 4, got {order_per_axis}")
        x, w = np.polynomial.hermite_e.hermegauss(order_per_axis)
        w = w / math.sqrt(_TWO_PI)  # normalize against exp(-x^2/2)/sqrt(2 pi)
        nodes = np.stack(
            [a.ravel() for a in np.meshgrid(x, x, x, indexing="ij")], axis=-1
        )
        weights = (w[:, None, None] * w[None, :, None] * w[None, None, :]).ravel()
        return cls(nodes=nodes, weights=weights, order_per_axis=order_per_axis)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Integrate samples at the nodes against M dv (last axis is the node axis)."""
        return values @ self.weights


def total_degree_indices(K: int) -> list[tuple[int, int, int]]:
    """Multi-degrees (k1,k2,k3) with k1+k2+k3 <= K in graded lexicographic order."""
    idx = []
    for deg in range(K + 1):
        for k1 in range(deg, -1, -1):
            for k2 in range(deg - k1, -1, -1):
                idx.append((k1, k2, deg - k1 - k2))
    return idx


@dataclass(frozen=True)
class HermiteBasis:
    """Truncated orthonormal Hermite system with its ladder and Gram matrices."""

    K: int
    quad_order: int
    index_map: tuple[tuple[int, int, int], ...]
    dim: int
    V: np.ndarray  # (3, dim, dim) multiplication by v_i (symmetric)
    D: np.ndarray  # (3, dim, dim) differentiation d/dv_i
    nu_gram: np.ndarray  # (dim, dim) <nu e_i, e_j>, symmetric positive definite
    grid: QuadratureGrid = field(repr=False)
    values_at_grid: np.ndarray = field(repr=False)  # (dim, n_nodes)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Evaluate all basis functions at points (..., 3); returns (dim, ...)."""
        pts = np.asarray(points, dtype=float)
        tabs = [hermite_values(pts[..., ax], self.K) for ax in range(3)]
        idx = np.asarray(self.index_map)
        out = tabs[0][idx[:, 0]] * tabs[1][idx[:, 1]]
        out *= tabs[2][idx[:, 2]]
        return out

    def coeffs_of(self, func_values: np.ndarray) -> np.ndarray:
        """Project node samples (n_nodes,) onto the basis by quadrature."""
        return self.values_at_grid @ (self.grid.weights * func_values)

    def reconstruct(self, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Evaluate the expansion sum_a coeffs[a] e_a at given points."""
        return np.tensordot(np.asarray(coeffs), self.evaluate(points), axes=(0, 0))


def build_basis(K: int, quad_order: int) -> HermiteBasis:
    """Assemble the degree-K basis with its ladder matrices and nu-weighted Gram.

    quad_order must integrate polynomials of degree 2K exactly with margin;
    the contract requires quad_order >= K + 2.
    """
    if K < 2:
        raise ConfigError(f"degree cutoff K must be >= 2, got {K}")
    if quad_order < K + 2:
        raise ConfigError(
            f"quad_order={quad_order} too small for K={K}; need at least K+2 "
            "to integrate degree-2K polynomials"
        )
    index_map = total_degree_indices(K)
    dim = len(index_map)
    pos = {m: a for a, m in enumerate(index_map)}

    V = np.zeros((3, dim, dim))
    D = np.zeros((3, dim, dim))
    for a, m in enumerate(index_map):
        for ax in range(3):
            n = m[ax]
            up = list(m)
            up[ax] += 1
            if sum(up) <= K:
                V[ax, pos[tuple(up)], a] = math.sqrt(n + 1)
            if n >= 1:
                down = list(m)
                down[ax] -= 1
                b = pos[tuple(down)]
                V[ax, b, a] = math.sqrt(n)
                D[ax, b, a] = math.sqrt(n)

    grid = QuadratureGrid.build(quad_order)
    tabs = [hermite_values(grid.nodes[:, ax], K) for ax in range(3)]
    values = np.empty((dim, grid.nodes.shape[0]))
    for a, (k1, k2, k3) in enumerate(index_map):
        values[a] = tabs[0][k1] * tabs[1][k2] * tabs[2][k3]

    nu_vals = collision_frequency(grid.nodes)
    weighted = values * (grid.weights * nu_vals)
    nu_gram = weighted @ values.T
    nu_gram = 0.5 * (nu_gram + nu_gram.T)

    return HermiteBasis(
        K=K,
        quad_order=quad_order,
        index_map=tuple(index_map),
        dim=dim,
        V=V,
        D=D,
        nu_gram=nu_gram,
        grid=grid,
        values_at_grid=values,
    )


@dataclass(frozen=True)
class MomentVectors:
    """Coefficient vectors of the named low-order moments and the 13-moment frame.

    A(v) = v (x) v - |v|^2/3 I (trace free) and B(v) = (|v|^2/2 - 5/2) v are the
    fluxes whose constrained inverses define the transport coefficients.
    """

    one: np.ndarray  # coefficients of 1
    v: np.ndarray  # (3, dim) coefficients of v_i
    v_sq: np.ndarray  # |v|^2
    psi_energy: np.ndarray  # |v|^2/2 - 3/2
    psi_theta: np.ndarray  # |v|^2/3 - 1
    A: np.ndarray  # (3, 3, dim)
    B: np.ndarray  # (3, dim)
    thirteen_raw: np.ndarray  # (13, dim) the raw polynomial family
    thirteen_basis: np.ndarray  # (13, dim) orthonormalized


def thirteen_moments(basis: HermiteBasis) -> MomentVectors:
    """Moment coefficient vectors; requires K >= 3 so that v_i |v|^2 is representable."""
    if basis.K < 3:
        raise ConfigError(f"thirteen moments need K >= 3, got K={basis.K}")
    dim = basis.dim
    e0 = np.zeros(dim)
    e0[0] = 1.0
    V = basis.V

    v = np.stack([V[i] @ e0 for i in range(3)])
    v_sq = sum(V[i] @ V[i] @ e0 for i in range(3))
    psi_energy = 0.5 * v_sq - 1.5 * e0
    psi_theta = v_sq / 3.0 - e0

    A = np.empty((3, 3, dim))
    for i in range(3):
        for j in range(3):
            A[i, j] = V[i] @ V[j] @ e0 - (v_sq / 3.0 if i == j else 0.0)
    B = np.stack([0.5 * V[i] @ v_sq - 2.5 * v[i] for i in range(3)])

    raw = [e0, v[0], v[1], v[2]]
    raw += [V[i] @ v[i] for i in range(3)]  # v_i^2
    raw += [V[i] @ v_sq for i in range(3)]  # v_i |v|^2
    raw += [V[0] @ v[1], V[0] @ v[2], V[1] @ v[2]]  # v_i v_j, i < j
    raw = np.stack(raw)

    # QR with positive diagonal gives a deterministic orthonormal frame.
    q, r = np.linalg.qr(raw.T)
    signs = np.sign(np.diag(r))
    signs[signs == 0.0] = 1.0
    thirteen = (q * signs).T

    return MomentVectors(
        one=e0,
        v=v,
        v_sq=v_sq,
        psi_energy=psi_energy,
        psi_theta=psi_theta,
        A=A,
        B=B,
        thirteen_raw=raw,
        thirteen_basis=thirteen,
    )


def fit_frequency_bounds(grid: QuadratureGrid) -> tuple[float, float]:
    """Fitted constants (C1, C2) with C1 (1+|v|) <= nu(v) <= C2 (1+|v|) on the grid.

    The existence of such constants is structural; their values are reported,
    not asserted, since no reference values exist.
    """
    r = np.sqrt(np.sum(grid.nodes**2, axis=-1))
    ratio = collision_frequency_radial(r) / (1.0 + r)
    return float(ratio.min()), float(ratio.max())
