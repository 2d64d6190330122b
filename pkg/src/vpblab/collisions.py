"""Hard-sphere collision operators on the truncated Hermite system.

Everything is derived from one tensor of weak-form integrals

    T[k, i, j] = Int B(M e_i, M e_j)(v) e_k(v) dv
              = Int Int Int M M* e_i(v) e_j(v*) [e_k(v') - e_k(v)] |(v-v*).w| dw dv* dv,

where v' = v - ((v-v*).w) w is the post-collisional velocity.  From T follow

    Q(f,g)   = (1/M)[B(Mf,Mg) + B(Mg,Mf)]      (symmetric bilinear form)
    L2 f     = -(2/M) B(Mf, M)                  -> matrix -2 T[:, :, 0]
    L1 f     = -(2/M)[B(Mf, M) + B(M, Mf)]      -> L2 plus the mirrored half
    L1(f, g) = -(2/M)[B(Mf, M) + B(M, Mg)]      (two-argument form)

since the constant function 1 is exactly the first basis element.

Quadrature: in the variables s = (v+v*)/2, u = v - v*, the Gaussian weight
factorizes as M M* = (2 pi)^-3 exp(-|s|^2) exp(-|u|^2/4).  For fixed scattering
direction the integrand is a polynomial in s, a polynomial in the direction
u-hat, and a pure power of r = |u| (post-collisional basis values contribute
only integer powers of r).  The product rule below is therefore EXACT for the
truncated basis:

    s     : tensor Gauss-Hermite (weight exp(-s^2) per axis),
    r     : Gaussian rule for the weight r^2 exp(-r^2/4) on [0, inf)
            (built from moments 2^(m+2) Gamma((m+3)/2) in extended precision),
    u-hat : Gauss-Legendre in cos(theta) x uniform azimuth,
    w     : per u-hat frame, Gauss rule for the |t| weight on [-1,1]
            (nodes +/- sqrt(x), Gauss-Legendre x on [0,1]) x uniform azimuth,
            which absorbs the |u-hat . w| kernel factor.

Consequently the assembled operators satisfy the collision identities
(conservation of 1, v, |v|^2 by Q; exact kernels of L1, L2; self-adjointness)
to rounding accuracy, and rule doubling is a certification, not a convergence
knob.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy.special import roots_legendre

from .basis import HermiteBasis, MomentVectors, total_degree_indices
from .errors import NonConvergenceError, NumericalError

_TWO_PI = 2.0 * math.pi


# ----------------------------------------------------------------------------
# quadrature rules
# ----------------------------------------------------------------------------


def radial_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss rule for Int_0^inf f(r) r^2 exp(-r^2/4) dr, exact to degree 2n-1.

    Recurrence coefficients come from the Chebyshev moment algorithm run in
    extended precision (raw moments are exact Gamma values), then the Jacobi
    matrix is diagonalized in float64.
    """
    with mpmath.workdps(60):
        moments = [
            mpmath.mpf(2) ** (m + 2) * mpmath.gamma(mpmath.mpf(m + 3) / 2)
            for m in range(2 * n)
        ]
        alpha = [mpmath.mpf(0)] * n
        beta = [mpmath.mpf(0)] * n
        sig_prev = [mpmath.mpf(0)] * (2 * n)
        sig = list(moments)
        alpha[0] = moments[1] / moments[0]
        beta[0] = moments[0]
        for k in range(1, n):
            sig_new = [mpmath.mpf(0)] * (2 * n)
            for ell in range(k, 2 * n - k):
                sig_new[ell] = (
                    sig[ell + 1]
                    - alpha[k - 1] * sig[ell]
                    - (beta[k - 1] * sig_prev[ell] if k >= 2 else 0)
                )
            alpha[k] = sig_new[k + 1] / sig_new[k] - sig[k] / sig[k - 1]
            beta[k] = sig_new[k] / sig[k - 1]
            sig_prev, sig = sig, sig_new
        a = np.array([float(x) for x in alpha])
        b = np.array([float(x) for x in beta])
    jac = np.diag(a) + np.diag(np.sqrt(b[1:]), 1) + np.diag(np.sqrt(b[1:]), -1)
    nodes, vecs = np.linalg.eigh(jac)
    weights = b[0] * vecs[0] ** 2
    return nodes, weights


def abs_cos_rule(n_half: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss rule for Int_-1^1 |t| f(t) dt: nodes +/- sqrt(x), x Gauss-Legendre on [0,1]."""
    x, w = roots_legendre(n_half)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    t = np.sqrt(x)
    nodes = np.concatenate([-t[::-1], t])
    weights = 0.5 * np.concatenate([w[::-1], w])
    return nodes, weights


def tangent_frame(u_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic orthonormal tangent vectors for unit directions (..., 3)."""
    a = np.zeros_like(u_hat)
    use_x = np.abs(u_hat[..., 0]) < 0.9
    a[..., 0] = np.where(use_x, 1.0, 0.0)
    a[..., 1] = np.where(use_x, 0.0, 1.0)
    t1 = np.cross(u_hat, a)
    t1 /= np.linalg.norm(t1, axis=-1, keepdims=True)
    t2 = np.cross(u_hat, t1)
    return t1, t2


@dataclass(frozen=True)
class CollisionRule:
    """Order parameters of the exact product quadrature, derived from K."""

    n_s: int
    n_r: int
    n_polar: int
    n_azimuth: int
    n_scatter_half: int  # half-count of the |t| rule (total 2x)
    n_scatter_azimuth: int

    @classmethod
    def for_degree(cls, K: int, scale: float = 1.0) -> "CollisionRule":
        def up(x: float) -> int:
            return int(math.ceil(x * scale))

        return cls(
            n_s=up((3 * K + 2) / 2),
            n_r=up((3 * K + 4) / 2),
            n_polar=up((3 * K + 2) / 2),
            n_azimuth=max(4, 2 * up((3 * K + 1) / 2)),  # even count
            n_scatter_half=up((2 * K + 2) / 4) + 1,
            n_scatter_azimuth=max(4, up(2 * K + 1) + 1),
        )

    def doubled_scatter(self) -> "CollisionRule":
        """Same base grid, doubled scattering-sphere rule (the certification knob)."""
        return CollisionRule(
            n_s=self.n_s,
            n_r=self.n_r,
            n_polar=self.n_polar,
            n_azimuth=self.n_azimuth,
            n_scatter_half=2 * self.n_scatter_half,
            n_scatter_azimuth=2 * self.n_scatter_azimuth,
        )

    def describe(self) -> dict:
        return {
            "type": "exact product rule (s: Gauss-Hermite, r: r^2 exp(-r^2/4) Gauss, "
            "u-hat: Gauss-Legendre x azimuth, scatter: |cos| Gauss x azimuth)",
            "n_s": self.n_s,
            "n_r": self.n_r,
            "n_polar": self.n_polar,
            "n_azimuth": self.n_azimuth,
            "n_scatter": 2 * self.n_scatter_half * self.n_scatter_azimuth,
        }


class _ProductGrid:
    """Flattened (s, r, u-hat) base points with per-direction scattering nodes."""

    def __init__(self, rule: CollisionRule):
        xs, ws = np.polynomial.hermite.hermgauss(rule.n_s)
        self.s_nodes = np.stack(
            [a.ravel() for a in np.meshgrid(xs, xs, xs, indexing="ij")], -1
        )
        self.s_w = (ws[:, None, None] * ws[None, :, None] * ws[None, None, :]).ravel()
        self.r_nodes, self.r_w = radial_rule(rule.n_r)

        ct, wt = roots_legendre(rule.n_polar)
        phi = np.arange(rule.n_azimuth) * (_TWO_PI / rule.n_azimuth)
        st = np.sqrt(1.0 - ct**2)
        self.uh = np.stack(
            [
                np.outer(st, np.cos(phi)).ravel(),
                np.outer(st, np.sin(phi)).ravel(),
                np.outer(ct, np.ones_like(phi)).ravel(),
            ],
            -1,
        )
        self.uh_w = np.outer(wt, np.full(rule.n_azimuth, _TWO_PI / rule.n_azimuth)).ravel()

        t_nodes, t_w = abs_cos_rule(rule.n_scatter_half)
        psi = np.arange(rule.n_scatter_azimuth) * (_TWO_PI / rule.n_scatter_azimuth)
        self.w_scatter = np.outer(
            t_w, np.full(rule.n_scatter_azimuth, _TWO_PI / rule.n_scatter_azimuth)
        ).ravel()
        t1, t2 = tangent_frame(self.uh)
        sin_t = np.sqrt(np.maximum(0.0, 1.0 - t_nodes**2))
        circ = (
            np.cos(psi)[None, :, None] * t1[:, None, :]
            + np.sin(psi)[None, :, None] * t2[:, None, :]
        )  # (n_uh, n_psi, 3)
        self.omega = (
            t_nodes[None, :, None, None] * self.uh[:, None, None, :]
            + sin_t[None, :, None, None] * circ[:, None, :, :]
        ).reshape(self.uh.shape[0], self.w_scatter.size, 3)
        self.t_flat = np.repeat(t_nodes, rule.n_scatter_azimuth)

        self.n_base = self.s_nodes.shape[0] * self.r_nodes.size * self.uh.shape[0]

    def chunks(self, chunk: int):
        """Yield (v, v_star, v_prime, w0) with w0 = weights incl. the r kernel factor.

        v, v_star: (P, 3); v_prime: (P, n_omega, 3); the |u-hat . w| kernel part
        lives in w_scatter, shared across points.
        """
        n_r, n_uh = self.r_nodes.size, self.uh.shape[0]
        for start in range(0, self.n_base, chunk):
            sel = np.arange(start, min(start + chunk, self.n_base))
            i_s, rem = np.divmod(sel, n_r * n_uh)
            i_r, i_u = np.divmod(rem, n_uh)
            s = self.s_nodes[i_s]
            r = self.r_nodes[i_r]
            d = self.uh[i_u]
            w0 = self.s_w[i_s] * self.r_w[i_r] * self.uh_w[i_u] * r / (_TWO_PI**3)
            v = s + 0.5 * r[:, None] * d
            v_star = s - 0.5 * r[:, None] * d
            om = self.omega[i_u]
            vp = v[:, None, :] - (r[:, None] * self.t_flat[None, :])[:, :, None] * om
            yield v, v_star, vp, w0


def _scatter_shift_data(basis: HermiteBasis, grid: _ProductGrid):
    """Per-direction sphere moments and Taylor-shift matrices.

    The post-collisional value of a degree-K polynomial is its exact Taylor
    expansion in the shift w = (u.omega) omega:

        e_k(v - w) = sum_gamma ((-1)^|gamma| / gamma!) w^gamma (d^gamma e_k)(v),

    so the scattering integral reduces to the sphere-moment table

        J_gamma(u-hat) = Int |u-hat.w| (u-hat.w)^|gamma| w^gamma dw

    evaluated once per direction node with the exact |cos| x azimuth rule, and
    the derivative matrices D^gamma acting in coefficient space.
    """
    gammas = total_degree_indices(basis.K)
    degs = np.array([sum(g) for g in gammas])
    n_uh, n_om = grid.omega.shape[0], grid.w_scatter.size
    om_pows = np.empty((len(gammas), n_uh, n_om))
    tpow = grid.t_flat[None, :] ** degs[:, None]  # (n_gamma, n_omega)
    for a, (g1, g2, g3) in enumerate(gammas):
        om_pows[a] = (
            grid.omega[:, :, 0] ** g1
            * grid.omega[:, :, 1] ** g2
            * grid.omega[:, :, 2] ** g3
        ) * tpow[a]
    j_table = om_pows @ grid.w_scatter  # (n_gamma, n_uh)

    dim = basis.dim
    shift = np.empty((len(gammas), dim, dim))
    for a, (g1, g2, g3) in enumerate(gammas):
        mat = np.eye(dim)
        for ax, p in ((0, g1), (1, g2), (2, g3)):
            for _ in range(p):
                mat = basis.D[ax] @ mat
        coef = (-1.0) ** degs[a] / (
            math.factorial(g1) * math.factorial(g2) * math.factorial(g3)
        )
        shift[a] = coef * mat
    return degs, j_table.T.copy(), shift.reshape(len(gammas), dim * dim)


def _assemble_tensor(
    basis: HermiteBasis, rule: CollisionRule, cross_section: float, chunk: int = 0
) -> np.ndarray:
    """Assemble T[k,i,j] (module docstring) on the exact product grid."""
    dim = basis.dim
    if chunk <= 0:
        chunk = int(np.clip(30_000_000 // (dim * dim), 256, 8192))
    grid = _ProductGrid(rule)
    degs, j_table, shift = _scatter_shift_data(basis, grid)  # (nuh, ng), (ng, dim^2)

    n_r, n_uh = grid.r_nodes.size, grid.uh.shape[0]
    eye = np.eye(dim).ravel()
    tensor = np.zeros((dim, dim * dim))
    for start in range(0, grid.n_base, chunk):
        sel = np.arange(start, min(start + chunk, grid.n_base))
        i_s, rem = np.divmod(sel, n_r * n_uh)
        i_r, i_u = np.divmod(rem, n_uh)
        s = grid.s_nodes[i_s]
        r = grid.r_nodes[i_r]
        d = grid.uh[i_u]
        w0 = (
            grid.s_w[i_s] * grid.r_w[i_r] * grid.uh_w[i_u] * r * cross_section
        ) / (_TWO_PI**3)
        v = s + 0.5 * r[:, None] * d
        v_star = s - 0.5 * r[:, None] * d

        ev = basis.evaluate(v)  # (dim, P)
        ef = basis.evaluate(v_star)
        radial = r[:, None] ** degs[None, :] * j_table[i_u]  # (P, n_gamma)
        wmat = radial @ shift  # (P, dim^2): columns (m, k)
        wmat -= _TWO_PI * eye  # subtract the loss term Int |uhat.w| dw = 2 pi
        n_pts = sel.size
        bracket = np.matmul(
            ev.T[:, None, :], wmat.reshape(n_pts, dim, dim)
        )[:, 0, :]  # (P, dim): sum_m e_m(v) W[m, k]
        gk = bracket.T * w0
        pair = ev[:, None, :] * ef[None, :, :]  # (dim, dim, P)
        tensor += gk @ pair.reshape(dim * dim, n_pts).T
    return tensor.reshape(dim, dim, dim)


# ----------------------------------------------------------------------------
# operators
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class CollisionOperators:
    """Dense collision operators in coefficient space.

    Q_tensor[k,i,j] = <Q(e_i, e_j), e_k> is symmetric in (i, j);  B_tensor is
    the one-sided weak tensor it derives from and realizes (1/M) B(Mf, Mg),
    which the two-species difference equation needs unsymmetrized.  L1_cross
    realizes the two-argument form f -> L1(f, -f).
    """

    K: int
    dim: int
    Q_tensor: np.ndarray  # (dim, dim, dim)
    B_tensor: np.ndarray  # (dim, dim, dim)
    L1: np.ndarray  # (dim, dim) symmetric PSD, 5-dim kernel
    L2: np.ndarray  # (dim, dim) symmetric PSD, 1-dim kernel
    L1_cross: np.ndarray  # (dim, dim) f -> L1(f, -f)
    sphere_rule: dict
    cross_section: float
    symmetry_defect: float  # max asymmetry of the raw L matrices (diagnostic)

    def apply_bilinear(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        """(1/M) B(Mf, Mg) in coefficients; batched over trailing axes."""
        return np.einsum("kij,i...,j...->k...", self.B_tensor, f, g)

    def apply_Q(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Symmetric Q(f, g) in coefficients; batched over trailing axes."""
        return np.einsum("kij,i...,j...->k...", self.Q_tensor, f, g)

    def l1_two_arg(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        """L1(f, g) = -(2/M)[B(Mf, M) + B(M, Mg)]."""
        return -2.0 * (self.B_tensor[:, :, 0] @ f + self.B_tensor[:, 0, :] @ g)


def assemble_operators(
    basis: HermiteBasis,
    *,
    cross_section: float = 1.0,
    rule_scale: float = 1.0,
    certify: bool = True,
    certify_tol: float = 1.0e-9,
) -> CollisionOperators:
    """Assemble all collision operators; optionally certify by rule doubling.

    Raises NonConvergenceError if doubling the angular rules moves any tensor
    entry by more than certify_tol (the product rule is exact, so the defect
    is rounding-level; a larger defect indicates a broken rule).
    """
    rule = CollisionRule.for_degree(basis.K, rule_scale)
    tensor = _assemble_tensor(basis, rule, cross_section)
    if certify:
        tensor2 = _assemble_tensor(basis, rule.doubled_scatter(), cross_section)
        defect = float(np.abs(tensor2 - tensor).max())
        if defect > certify_tol:
            raise NonConvergenceError(
                f"collision quadrature not converged: doubling the angular rules "
                f"moved entries by {defect:.3e} > {certify_tol:.1e}"
            )
        tensor = tensor2

    q_tensor = tensor + tensor.transpose(0, 2, 1)
    l2_raw = -2.0 * tensor[:, :, 0]
    l1_raw = l2_raw - 2.0 * tensor[:, 0, :]
    defect = max(
        float(np.abs(l1_raw - l1_raw.T).max()), float(np.abs(l2_raw - l2_raw.T).max())
    )
    l1 = 0.5 * (l1_raw + l1_raw.T)
    l2 = 0.5 * (l2_raw + l2_raw.T)
    l1_cross = -2.0 * (tensor[:, :, 0] - tensor[:, 0, :])

    return CollisionOperators(
        K=basis.K,
        dim=basis.dim,
        Q_tensor=q_tensor,
        B_tensor=tensor,
        L1=l1,
        L2=l2,
        L1_cross=l1_cross,
        sphere_rule=rule.describe(),
        cross_section=cross_section,
        symmetry_defect=defect,
    )


def assemble_Q(basis: HermiteBasis, **kwargs) -> CollisionOperators:
    """Spec alias: the Q tensor is produced by the shared assembly."""
    return assemble_operators(basis, **kwargs)


def assemble_L(basis: HermiteBasis, **kwargs) -> CollisionOperators:
    """Spec alias: the linearized operators are produced by the shared assembly."""
    return assemble_operators(basis, **kwargs)


def direct_weak_form(
    basis: HermiteBasis,
    triples: list[tuple[np.ndarray, np.ndarray, np.ndarray]],
    *,
    rule_scale: float = 1.0,
    cross_section: float = 1.0,
    chunk: int = 4096,
) -> np.ndarray:
    """<Q(f, g), psi> for (f, g, psi) triples by direct weak-form quadrature.

    Contracts coefficient vectors against per-point basis values without ever
    touching the assembled tensor; validates Q_tensor's contraction path.
    """
    rule = CollisionRule.for_degree(basis.K, rule_scale)
    grid = _ProductGrid(rule)
    fs = np.stack([np.asarray(f, float) for f, _, _ in triples])
    gs = np.stack([np.asarray(g, float) for _, g, _ in triples])
    ps = np.stack([np.asarray(p, float) for _, _, p in triples])
    totals = np.zeros(len(triples))
    for v, v_star, vp, w0 in grid.chunks(chunk):
        n_pts = v.shape[0]
        ev = basis.evaluate(v)
        ef = basis.evaluate(v_star)
        evp = basis.evaluate(vp.reshape(-1, 3)).reshape(basis.dim, n_pts, -1)
        gain = evp @ grid.w_scatter
        fv, gv = fs @ ev, gs @ ev
        fstar, gstar = fs @ ef, gs @ ef
        sym = fv * gstar + gv * fstar
        bracket = ps @ gain - _TWO_PI * (ps @ ev)
        totals += (sym * bracket) @ (w0 * cross_section)
    return totals


# ----------------------------------------------------------------------------
# projections and spectral structure
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Projections:
    """Orthogonal projectors onto the collision kernels and moment extraction rows."""

    P1: np.ndarray  # (dim, dim) onto span{1, v, |v|^2}
    P2: np.ndarray  # (dim, dim) onto span{1}
    a_row: np.ndarray  # f -> <f, 5/2 - |v|^2/2>
    b_rows: np.ndarray  # (3, dim) f -> <f, v>
    c_row: np.ndarray  # f -> <f, |v|^2/6 - 1/2>
    d_row: np.ndarray  # g -> <g, 1>
    kernel1: np.ndarray  # (5, dim) orthonormal kernel basis of L1
    kernel2: np.ndarray  # (1, dim)

    def project_P1(self, coeffs: np.ndarray):
        """Split f = (a + b.v + c|v|^2) + kinetic remainder; returns (a, b, c, fluid, kinetic)."""
        coeffs = np.asarray(coeffs)
        a = self.a_row @ coeffs
        b = self.b_rows @ coeffs
        c = self.c_row @ coeffs
        fluid = np.tensordot(self.P1, coeffs, axes=(1, 0))
        return a, b, c, fluid, coeffs - fluid

    def project_P2(self, coeffs: np.ndarray):
        """Split g = d + kinetic remainder; returns (d, kinetic)."""
        coeffs = np.asarray(coeffs)
        d = self.d_row @ coeffs
        fluid = np.tensordot(self.P2, coeffs, axes=(1, 0))
        return d, coeffs - fluid


def build_projections(moments: MomentVectors) -> Projections:
    psi_r = (moments.v_sq - 3.0 * moments.one) / math.sqrt(6.0)
    kernel1 = np.stack([moments.one, *moments.v, psi_r])
    kernel2 = moments.one[None, :]
    return Projections(
        P1=kernel1.T @ kernel1,
        P2=np.outer(moments.one, moments.one),
        a_row=2.5 * moments.one - 0.5 * moments.v_sq,
        b_rows=moments.v.copy(),
        c_row=moments.v_sq / 6.0 - 0.5 * moments.one,
        d_row=moments.one.copy(),
        kernel1=kernel1,
        kernel2=kernel2,
    )


def kernel_dimension(L: np.ndarray, threshold: float = 1.0e-7) -> int:
    """Number of eigenvalues below threshold * max eigenvalue."""
    eig = np.linalg.eigvalsh(L)
    return int(np.sum(eig < threshold * eig.max()))


def coercivity_constant(
    ops: CollisionOperators,
    which: str,
    nu_gram: np.ndarray,
    projections: Projections,
) -> float:
    """Half the smallest generalized eigenvalue of L_i off its kernel w.r.t. the nu-Gram.

    This is the spectral-gap constant delta in  <L_i f, f> >= 2 delta |(I-P_i) f|_nu^2.
    """
    from scipy.linalg import eigh

    if which == "L1":
        L, kernel = ops.L1, projections.kernel1
    elif which == "L2":
        L, kernel = ops.L2, projections.kernel2
    else:
        raise ValueError(f"which must be 'L1' or 'L2', got {which!r}")
    proj = np.eye(ops.dim) - kernel.T @ kernel
    eigval, eigvec = np.linalg.eigh(proj)
    complement = eigvec[:, eigval > 0.5]  # orthonormal basis of the complement
    lam = eigh(
        complement.T @ L @ complement,
        complement.T @ nu_gram @ complement,
        eigvals_only=True,
    )
    delta = 0.5 * float(lam.min())
    if delta <= 0.0:
        raise NumericalError(f"coercivity constant of {which} is non-positive: {delta}")
    return delta
