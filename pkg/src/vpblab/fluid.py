"""Reference pseudo-spectral solver for the two-fluid incompressible limit system.

Fields (rho, u, theta, n, phi, p) on the shared torus obey

    du/dt + u.grad u + grad p = mu Lap u + (1/2) n grad phi,   div u = 0,
    dtheta/dt + u.grad theta = kappa Lap theta,
    dn/dt + u.grad n + sigma n = (sigma/2) Lap n,
    j = n u + sigma (grad phi - grad n / 2),   Lap phi = n,
    rho = -theta (Boussinesq),   w = n theta,

with mu, kappa, sigma supplied by the transport module.  Pressure is
eliminated by Leray projection and reconstructed only on demand.

Time stepping: the linear decay factors (viscosity, conduction, and the
charge damping/diffusion sigma (1 + |k|^2/2)) are integrated exactly per mode
by their exponential factors; advection and the electric force are explicit
first order.  Pure decay problems are therefore reproduced to rounding
accuracy while the nonlinear accuracy matches the kinetic solver's
first-order IMEX family.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import BlowupError, ConfigError
from .xgrid import SpectralGrid


@dataclass(frozen=True)
class FluidConfig:
    x_dims: int = 1
    modes: int = 64
    domain_length: float = 2.0 * math.pi
    dt: float = 1.0e-3
    t_final: float = 0.1
    mu: float = 1.0
    kappa: float = 1.0
    sigma: float = 1.0
    snapshot_every: int = 10
    blowup_factor: float = 1.0e3

    def validate(self) -> None:
        if min(self.mu, self.kappa, self.sigma) <= 0.0:
            raise ConfigError("transport coefficients must be positive")
        if self.dt <= 0.0:
            raise ConfigError("dt must be positive")


@dataclass
class FluidState:
    t: float
    u: np.ndarray  # (3, n_modes) complex, divergence free
    theta: np.ndarray  # (n_modes,)
    n: np.ndarray  # (n_modes,)

    def copy(self) -> "FluidState":
        return FluidState(self.t, self.u.copy(), self.theta.copy(), self.n.copy())


@dataclass
class FluidSnapshot:
    t: float
    u: np.ndarray
    theta: np.ndarray
    rho: np.ndarray
    n: np.ndarray
    phi: np.ndarray
    grad_phi: np.ndarray  # (3, n_modes)
    j: np.ndarray  # (3, n_modes)
    w: np.ndarray


@dataclass
class FluidRunResult:
    config: FluidConfig
    times: np.ndarray
    snapshots: list
    final_state: FluidState
    wall_time: float


class FluidSolver:
    def __init__(self, config: FluidConfig):
        config.validate()
        self.config = config
        self.grid = SpectralGrid.build(config.x_dims, config.modes, config.domain_length)
        k2 = self.grid.k2
        self._decay_cache: dict = {}
        self._k2 = k2

    def _decay(self, dt: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        key = float(dt)
        if key not in self._decay_cache:
            cfg = self.config
            self._decay_cache[key] = (
                np.exp(-cfg.mu * self._k2 * dt),
                np.exp(-cfg.kappa * self._k2 * dt),
                np.exp(-cfg.sigma * (1.0 + 0.5 * self._k2) * dt),
            )
        return self._decay_cache[key]

    # ------------------------------------------------------------------

    def leray_project(self, u_spec: np.ndarray) -> np.ndarray:
        """Remove the gradient part per mode (mode 0 unchanged)."""
        return self.grid.leray(u_spec)

    def phi_of(self, state: FluidState) -> np.ndarray:
        return self.grid.poisson(state.n)

    def grad_phi_of(self, state: FluidState) -> np.ndarray:
        phi = self.phi_of(state)
        out = np.zeros((3, self.grid.n_modes), dtype=complex)
        for ax in range(self.config.x_dims):
            out[ax] = 1j * self.grid.kvec[:, ax] * phi
        return out

    def ohms_law(self, state: FluidState) -> np.ndarray:
        """j = n u + sigma (grad phi - grad n / 2), evaluated spectrally."""
        grid = self.grid
        n_phys = grid.to_phys(state.n)
        j = np.zeros((3, grid.n_modes), dtype=complex)
        for i in range(3):
            j[i] = grid.dealias(grid.to_spec(n_phys * grid.to_phys(state.u[i])))
        gp = self.grad_phi_of(state)
        for ax in range(self.config.x_dims):
            j[ax] += self.config.sigma * (gp[ax] - 0.5j * grid.kvec[:, ax] * state.n)
        return j

    def internal_energy(self, state: FluidState) -> np.ndarray:
        grid = self.grid
        return grid.dealias(grid.to_spec(grid.to_phys(state.n) * grid.to_phys(state.theta)))

    def pressure(self, state: FluidState) -> np.ndarray:
        """Reconstruct p from div(u.grad u - f) = -Lap p (on demand only)."""
        grid = self.grid
        adv = self._advection(state)
        force = 0.5 * self._electric_force(state)
        return grid.poisson(-grid.divergence(force - adv))

    # ------------------------------------------------------------------

    def _advect_scalar(self, state: FluidState, scalar: np.ndarray) -> np.ndarray:
        grid = self.grid
        acc = np.zeros(grid.phys_shape)
        for ax in range(self.config.x_dims):
            ds = grid.to_phys(1j * grid.kvec[:, ax] * scalar)
            acc += grid.to_phys(state.u[ax]) * ds
        return grid.dealias(grid.to_spec(acc))

    def _advection(self, state: FluidState) -> np.ndarray:
        """(u . grad) u, dealiased, all three components."""
        grid = self.grid
        u_phys = [grid.to_phys(state.u[i]) for i in range(3)]
        out = np.zeros((3, grid.n_modes), dtype=complex)
        for i in range(3):
            acc = 0.0
            for ax in range(self.config.x_dims):
                dui = grid.to_phys(1j * grid.kvec[:, ax] * state.u[i])
                acc = acc + u_phys[ax] * dui
            out[i] = grid.dealias(grid.to_spec(acc))
        return out

    def _electric_force(self, state: FluidState) -> np.ndarray:
        grid = self.grid
        n_phys = grid.to_phys(state.n)
        gp = self.grad_phi_of(state)
        out = np.zeros((3, grid.n_modes), dtype=complex)
        for ax in range(self.config.x_dims):
            out[ax] = grid.dealias(grid.to_spec(n_phys * grid.to_phys(gp[ax])))
        return out

    def step_fluid(self, state: FluidState, dt: float | None = None) -> FluidState:
        """One step: explicit advection/force, exact linear decay factors."""
        cfg = self.config
        dt = cfg.dt if dt is None else dt
        dec_u, dec_t, dec_n = self._decay(dt)
        rhs_u = -self._advection(state) + 0.5 * self._electric_force(state)
        rhs_u = self.leray_project(rhs_u)
        u = dec_u * (state.u + dt * rhs_u)
        u = self.leray_project(u)
        theta = dec_t * (state.theta + dt * (-self._advect_scalar(state, state.theta)))
        n = dec_n * (state.n + dt * (-self._advect_scalar(state, state.n)))
        new = FluidState(state.t + dt, u, theta, n)
        old_norm = self._total_norm(state)
        new_norm = self._total_norm(new)
        if not np.isfinite(new_norm) or new_norm > cfg.blowup_factor * max(old_norm, 1e-300):
            raise BlowupError(
                f"fluid norm grew from {old_norm:.3e} to {new_norm:.3e} at t={new.t:.4g}"
            )
        return new

    def _total_norm(self, state: FluidState) -> float:
        grid = self.grid
        return math.sqrt(
            grid.l2_norm(state.u) ** 2
            + grid.l2_norm(state.theta) ** 2
            + grid.l2_norm(state.n) ** 2
        )

    def _snapshot(self, state: FluidState) -> FluidSnapshot:
        return FluidSnapshot(
            t=state.t,
            u=state.u.copy(),
            theta=state.theta.copy(),
            rho=-state.theta,
            n=state.n.copy(),
            phi=self.phi_of(state),
            grad_phi=self.grad_phi_of(state),
            j=self.ohms_law(state),
            w=self.internal_energy(state),
        )

    def init_state(self, u0_spec: np.ndarray, theta0_spec: np.ndarray, n0_spec: np.ndarray) -> FluidState:
        u = self.leray_project(np.asarray(u0_spec, dtype=complex))
        n = np.asarray(n0_spec, dtype=complex).copy()
        if abs(n[0]) > 1.0e-12 * max(1.0, self.grid.l2_norm(n)):
            raise ConfigError(f"initial charge is not neutral: mean {n[0]:.3e}")
        n[0] = 0.0
        return FluidState(0.0, u, np.asarray(theta0_spec, dtype=complex).copy(), n)

    def run(self, state: FluidState, t_final: float | None = None) -> FluidRunResult:
        cfg = self.config
        t_final = cfg.t_final if t_final is None else t_final
        n_steps = int(round((t_final - state.t) / cfg.dt))
        snapshots = [self._snapshot(state)]
        times = [state.t]
        t0 = time.perf_counter()
        for istep in range(n_steps):
            state = self.step_fluid(state)
            if (istep + 1) % cfg.snapshot_every == 0 or istep == n_steps - 1:
                snapshots.append(self._snapshot(state))
                times.append(state.t)
        return FluidRunResult(
            config=cfg,
            times=np.asarray(times),
            snapshots=snapshots,
            final_state=state,
            wall_time=time.perf_counter() - t0,
        )
