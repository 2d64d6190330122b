"""Epsilon-sweep orchestration: matched kinetic and fluid runs, limit metrics.

For a shared well-prepared profile the harness runs the fluid reference once
and the kinetic solver per epsilon on the same grid with the same snapshot
times, then reports per-time Sobolev error norms of the six moment
comparisons (rho, u, theta, n, j, w), the limit residuals (incompressibility,
Boussinesq, Ohm), and least-squares log-log slopes over the epsilon list
(excluding the coarsest value, which is pre-asymptotic).
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cache import OperatorSuite
from .config import Settings
from .errors import ConfigError, VpbError
from .fluid import FluidConfig, FluidSolver
from .kinetic import KineticConfig, KineticSolver, Profile, init_well_prepared
from .xgrid import SpectralGrid

ERROR_NAMES = ("rho", "u", "theta", "n", "j", "w")
RESIDUAL_NAMES = ("incompressibility", "boussinesq", "ohm")


def build_profile(name: str, grid: SpectralGrid, amplitude: float, mean_flow: float) -> Profile:
    """Named well-prepared initial profiles on the collocation grid."""
    pts = grid.points()
    if grid.x_dims == 1:
        x = pts
        zeros = np.zeros_like(x)
        if name == "zero":
            return Profile(theta0=zeros, u0=np.stack([zeros] * 3), phi0=zeros)
        if name == "default":
            theta = amplitude * np.cos(x)
            u = np.stack([mean_flow * np.ones_like(x), amplitude * np.sin(x), zeros])
            phi = amplitude * np.sin(x)
            return Profile(theta0=theta, u0=u, phi0=phi)
        if name == "twomode":
            theta = amplitude * (np.cos(x) + 0.5 * np.sin(2 * x))
            u = np.stack(
                [mean_flow * np.ones_like(x), amplitude * (np.sin(x) + 0.3 * np.cos(2 * x)), zeros]
            )
            phi = amplitude * (np.sin(x) - 0.4 * np.cos(2 * x))
            return Profile(theta0=theta, u0=u, phi0=phi)
    else:
        x, y = pts[..., 0], pts[..., 1]
        zeros = np.zeros_like(x)
        if name == "zero":
            return Profile(theta0=zeros, u0=np.stack([zeros] * 3), phi0=zeros)
        if name in ("default", "taylor-green"):
            theta = amplitude * np.cos(x) * np.cos(y)
            u = np.stack(
                [
                    amplitude * np.cos(x) * np.sin(y) + mean_flow,
                    -amplitude * np.sin(x) * np.cos(y),
                    zeros,
                ]
            )
            phi = amplitude * np.sin(x) * np.sin(y)
            return Profile(theta0=theta, u0=u, phi0=phi)
    raise ConfigError(f"unknown profile {name!r} for x_dims={grid.x_dims}")


@dataclass
class SweepReport:
    epsilons: list
    times: np.ndarray
    errors: dict  # name -> (n_eps, n_times)
    residuals: dict  # name -> (n_eps, n_times)
    slopes: dict  # name -> fitted log-log slope at final time
    sobolev_index: int
    kinetic_config_hash: str
    fluid_config_hash: str
    failed: list  # [(epsilon, message)]
    wall_time: float

    def to_summary(self) -> dict:
        return {
            "epsilons": list(self.epsilons),
            "times": self.times.tolist(),
            "errors": {k: np.asarray(v).tolist() for k, v in self.errors.items()},
            "residuals": {k: np.asarray(v).tolist() for k, v in self.residuals.items()},
            "slopes": self.slopes,
            "sobolev_index": self.sobolev_index,
            "kinetic_config_hash": self.kinetic_config_hash,
            "fluid_config_hash": self.fluid_config_hash,
            "failed": [[e, msg] for e, msg in self.failed],
            "wall_time": self.wall_time,
        }

    @classmethod
    def from_summary(cls, data: dict) -> "SweepReport":
        return cls(
            epsilons=list(data["epsilons"]),
            times=np.asarray(data["times"]),
            errors={k: np.asarray(v) for k, v in data["errors"].items()},
            residuals={k: np.asarray(v) for k, v in data["residuals"].items()},
            slopes=dict(data["slopes"]),
            sobolev_index=int(data["sobolev_index"]),
            kinetic_config_hash=data["kinetic_config_hash"],
            fluid_config_hash=data["fluid_config_hash"],
            failed=[(float(e), m) for e, m in data["failed"]],
            wall_time=float(data["wall_time"]),
        )


def kinetic_config_from(settings: Settings, epsilon: float) -> KineticConfig:
    return KineticConfig(
        x_dims=settings.x_dims,
        modes=settings.modes,
        domain_length=settings.domain_length,
        epsilon=epsilon,
        dt=settings.dt,
        t_final=settings.t_final,
        scheme=settings.scheme,
        nonlinearity=settings.nonlinearity,
        collisions=settings.collisions,
        fields=settings.fields,
        picard=settings.picard,
        picard_tol=settings.picard_tol,
        picard_max_iters=settings.picard_max_iters,
        snapshot_every=settings.snapshot_every,
        init_completion=settings.init_completion,
        blowup_factor=settings.blowup_factor,
        n_diag=settings.n_diag,
    )


def fluid_config_from(settings: Settings, suite: OperatorSuite) -> FluidConfig:
    return FluidConfig(
        x_dims=settings.x_dims,
        modes=settings.modes,
        domain_length=settings.domain_length,
        dt=settings.dt,
        t_final=settings.t_final,
        mu=suite.transport.mu,
        kappa=suite.transport.kappa,
        sigma=suite.transport.sigma,
        snapshot_every=settings.snapshot_every,
        blowup_factor=settings.blowup_factor,
    )


def run_fluid_reference(suite: OperatorSuite, settings: Settings):
    """Run the limit system from the shared profile; returns (solver, result)."""
    cfg = fluid_config_from(settings, suite)
    solver = FluidSolver(cfg)
    grid = solver.grid
    prof = build_profile(settings.profile, grid, settings.amplitude, settings.mean_flow)
    theta = grid.to_spec(prof.theta0)
    u = np.stack([grid.to_spec(prof.u0[i]) for i in range(3)])
    phi = grid.to_spec(prof.phi0)
    phi[grid.k2 == 0.0] = 0.0
    n = -grid.k2 * phi
    state = solver.init_state(u, theta, n)
    return solver, solver.run(state)


def _kinetic_task(suite: OperatorSuite, settings: Settings, epsilon: float):
    cfg = kinetic_config_from(settings, epsilon)
    solver = KineticSolver(
        suite.basis, suite.ops, suite.moments, suite.projections, suite.transport, cfg
    )
    prof = build_profile(settings.profile, solver.grid, settings.amplitude, settings.mean_flow)
    state = init_well_prepared(solver, prof)
    return solver, solver.run(state)


def run_sweep(suite: OperatorSuite, settings: Settings) -> SweepReport:
    """Fluid reference once, kinetic per epsilon (thread pool), error series."""
    t0 = time.perf_counter()
    epsilons = list(settings.epsilons)
    if not epsilons or any(e <= 0.0 or e > 1.0 for e in epsilons):
        raise ConfigError(f"epsilons must lie in (0, 1], got {epsilons}")
    s_idx = settings.error_sobolev_index
    sigma = suite.transport.sigma

    fluid_solver, fluid_res = run_fluid_reference(suite, settings)
    grid = fluid_solver.grid
    times = fluid_res.times
    n_t = len(times)

    errors = {name: np.full((len(epsilons), n_t), np.nan) for name in ERROR_NAMES}
    residuals = {name: np.full((len(epsilons), n_t), np.nan) for name in RESIDUAL_NAMES}
    failed: list = []

    def process(idx_eps):
        idx, eps = idx_eps
        solver, result = _kinetic_task(suite, settings, eps)
        if len(result.times) != n_t or np.max(np.abs(result.times - times)) > 1e-12:
            raise VpbError("kinetic and fluid snapshot times differ")
        for m, snap in enumerate(result.snapshots):
            fl = fluid_res.snapshots[m]
            mom = snap.moments
            pu = grid.leray(mom.u)
            errors["rho"][idx, m] = grid.sobolev_norm(mom.rho - fl.rho, s_idx)
            errors["u"][idx, m] = grid.sobolev_norm(pu - fl.u, s_idx)
            errors["theta"][idx, m] = grid.sobolev_norm(mom.theta - fl.theta, s_idx)
            errors["n"][idx, m] = grid.sobolev_norm(mom.n - fl.n, s_idx)
            errors["j"][idx, m] = grid.sobolev_norm(mom.j - fl.j, s_idx)
            errors["w"][idx, m] = grid.sobolev_norm(mom.w - fl.w, s_idx)
            residuals["incompressibility"][idx, m] = grid.sobolev_norm(
                grid.divergence(mom.u), s_idx
            )
            residuals["boussinesq"][idx, m] = grid.sobolev_norm(mom.rho + mom.theta, s_idx)
            n_phys = grid.to_phys(mom.n)
            ohm = mom.j.copy()
            for i in range(3):
                ohm[i] -= grid.dealias(grid.to_spec(n_phys * grid.to_phys(pu[i])))
            for ax in range(grid.x_dims):
                ohm[ax] -= sigma * (
                    mom.grad_phi[ax] - 0.5j * grid.kvec[:, ax] * mom.n
                )
            residuals["ohm"][idx, m] = grid.sobolev_norm(ohm, s_idx)

    if settings.threads > 1:
        with ThreadPoolExecutor(max_workers=settings.threads) as pool:
            futures = {pool.submit(process, (i, e)): e for i, e in enumerate(epsilons)}
            for fut, eps in futures.items():
                try:
                    fut.result()
                except VpbError as exc:
                    failed.append((eps, str(exc)))
    else:
        for i, eps in enumerate(epsilons):
            try:
                process((i, eps))
            except VpbError as exc:
                failed.append((eps, str(exc)))

    slopes = {}
    order = np.argsort(epsilons)[::-1]  # descending epsilon
    fit_idx = order[1:]  # exclude the coarsest epsilon
    for name, table in {**errors, **residuals}.items():
        vals = np.asarray(table)[:, -1]
        sel = [i for i in fit_idx if np.isfinite(vals[i]) and vals[i] > 0.0]
        if len(sel) >= 2:
            slope, _ = np.polyfit(np.log([epsilons[i] for i in sel]), np.log(vals[sel]), 1)
            slopes[name] = float(slope)
        else:
            slopes[name] = float("nan")

    return SweepReport(
        epsilons=epsilons,
        times=times,
        errors=errors,
        residuals=residuals,
        slopes=slopes,
        sobolev_index=s_idx,
        kinetic_config_hash=settings.config_hash(),
        fluid_config_hash=settings.config_hash(),
        failed=failed,
        wall_time=time.perf_counter() - t0,
    )


# ----------------------------------------------------------------------------
# report emission
# ----------------------------------------------------------------------------


def emit_report(report: SweepReport, outdir: Path) -> dict:
    """Write errors.csv, residuals.csv, summary.json, digest.txt; returns paths."""
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        paths = {
            "errors_csv": outdir / "errors.csv",
            "residuals_csv": outdir / "residuals.csv",
            "summary_json": outdir / "summary.json",
            "digest_txt": outdir / "digest.txt",
        }
        _write_matrix_csv(paths["errors_csv"], report, report.errors)
        _write_matrix_csv(paths["residuals_csv"], report, report.residuals)
        with open(paths["summary_json"], "w") as fh:
            json.dump(report.to_summary(), fh, indent=1, sort_keys=True)
        with open(paths["digest_txt"], "w") as fh:
            fh.write(render_digest(report))
    except OSError as exc:
        raise VpbError(f"cannot write report under {outdir}: {exc}") from exc
    return {k: str(v) for k, v in paths.items()}


def _write_matrix_csv(path: Path, report: SweepReport, tables: dict) -> None:
    names = sorted(tables)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["time"] + [
            f"{name}[eps={eps:g}]" for eps in report.epsilons for name in names
        ]
        writer.writerow(header)
        for m, t in enumerate(report.times):
            row = [f"{t:.10g}"]
            for eps_i in range(len(report.epsilons)):
                for name in names:
                    row.append(f"{tables[name][eps_i][m]:.12e}")
            writer.writerow(row)


def render_digest(report: SweepReport) -> str:
    lines = ["epsilon sweep digest", "====================", ""]
    lines.append(f"epsilons: {', '.join(f'{e:g}' for e in report.epsilons)}")
    lines.append(f"final time: {report.times[-1]:.6g}   H^s index: {report.sobolev_index}")
    lines.append(f"config hash: {report.kinetic_config_hash}")
    if report.failed:
        lines.append("FAILED cells:")
        for eps, msg in report.failed:
            lines.append(f"  eps={eps:g}: {msg}")
    lines.append("")
    lines.append(f"{'quantity':<20}" + "".join(f"{e:>12.4g}" for e in report.epsilons) + f"{'slope':>10}")
    for name in (*ERROR_NAMES, *RESIDUAL_NAMES):
        table = report.errors.get(name, report.residuals.get(name))
        vals = np.asarray(table)[:, -1]
        lines.append(
            f"{name:<20}"
            + "".join(f"{v:>12.3e}" for v in vals)
            + f"{report.slopes.get(name, float('nan')):>10.2f}"
        )
    lines.append("")
    lines.append(f"wall time: {report.wall_time:.1f} s")
    return "\n".join(lines) + "\n"
