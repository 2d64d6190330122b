"""Periodic Fourier grid shared by the kinetic and fluid solvers.

Fields live on a torus [0, L)^d, d in {1, 2}, sampled on `modes` collocation
points per axis.  Spectral storage is rfft-based (real fields), flattened to a
single leading mode axis so per-mode linear algebra is uniform across
dimensions.  Velocity-space objects keep all three components; wavevectors are
embedded in R^3 with zeros in the untransformed directions.

Conventions: forward-normalized transforms (coefficients are Fourier series
coefficients), Nyquist modes forced to zero, 2/3-rule dealiasing masks for
pseudo-spectral products, and Parseval weights such that

    Int |h|^2 dx = sum_k parseval_weight[k] |h_hat[k]|^2 .
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class SpectralGrid:
    x_dims: int
    modes: int
    length: float
    kvec: np.ndarray = field(repr=False)  # (n_modes, 3) physical wavevectors
    k2: np.ndarray = field(repr=False)  # (n_modes,)
    parseval_weight: np.ndarray = field(repr=False)  # (n_modes,)
    dealias_keep: np.ndarray = field(repr=False)  # (n_modes,) bool
    nyquist_keep: np.ndarray = field(repr=False)  # (n_modes,) bool
    spec_shape: tuple  # unflattened spectral shape
    phys_shape: tuple

    @classmethod
    def build(cls, x_dims: int, modes: int, length: float) -> "SpectralGrid":
        if x_dims not in (1, 2):
            raise ConfigError(f"x_dims must be 1 or 2, got {x_dims}")
        if modes < 4 or modes % 2:
            raise ConfigError(f"modes must be even and >= 4, got {modes}")
        base = 2.0 * np.pi / length
        if x_dims == 1:
            m = np.arange(modes // 2 + 1)
            kvec = np.zeros((m.size, 3))
            kvec[:, 0] = base * m
            mwave = m[:, None]
            spec_shape = (modes // 2 + 1,)
            phys_shape = (modes,)
            weight = np.where(m == 0, 1.0, 2.0) * length
        else:
            mx = np.fft.fftfreq(modes, 1.0 / modes).astype(int)
            my = np.arange(modes // 2 + 1)
            gx, gy = np.meshgrid(mx, my, indexing="ij")
            kvec = np.zeros((gx.size, 3))
            kvec[:, 0] = base * gx.ravel()
            kvec[:, 1] = base * gy.ravel()
            mwave = np.stack([gx.ravel(), gy.ravel()], axis=1)
            spec_shape = (modes, modes // 2 + 1)
            phys_shape = (modes, modes)
            weight = np.where(gy.ravel() == 0, 1.0, 2.0) * length**2
        k2 = np.sum(kvec**2, axis=1)
        cutoff = modes // 3
        dealias = np.all(np.abs(mwave) <= cutoff, axis=1)
        nyq = np.all(np.abs(mwave) < modes // 2, axis=1)
        weight = weight * nyq  # Nyquist never carries energy
        return cls(
            x_dims=x_dims,
            modes=modes,
            length=length,
            kvec=kvec,
            k2=k2,
            parseval_weight=weight,
            dealias_keep=dealias,
            nyquist_keep=nyq,
            spec_shape=spec_shape,
            phys_shape=phys_shape,
        )

    @property
    def n_modes(self) -> int:
        return self.kvec.shape[0]

    def points(self) -> np.ndarray:
        """Collocation points, shape (modes,) in 1D or (modes, modes, 2) in 2D."""
        x = np.arange(self.modes) * (self.length / self.modes)
        if self.x_dims == 1:
            return x
        gx, gy = np.meshgrid(x, x, indexing="ij")
        return np.stack([gx, gy], axis=-1)

    def to_phys(self, spec: np.ndarray) -> np.ndarray:
        """(n_modes, ...) complex -> (phys_shape..., ...) real."""
        trailing = spec.shape[1:]
        arr = spec.reshape(self.spec_shape + trailing)
        if self.x_dims == 1:
            out = np.fft.irfft(arr, n=self.modes, axis=0, norm="forward")
        else:
            out = np.fft.irfftn(
                arr, s=(self.modes, self.modes), axes=(0, 1), norm="forward"
            )
        return out

    def to_spec(self, phys: np.ndarray) -> np.ndarray:
        """(phys_shape..., ...) real -> (n_modes, ...) complex, Nyquist zeroed."""
        if self.x_dims == 1:
            arr = np.fft.rfft(phys, axis=0, norm="forward")
        else:
            arr = np.fft.rfftn(phys, axes=(0, 1), norm="forward")
        flat = arr.reshape((self.n_modes,) + phys.shape[self.x_dims :])
        shape = (self.n_modes,) + (1,) * (flat.ndim - 1)
        return flat * self.nyquist_keep.reshape(shape)

    def dealias(self, spec: np.ndarray) -> np.ndarray:
        shape = (self.n_modes,) + (1,) * (spec.ndim - 1)
        return spec * self.dealias_keep.reshape(shape)

    def gradient(self, spec: np.ndarray) -> np.ndarray:
        """Spectral gradient: (n_modes, ...) -> (x_dims, n_modes, ...)."""
        shape = (self.n_modes,) + (1,) * (spec.ndim - 1)
        return np.stack(
            [spec * (1j * self.kvec[:, ax]).reshape(shape) for ax in range(self.x_dims)]
        )

    def divergence(self, vec_spec: np.ndarray) -> np.ndarray:
        """Divergence of a 3-component field (uses the first x_dims components)."""
        out = np.zeros(vec_spec.shape[1:], dtype=complex)
        for ax in range(self.x_dims):
            out = out + 1j * self.kvec[:, ax] * vec_spec[ax]
        return out

    def poisson(self, source: np.ndarray) -> np.ndarray:
        """Solve Laplacian(phi) = source with zero-mean phi."""
        phi = np.zeros_like(source)
        mask = self.k2 > 0.0
        phi[mask] = -source[mask] / self.k2[mask]
        return phi

    def leray(self, u_spec: np.ndarray) -> np.ndarray:
        """Remove the gradient part of a 3-component velocity field per mode."""
        k_par = np.zeros_like(u_spec)
        kdotu = np.zeros(u_spec.shape[1:], dtype=complex)
        for ax in range(self.x_dims):
            kdotu = kdotu + self.kvec[:, ax] * u_spec[ax]
        mask = self.k2 > 0.0
        frac = np.where(mask, kdotu / np.where(mask, self.k2, 1.0), 0.0)
        for ax in range(self.x_dims):
            k_par[ax] = self.kvec[:, ax] * frac
        return u_spec - k_par

    def sobolev_norm(self, spec: np.ndarray, s: int = 0) -> float:
        """Discrete H^s norm of a scalar or stacked-component spectral field.

        Components are summed in quadrature (leading axes before the mode axis
        are treated as components when spec.ndim > 1: pass shape (..., n_modes)).
        """
        arr = np.asarray(spec)
        if arr.shape[-1] != self.n_modes:
            raise ValueError("mode axis must be last for sobolev_norm")
        mult = (1.0 + self.k2) ** s * self.parseval_weight
        return float(np.sqrt(np.sum(np.abs(arr) ** 2 * mult).real))

    def l2_norm(self, spec: np.ndarray) -> float:
        return self.sobolev_norm(spec, 0)
