"""Closed-form test fields: helical Beltrami waves and the ABC flow."""

from __future__ import annotations

import numpy as np

from .torus_field import VELOCITY, Grid, SpectralField


def helical_basis(n) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal e1, e2 perpendicular to n with e1 x e2 = n/|n|."""
    khat = np.asarray(n, dtype=float)
    khat = khat / np.linalg.norm(khat)
    trial = np.array([1.0, 0.0, 0.0]) if abs(khat[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = trial - khat * (trial @ khat)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(khat, e1)
    return e1, e2


def helical_wave_values(grid: Grid, n, amplitude: float = 1.0, phase: float = 0.0) -> np.ndarray:
    """Re[a (e1 + i e2) exp(i k.x + i phase)]: an eigenfield of curl with eigenvalue |k|."""
    e1, e2 = helical_basis(n)
    k = grid.k_spacing * np.asarray(n, dtype=float)
    x, y, z = grid.coordinates
    theta = k[0] * x + k[1] * y + k[2] * z + phase
    c, s = np.cos(theta), np.sin(theta)
    return amplitude * np.stack([e1[i] * c - e2[i] * s for i in range(3)])


def beltrami_field(grid: Grid, modes, amplitudes=None, phases=None) -> SpectralField:
    """Superposition of positive-helicity waves on a single shell |n| = const.

    Such a field satisfies curl u = |k| u, so its advection term is a pure gradient.
    """
    modes = [tuple(m) for m in modes]
    norms = {round(float(np.linalg.norm(m)), 12) for m in modes}
    if len(norms) != 1:
        raise ValueError("all Beltrami modes must lie on one shell")
    amplitudes = [1.0] * len(modes) if amplitudes is None else amplitudes
    phases = [0.0] * len(modes) if phases is None else phases
    vals = sum(helical_wave_values(grid, m, a, ph) for m, a, ph in zip(modes, amplitudes, phases))
    return SpectralField.from_real(grid, vals, VELOCITY)


def abc_values(grid: Grid, A: float = 1.0, B: float = 1.0, C: float = 1.0) -> np.ndarray:
    """Arnold-Beltrami-Childress flow at the lowest wavenumber k = 2 pi / L."""
    k = grid.k_spacing
    x, y, z = grid.coordinates
    zeros = np.zeros(grid.real_shape)
    ux = A * np.sin(k * z) + C * np.cos(k * y) + zeros
    uy = B * np.sin(k * x) + A * np.cos(k * z) + zeros
    uz = C * np.sin(k * y) + B * np.cos(k * x) + zeros
    return np.stack([ux, uy, uz])


def abc_field(grid: Grid, A: float = 1.0, B: float = 1.0, C: float = 1.0) -> SpectralField:
    return SpectralField.from_real(grid, abc_values(grid, A, B, C), VELOCITY)


SHELL2_MODES = [(1, 1, 0), (1, -1, 0), (0, 1, 1), (0, 1, -1), (1, 0, 1), (-1, 0, 1)]


def beltrami_shell2(grid: Grid, amplitude: float = 1.0, seed: int = 0) -> SpectralField:
    """Beltrami field on the |n|^2 = 2 shell with deterministic pseudo-random phases."""
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, len(SHELL2_MODES))
    return beltrami_field(grid, SHELL2_MODES, [amplitude] * len(SHELL2_MODES), phases)
