"""Time integration of the Leray-regularized Navier-Stokes equations.

    du/dt = nu Lap u - <u>_lambda . grad u - grad p,   div u = 0,   mean u = 0

on the periodic torus, with an integrating-factor RK4 scheme: the viscous
factor exp(-nu |k|^2 dt) is applied exactly and the projected, dealiased
nonlinearity is advanced explicitly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .torus_field import (
    SCALAR,
    VELOCITY,
    Grid,
    MollifierSpec,
    SpectralField,
    leray_project_coeffs,
    pressure_from_velocity,
)

log = logging.getLogger(__name__)

CFL_NUMBER = 0.5


class CFLError(ValueError):
    """Requested time step violates the advective CFL bound."""


class SimulationError(RuntimeError):
    """Non-finite values appeared during time stepping."""


@dataclass(frozen=True)
class FluidParams:
    nu: float
    grid: Grid
    lam: float = 1.0
    support_fraction: float = 0.25

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"viscosity must be positive, got {self.nu!r}")
        if not self.lam >= 1:
            raise ValueError(f"lambda must be >= 1, got {self.lam!r}")

    @cached_property
    def mollifier(self) -> MollifierSpec:
        return MollifierSpec(self.lam, self.support_fraction)

    @cached_property
    def multiplier(self) -> np.ndarray:
        return self.mollifier.multiplier(self.grid)


@dataclass(frozen=True, eq=False)
class Snapshot:
    t: float
    u: SpectralField
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def energy(self) -> float:
        """Kinetic energy 1/2 int |u|^2."""
        return 0.5 * self.u.norm2()

    @property
    def enstrophy(self) -> float:
        """int |grad u|^2."""
        return self.u.gradient_norm2()

    @property
    def p(self) -> SpectralField:
        if "p" not in self._cache:
            self._cache["p"] = pressure_from_velocity(self.u)
        return self._cache["p"]


@dataclass(eq=False)
class Trajectory:
    """Snapshots of one run plus per-step scalar series.

    ``series`` holds arrays ``t``, ``energy`` (1/2 ||u||^2), ``enstrophy``
    (||grad u||^2) and ``dissipation_integral`` (running int_0^t ||grad u||^2).
    """

    params: FluidParams
    snapshots: list[Snapshot]
    series: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.snapshots:
            raise ValueError("a trajectory needs at least one snapshot")
        ts = self.times
        if np.any(np.diff(ts) <= 0):
            raise ValueError("snapshot times must be strictly increasing")
        if not self.series:
            self.series = _series_from_snapshots(self.snapshots)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def grid(self) -> Grid:
        return self.params.grid

    @property
    def nu(self) -> float:
        return self.params.nu

    @property
    def E0(self) -> float:
        """Squared L2 norm of the initial velocity."""
        return self.snapshots[0].u.norm2()

    @property
    def dissipation_integral(self) -> float:
        return float(self.series["dissipation_integral"][-1])

    @property
    def span(self) -> tuple[float, float]:
        return self.snapshots[0].t, self.snapshots[-1].t


def _series_from_snapshots(snaps) -> dict[str, np.ndarray]:
    t = np.array([s.t for s in snaps])
    ens = np.array([s.enstrophy for s in snaps])
    diss = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (ens[1:] + ens[:-1]))])
    return {
        "t": t,
        "energy": np.array([s.energy for s in snaps]),
        "enstrophy": ens,
        "dissipation_integral": diss,
    }


def _nonlinear(c: np.ndarray, params: FluidParams) -> np.ndarray:
    """-P[<u>_lambda . grad u] with 2/3-rule dealiasing."""
    grid = params.grid
    c = c * grid.dealias_mask
    v = grid.inverse(c * params.multiplier)
    k = grid.k
    grads = grid.inverse(np.stack([np.stack([1j * k[j] * c[i] for j in range(3)]) for i in range(3)]))
    adv = np.einsum("jxyz,ijxyz->ixyz", v, grads)
    adv_hat = grid.forward(adv) * grid.dealias_mask
    adv_hat[:, 0, 0, 0] = 0.0
    return -leray_project_coeffs(grid, adv_hat)


def rhs(u: SpectralField, params: FluidParams) -> SpectralField:
    """P[nu Lap u - <u>_lambda . grad u]; the projection absorbs -grad p."""
    lin = -params.nu * params.grid.k2 * u.coeffs
    return u.with_coeffs(lin + _nonlinear(u.coeffs, params))


def max_speed(u: SpectralField) -> float:
    # uncached transform: stored snapshots should not carry real-space copies
    vals = u.grid.inverse(u.coeffs)
    return float(np.sqrt(np.max(np.sum(vals**2, axis=0))))


def cfl_limit(u: SpectralField) -> float:
    vmax = max_speed(u)
    return math.inf if vmax == 0 else CFL_NUMBER * u.grid.dx / vmax


def step(s: Snapshot, dt: float, params: FluidParams) -> Snapshot:
    """One integrating-factor RK4 step."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    limit = cfl_limit(s.u)
    if dt > limit:
        raise CFLError(f"dt={dt:g} exceeds advective CFL bound {limit:g}")
    return Snapshot(s.t + dt, s.u.with_coeffs(_ifrk4(s.u.coeffs, dt, params)))


def _ifrk4(c: np.ndarray, dt: float, params: FluidParams) -> np.ndarray:
    lin = -params.nu * params.grid.k2
    e_half = np.exp(0.5 * dt * lin)
    e_full = e_half * e_half
    a = _nonlinear(c, params)
    b = _nonlinear(e_half * (c + 0.5 * dt * a), params)
    cc = _nonlinear(e_half * c + 0.5 * dt * b, params)
    d = _nonlinear(e_full * c + dt * e_half * cc, params)
    out = e_full * c + (dt / 6.0) * (e_full * a + 2.0 * e_half * (b + cc) + d)
    out[:, 0, 0, 0] = 0.0
    return out


def simulate(u0: SpectralField, T: float, dt: float, params: FluidParams,
             snapshot_stride: int = 1) -> Trajectory:
    """Integrate from t = 0 to T, keeping every ``snapshot_stride``-th state and the final one."""
    if u0.kind != VELOCITY:
        raise ValueError("initial datum must be a velocity field")
    if T < 0:
        raise ValueError("T must be nonnegative")
    if snapshot_stride < 1:
        raise ValueError("snapshot stride must be >= 1")
    nsteps = int(round(T / dt)) if T > 0 else 0
    if nsteps and abs(nsteps * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"T={T} is not a multiple of dt={dt}")
    current = Snapshot(0.0, u0)
    snaps = [current]
    ts, en, ens = [0.0], [current.energy], [current.enstrophy]
    for n in range(1, nsteps + 1):
        nxt = step(current, dt, params)
        # re-anchor the clock to avoid accumulated round-off in t
        current = Snapshot(n * dt, nxt.u)
        e = current.energy
        if not np.isfinite(e):
            raise SimulationError(f"non-finite energy at step {n}")
        ts.append(current.t)
        en.append(e)
        ens.append(current.enstrophy)
        if n % snapshot_stride == 0 or n == nsteps:
            snaps.append(current)
    ts, ens = np.array(ts), np.array(ens)
    diss = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(ts) * (ens[1:] + ens[:-1]))])
    series = {"t": ts, "energy": np.array(en), "enstrophy": ens, "dissipation_integral": diss}
    log.debug("simulated %d steps, final energy %.6e", nsteps, en[-1])
    return Trajectory(params, snaps, series)


@dataclass(frozen=True)
class AprioriReport:
    E0: float
    max_energy_excess: float
    dissipation_integral: float
    dissipation_bound: float
    dissipation_excess: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_energy_excess <= self.tolerance and self.dissipation_excess <= self.tolerance


def apriori_check(tr: Trajectory, rtol: float = 1e-8) -> AprioriReport:
    """Check ||u(t)||^2 <= E0 and int_0^T ||grad u||^2 <= E0 / (2 nu).

    Excesses are signed: negative values mean the bound holds with room.
    """
    E0 = tr.E0
    norms = 2.0 * tr.series["energy"]
    diss = tr.dissipation_integral
    bound = 0.5 * E0 / tr.nu
    return AprioriReport(
        E0=E0,
        max_energy_excess=float(np.max(norms) - E0),
        dissipation_integral=diss,
        dissipation_bound=bound,
        dissipation_excess=diss - bound,
        tolerance=rtol * E0,
    )


def energy_balance_defect(tr: Trajectory) -> float:
    """||u(T)||^2 - ||u(0)||^2 + 2 nu int_0^T ||grad u||^2 (zero for the exact flow)."""
    norms = 2.0 * tr.series["energy"]
    return float(norms[-1] - norms[0] + 2.0 * tr.nu * tr.dissipation_integral)


def frozen_trajectory(u: SpectralField, nu: float, times) -> Trajectory:
    """A trajectory holding the same field at every time; used for kinematic checks."""
    params = FluidParams(nu, u.grid)
    return Trajectory(params, [Snapshot(float(t), u) for t in times])


__all__ = [
    "CFLError", "SimulationError", "FluidParams", "Snapshot", "Trajectory", "rhs", "step",
    "simulate", "apriori_check", "AprioriReport", "energy_balance_defect", "cfl_limit",
    "frozen_trajectory", "SCALAR",
]
