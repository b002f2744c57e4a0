"""Dimensionless local diagnostics on parabolic cylinders.

For a cylinder Q_r = B_r(x0) x Delta_r(t0):

    A     = (nu^2 r)^-1      sup_t int_{B_r} |u|^2
    delta = (nu r)^-1        int_{Q_r} |grad u|^2
    G     = (nu^2 r^2)^-1    int_{Q_r} |u|^3
    J     = (nu^2 r^2)^-1    int_{Q_r} |u| |p|
    K     = nu^-3/2 r^-13/4  int_{Delta_r} (int_{B_r} |p|)^{5/4}
    S     = nu^-7/3 r^-5/3   int_{Q_r} (|u|^{10/3} + |p|^{5/3})

Time integrals use the piecewise-linear interpolant of per-snapshot ball
integrals; the sup in A is the maximum of that interpolant over the window.
"""

from __future__ import annotations

import math
import weakref
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .leray_solver import FluidParams, Snapshot, Trajectory
from .torus_field import (
    Grid,
    SpectralField,
    ball_integrals_everywhere,
    ball_weights,
    make_grid,
    pressure_from_velocity,
    resample_coeffs,
)

CENTERED = "centered"
BACKWARD = "backward"
WINDOWS = (CENTERED, BACKWARD)

DENSITIES = ("u2", "grad2", "u3", "up", "p", "s")


class EmptyWindowError(ValueError):
    """The cylinder's time window does not overlap the trajectory."""


class UnresolvedScaleError(ValueError):
    """A requested scale is too small for the quadrature grid."""


@dataclass(frozen=True)
class ParabolicCylinder:
    center: tuple[float, float, float]
    t0: float
    r: float
    nu: float
    window: str = CENTERED

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"cylinder radius must be positive, got {self.r!r}")
        if not self.nu > 0:
            raise ValueError(f"viscosity must be positive, got {self.nu!r}")
        if self.window not in WINDOWS:
            raise ValueError(f"window must be one of {WINDOWS}, got {self.window!r}")

    @property
    def duration(self) -> float:
        return self.r**2 / self.nu

    def time_window(self) -> tuple[float, float]:
        """(lo, hi) with the lower end clipped at t = 0."""
        lo = max(self.t0 - self.duration, 0.0)
        hi = self.t0 + self.duration if self.window == CENTERED else self.t0
        return lo, hi


@dataclass(frozen=True)
class ScaleDiagnostics:
    r: float
    A: float
    delta: float
    G: float
    J: float
    K: float
    S: float

    @property
    def T(self) -> float:
        return self.A + self.delta

    def as_dict(self) -> dict[str, float]:
        return {"r": self.r, "A": self.A, "delta": self.delta, "G": self.G,
                "J": self.J, "K": self.K, "S": self.S}


@dataclass(frozen=True)
class ScaleIndex:
    n: int
    L: float

    def __post_init__(self):
        if self.n > 0:
            raise ValueError(f"scale index must be <= 0, got {self.n}")

    @property
    def r(self) -> float:
        return self.L * 2.0**self.n


@dataclass(frozen=True)
class ScaleVector:
    alpha: float
    kappa: float
    j: float
    g: float

    @property
    def size(self) -> float:
        return self.alpha + self.kappa + self.j + self.g

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.kappa, self.j, self.g])

    @classmethod
    def from_array(cls, a) -> "ScaleVector":
        return cls(*(float(x) for x in a))


def to_scale_vector(d: ScaleDiagnostics) -> ScaleVector:
    """(alpha, kappa, j, g) = (A, K^{8/5}, J, G^{2/3})."""
    vals = (d.A, d.K, d.J, d.G)
    if not all(math.isfinite(v) for v in vals):
        raise ValueError("diagnostics must be finite")
    return ScaleVector(d.A, d.K ** 1.6, d.J, d.G ** (2.0 / 3.0))


def interval_weights(times: np.ndarray, a: float, b: float) -> np.ndarray:
    """Weights w with sum_i w_i f_i = int_a^b of the linear interpolant of (times, f)."""
    t = np.asarray(times, dtype=float)
    w = np.zeros_like(t)
    if t.size < 2:
        return w
    t_l, t_r = t[:-1], t[1:]
    lo = np.clip(a, t_l, t_r)
    hi = np.clip(b, t_l, t_r)
    h = t_r - t_l
    w[:-1] += ((t_r - lo) ** 2 - (t_r - hi) ** 2) / (2.0 * h)
    w[1:] += ((hi - t_l) ** 2 - (lo - t_l) ** 2) / (2.0 * h)
    return w


def interpolant_max(times: np.ndarray, values: np.ndarray, a: float, b: float) -> float:
    """Maximum of the linear interpolant over [a, b] (interior nodes plus both ends)."""
    inside = (times > a) & (times < b)
    ends = np.interp([a, b], times, values)
    return float(max(np.max(values[inside], initial=-np.inf), ends.max()))


class Quadrature:
    """Real-space densities of a trajectory on a (possibly finer) quadrature grid.

    Densities are computed lazily per snapshot and kept in a bounded cache.
    """

    def __init__(self, tr: Trajectory, oversample: int = 1, cache_size: int = 32):
        if oversample < 1 or int(oversample) != oversample:
            raise ValueError("oversample must be a positive integer")
        self.tr = tr
        self.src = tr.grid
        self.grid: Grid = make_grid(tr.grid.N * int(oversample), tr.grid.L)
        self.times = tr.times
        self._cache: OrderedDict[int, dict[str, np.ndarray]] = OrderedDict()
        self._cache_size = cache_size

    def _real(self, coeffs: np.ndarray) -> np.ndarray:
        if self.grid is self.src or self.grid.N == self.src.N:
            return self.src.inverse(coeffs)
        return self.grid.inverse(resample_coeffs(coeffs, self.src, self.grid))

    def densities(self, i: int) -> dict[str, np.ndarray]:
        if i in self._cache:
            self._cache.move_to_end(i)
            return self._cache[i]
        snap = self.tr.snapshots[i]
        c = snap.u.coeffs
        k = self.src.k
        u = self._real(c)
        grads = self._real(np.stack([1j * k[j] * c[m] for m in range(3) for j in range(3)]))
        # uncached so stored snapshots do not accumulate pressure fields
        p = np.abs(self._real(pressure_from_velocity(snap.u).coeffs))
        speed2 = np.sum(u * u, axis=0)
        speed = np.sqrt(speed2)
        out = {
            "u2": speed2,
            "grad2": np.sum(grads * grads, axis=0),
            "u3": speed2 * speed,
            "up": speed * p,
            "p": p,
            "s": speed ** (10.0 / 3.0) + p ** (5.0 / 3.0),
        }
        self._cache[i] = out
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return out

    def window_indices(self, lo: float, hi: float) -> tuple[np.ndarray, float, float]:
        """Snapshot indices whose interpolant touches [lo, hi], and the clipped window."""
        t = self.times
        a, b = max(lo, t[0]), min(hi, t[-1])
        if not b > a:
            raise EmptyWindowError(
                f"time window ({lo:g}, {hi:g}) does not overlap trajectory span ({t[0]:g}, {t[-1]:g})")
        first = max(int(np.searchsorted(t, a, side="right")) - 1, 0)
        last = min(int(np.searchsorted(t, b, side="left")), t.size - 1)
        return np.arange(first, last + 1), a, b

    def ball_series(self, names, center, r: float, idx: np.ndarray) -> dict[str, np.ndarray]:
        w = ball_weights(self.grid, center, r)
        dv = self.grid.cell_volume
        out = {n: np.empty(idx.size) for n in names}
        for m, i in enumerate(idx):
            dens = self.densities(int(i))
            for n in names:
                out[n][m] = float(np.sum(w * dens[n]) * dv)
        return out


_QUADS: "weakref.WeakKeyDictionary[Trajectory, Quadrature]" = weakref.WeakKeyDictionary()


def quadrature_for(tr: Trajectory, oversample: int = 1) -> Quadrature:
    """Shared quadrature engine per trajectory (default oversampling only)."""
    if oversample != 1:
        return Quadrature(tr, oversample)
    q = _QUADS.get(tr)
    if q is None:
        q = _QUADS[tr] = Quadrature(tr)
    return q


def _check_cylinder(tr: Trajectory, c: ParabolicCylinder):
    if not math.isclose(c.nu, tr.nu, rel_tol=1e-12):
        raise ValueError(f"cylinder viscosity {c.nu} differs from trajectory viscosity {tr.nu}")


def diagnostics(tr: Trajectory, c: ParabolicCylinder, quad: Quadrature | None = None) -> ScaleDiagnostics:
    """All six operators on one cylinder."""
    _check_cylinder(tr, c)
    q = quad or quadrature_for(tr)
    idx, a, b = q.window_indices(*c.time_window())
    series = q.ball_series(DENSITIES, c.center, c.r, idx)
    t = q.times[idx]
    w = interval_weights(t, a, b)
    nu, r = c.nu, c.r
    A = interpolant_max(t, series["u2"], a, b) / (nu**2 * r)
    delta = float(w @ series["grad2"]) / (nu * r)
    G = float(w @ series["u3"]) / (nu**2 * r**2)
    J = float(w @ series["up"]) / (nu**2 * r**2)
    K = float(w @ series["p"] ** 1.25) / (nu**1.5 * r**3.25)
    S = float(w @ series["s"]) / (nu ** (7.0 / 3.0) * r ** (5.0 / 3.0))
    return ScaleDiagnostics(r, max(A, 0.0), max(delta, 0.0), max(G, 0.0), max(J, 0.0),
                            max(K, 0.0), max(S, 0.0))


def op_A(tr: Trajectory, c: ParabolicCylinder, quad: Quadrature | None = None) -> float:
    return diagnostics(tr, c, quad).A


def op_delta(tr: Trajectory, c: ParabolicCylinder, quad: Quadrature | None = None) -> float:
    return diagnostics(tr, c, quad).delta


def op_G(tr: Trajectory, c: ParabolicCylinder, quad: Quadrature | None = None) -> float:
    return diagnostics(tr, c, quad).G


def op_J(tr: Trajectory, c: ParabolicCylinder, quad: Quadrature | None = None) -> float:
    return diagnostics(tr, c, quad).J


def op_K(tr: Trajectory, c: ParabolicCylinder, quad: Quadrature | None = None) -> float:
    return diagnostics(tr, c, quad).K


def op_S(tr: Trajectory, c: ParabolicCylinder, quad: Quadrature | None = None) -> float:
    return diagnostics(tr, c, quad).S


def min_resolved_index(grid: Grid, cells: float = 4.0) -> int:
    """Most negative n with L 2^n >= cells * dx."""
    return -int(math.floor(math.log2(grid.N / cells) + 1e-12))


def scale_chain(tr: Trajectory, x0, t0: float, n_min: int, window: str = BACKWARD,
                quad: Quadrature | None = None) -> list[ScaleDiagnostics]:
    """Diagnostics at r_n = L 2^n for n = 0, -1, ..., n_min."""
    q = quad or quadrature_for(tr)
    if n_min > 0:
        raise ValueError("n_min must be <= 0")
    if n_min < min_resolved_index(q.grid):
        raise UnresolvedScaleError(
            f"r = L 2^{n_min} is below four quadrature cells (n_min >= {min_resolved_index(q.grid)})")
    L = tr.grid.L
    return [diagnostics(tr, ParabolicCylinder(tuple(x0), t0, L * 2.0**n, tr.nu, window), q)
            for n in range(0, n_min - 1, -1)]


@dataclass(frozen=True)
class FlaggedPoint:
    x0: tuple[float, float, float]
    t0: float
    estimate: float
    smallest_scale: float
    deltas: tuple[float, ...]


@dataclass
class FlaggedSet:
    points: list[FlaggedPoint]
    eps: float
    scales: tuple[float, ...]
    window: str
    probed: int
    nu: float
    deltas: np.ndarray | None = field(default=None, repr=False)
    lattice_x: np.ndarray | None = field(default=None, repr=False)
    lattice_t: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.points)


def scan_singular_candidates(tr: Trajectory, eps: float, n_min: int | None = None, n_max: int = 0,
                             spacing_x: float | None = None, spacing_t: float | None = None,
                             window: str = BACKWARD, tail: int = 3,
                             quad: Quadrature | None = None) -> FlaggedSet:
    """Flag lattice points whose delta stays above eps on the ``tail`` finest scales.

    The lattice has spatial spacing ``spacing_x`` (a multiple of the quadrature
    cell, default L/16) and time points t0 = k * spacing_t in (0, T]
    (default T/16). Ball integrals at all lattice centers come from one
    circular convolution per snapshot and scale.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if window not in WINDOWS:
        raise ValueError(f"window must be one of {WINDOWS}")
    q = quad or quadrature_for(tr)
    g = q.grid
    L = g.L
    if n_min is None:
        n_min = min_resolved_index(g)
    if n_min < min_resolved_index(g):
        raise UnresolvedScaleError(f"n_min={n_min} below resolved range")
    if n_max > 0 or n_max < n_min:
        raise ValueError("need n_min <= n_max <= 0")
    ns = list(range(n_max, n_min - 1, -1))
    if len(ns) < tail:
        raise ValueError(f"need at least {tail} scales")
    spacing_x = L / 16 if spacing_x is None else spacing_x
    stride = spacing_x / g.dx
    if abs(stride - round(stride)) > 1e-9 or round(stride) < 1:
        raise ValueError(f"spatial spacing {spacing_x} is not a multiple of the cell {g.dx}")
    stride = int(round(stride))
    t_start, t_end = tr.span
    spacing_t = (t_end - t_start) / 16 if spacing_t is None else spacing_t
    if not spacing_t > 0:
        raise ValueError("time spacing must be positive")
    nt = int(math.floor((t_end - t_start) / spacing_t + 1e-9))
    lattice_t = t_start + spacing_t * np.arange(1, nt + 1)
    coords = g.dx * np.arange(0, g.N, stride)

    times = q.times
    nsnap = times.size
    # per-snapshot lattice ball integrals for every scale: (scale, snapshot, x, y, z)
    radii = [L * 2.0**n for n in ns]
    balls = np.empty((len(radii), nsnap, coords.size, coords.size, coords.size))
    for i in range(nsnap):
        dens = q.densities(i)["grad2"]
        for s, r in enumerate(radii):
            full = ball_integrals_everywhere(dens, g, r)
            balls[s, i] = full[::stride, ::stride, ::stride]
    deltas = np.empty((lattice_t.size, len(radii)) + balls.shape[2:])
    for it, t0 in enumerate(lattice_t):
        for s, r in enumerate(radii):
            cyl = ParabolicCylinder((0.0, 0.0, 0.0), float(t0), r, tr.nu, window)
            lo, hi = cyl.time_window()
            a, b = max(lo, times[0]), min(hi, times[-1])
            if not b > a:
                raise EmptyWindowError(f"empty window at t0={t0:g}, r={r:g}")
            w = interval_weights(times, a, b)
            deltas[it, s] = np.tensordot(w, balls[s], axes=(0, 0)) / (tr.nu * r)
    deltas = np.maximum(deltas, 0.0)
    est = deltas[:, -tail:].min(axis=1)

    points = []
    for it, t0 in enumerate(lattice_t):
        hits = np.argwhere(est[it] > eps)
        for ix, iy, iz in hits:  # argwhere is lexicographic, so output is sorted by (t0, x0)
            points.append(FlaggedPoint(
                (float(coords[ix]), float(coords[iy]), float(coords[iz])), float(t0),
                float(est[it, ix, iy, iz]), radii[-1],
                tuple(float(v) for v in deltas[it, :, ix, iy, iz])))
    return FlaggedSet(points, eps, tuple(radii), window, int(est.size), tr.nu,
                      deltas=deltas, lattice_x=coords, lattice_t=lattice_t)


# --- exact symmetries of the equations, used to test invariance ------------

def parabolic_rescale(tr: Trajectory, mu: int) -> Trajectory:
    """u_mu(x, t) = mu u(mu x, mu^2 t) on the same torus, sampled on a mu-times finer grid.

    The rescaled field has period L/mu, so its coefficients live on the
    sublattice mu n. Snapshot times become t / mu^2; nu is unchanged.
    """
    if int(mu) != mu or mu < 1:
        raise ValueError("mu must be a positive integer")
    mu = int(mu)
    g = tr.grid
    dst = make_grid(g.N * mu, g.L)
    n1, n2, n3 = (np.asarray(a).ravel() for a in (np.fft.fftfreq(g.N, 1.0 / g.N), np.fft.fftfreq(g.N, 1.0 / g.N),
                                                  np.arange(g.N // 2 + 1)))
    i1 = (mu * n1.astype(int)) % dst.N
    i2 = (mu * n2.astype(int)) % dst.N
    i3 = mu * n3.astype(int)
    snaps = []
    for s in tr.snapshots:
        c = np.zeros((3,) + dst.spectral_shape, dtype=complex)
        c[:, i1[:, None, None], i2[None, :, None], i3[None, None, :]] = mu * s.u.coeffs
        snaps.append(Snapshot(s.t / mu**2, SpectralField(dst, c)))
    p = tr.params
    return Trajectory(FluidParams(p.nu, dst, p.lam, p.support_fraction), snaps)


def unit_rescale(tr: Trajectory, length: float, time: float) -> Trajectory:
    """Change of units x -> length x, t -> time t: u scales by length/time, nu by length^2/time."""
    if not length > 0 or not time > 0:
        raise ValueError("unit factors must be positive")
    g = tr.grid
    dst = make_grid(g.N, g.L * length)
    v = length / time
    snaps = [Snapshot(s.t * time, SpectralField(dst, s.u.coeffs * v)) for s in tr.snapshots]
    p = tr.params
    return Trajectory(FluidParams(p.nu * length**2 / time, dst, p.lam, p.support_fraction), snaps)


__all__ = [
    "CENTERED", "BACKWARD", "EmptyWindowError", "UnresolvedScaleError", "ParabolicCylinder",
    "ScaleDiagnostics", "ScaleIndex", "ScaleVector", "to_scale_vector", "interval_weights",
    "interpolant_max", "Quadrature", "quadrature_for", "diagnostics", "op_A", "op_delta", "op_G",
    "op_J", "op_K", "op_S", "min_resolved_index", "scale_chain", "FlaggedPoint", "FlaggedSet",
    "scan_singular_candidates", "parabolic_rescale", "unit_rescale",
]
