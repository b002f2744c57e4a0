"""Numerical checks of the kinematic inequalities, the localized energy relation
and the heat-kernel test function.

Every ``check_*`` returns a ratio LHS / RHS (or a residual). Constants are
never claimed: they are fitted as maxima over declared ensembles.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .ckn_operators import ScaleDiagnostics, interval_weights
from .io import atomic_write_text
from .leray_solver import Trajectory
from .torus_field import (
    SCALAR,
    VELOCITY,
    Grid,
    SpectralField,
    ball_weights,
    make_grid,
    pressure_from_velocity,
    resample_coeffs,
)


def safe_ratio(num: float, den: float) -> float:
    """num / den with 0/0 := 0; a positive numerator over zero is an error."""
    if den > 0:
        return num / den
    if num == 0 or abs(num) < 1e-300:
        return 0.0
    raise ZeroDivisionError(f"positive numerator {num:g} over zero denominator")


# --- constants ------------------------------------------------------------

@dataclass
class InequalityConstants:
    """Empirical constants keyed by exponent (as strings, e.g. "10/3")."""

    CP: dict[str, float] = field(default_factory=dict)
    CS: dict[str, float] = field(default_factory=dict)
    CL: dict[str, float] = field(default_factory=dict)
    Ctilde: float | None = None
    provenance: dict = field(default_factory=dict)

    @property
    def Cprop1(self) -> float:
        """C^S_{10/3} (1 + C^L_{5/3})."""
        try:
            return self.CS["10/3"] * (1.0 + self.CL["5/3"])
        except KeyError as e:
            raise KeyError(f"missing fitted constant {e.args[0]!r}") from None

    def update(self, table: str, key: str, value: float) -> None:
        """Refit with one more sample: constants only grow."""
        d = getattr(self, table)
        d[key] = max(d.get(key, 0.0), float(value))

    def merge(self, other: "InequalityConstants") -> "InequalityConstants":
        out = InequalityConstants(dict(self.CP), dict(self.CS), dict(self.CL), self.Ctilde,
                                  {**self.provenance, **other.provenance})
        for t in ("CP", "CS", "CL"):
            for k, v in getattr(other, t).items():
                out.update(t, k, v)
        if other.Ctilde is not None:
            out.Ctilde = max(out.Ctilde or 0.0, other.Ctilde)
        return out

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "InequalityConstants":
        d = json.loads(text)
        unknown = set(d) - {"CP", "CS", "CL", "Ctilde", "provenance"}
        if unknown:
            raise ValueError(f"unknown keys in constants file: {sorted(unknown)}")
        return cls(d.get("CP", {}), d.get("CS", {}), d.get("CL", {}), d.get("Ctilde"), d.get("provenance", {}))

    def save(self, path: str) -> None:
        atomic_write_text(path, self.to_json() + "\n")

    @classmethod
    def load(cls, path: str) -> "InequalityConstants":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def exponent_key(x: float) -> str:
    """Canonical key for common rational exponents."""
    for num in range(1, 31):
        for den in (1, 2, 3, 4, 5, 6):
            if abs(x - num / den) < 1e-12 and math.gcd(num, den) == 1:
                return f"{num}/{den}" if den > 1 else str(num)
    return repr(float(x))


# --- pointwise inequalities -------------------------------------------------

def _scalar_samples(f, grid: Grid | None, center):
    """(values, gradient components) on the grid for a scalar field or a callable of the displacement."""
    if isinstance(f, SpectralField):
        if f.kind != SCALAR:
            raise ValueError("Poincare check expects a scalar field")
        return f.real(), f.gradient(), f.grid
    if callable(f):
        if grid is None:
            raise ValueError("a grid is required for callable fields")
        vals, grads = f(grid.displacement(center))
        shape = grid.real_shape
        return (np.broadcast_to(vals, shape),
                np.stack([np.broadcast_to(g, shape) for g in grads]), grid)
    raise TypeError("f must be a scalar SpectralField or a callable")


def check_poincare(f, r: float, alpha: float, center=(0.0, 0.0, 0.0), grid: Grid | None = None) -> float:
    """int_B |f - F|^a / (r^{3-2a} (int_B |grad f|)^a), F the ball average of f."""
    if not r > 0:
        raise ValueError("r must be positive")
    if not 1.0 <= alpha <= 1.5:
        raise ValueError("alpha must lie in [1, 3/2]")
    vals, grads, g = _scalar_samples(f, grid, center)
    w = ball_weights(g, center, r)
    dv = g.cell_volume
    mean = float(np.sum(w * vals) / np.sum(w))
    lhs = float(np.sum(w * np.abs(vals - mean) ** alpha) * dv)
    grad_int = float(np.sum(w * np.sqrt(np.sum(grads**2, axis=0))) * dv)
    return safe_ratio(lhs, r ** (3 - 2 * alpha) * grad_int**alpha)


def check_sobolev(u: SpectralField, r: float, q: float, center=(0.0, 0.0, 0.0),
                  zero_average: bool = False) -> float:
    """int_B |u|^q / [(int_B |grad u|^2)^a (int_B |u|^2)^{q/2-a} + r^{-2a} (int_B |u|^2)^{q/2}], a = 3(q-2)/4.

    ``zero_average`` drops the second term (valid on the whole torus for zero-mean u).
    """
    if not 2.0 <= q <= 6.0:
        raise ValueError("q must lie in [2, 6]")
    if not r > 0:
        raise ValueError("r must be positive")
    if zero_average and r < u.grid.L / 2:
        raise ValueError("the zero-average form applies to the whole torus (r >= L/2)")
    a = 3.0 * (q - 2.0) / 4.0
    g = u.grid
    w = ball_weights(g, center, r)
    dv = g.cell_volume
    vals = u.real()
    speed2 = np.sum(vals**2, axis=0) if u.kind == VELOCITY else vals**2
    grad2 = np.sum(u.gradient() ** 2, axis=tuple(range(u.gradient().ndim - 3)))
    num = float(np.sum(w * speed2 ** (q / 2)) * dv)
    e = float(np.sum(w * speed2) * dv)
    d = float(np.sum(w * grad2) * dv)
    den = d**a * e ** (q / 2 - a)
    if not zero_average:
        den += r ** (-2 * a) * e ** (q / 2)
    return safe_ratio(num, den)


def check_calderon_zygmund(u: SpectralField, q: float) -> float:
    """int |p|^q / int |u|^{2q} over the torus with p = -sum d_i d_j Delta^-1 (u_i u_j)."""
    if not 1.0 < q < math.inf:
        raise ValueError("q must lie in (1, inf)")
    p = pressure_from_velocity(u).real()
    speed2 = np.sum(u.real() ** 2, axis=0)
    return safe_ratio(float(np.sum(np.abs(p) ** q)), float(np.sum(speed2**q)))


def check_holder(factors, exponents, rtol: float = 1e-12) -> float:
    """|sum prod f_i| / prod (sum |f_i|^{p_i})^{1/p_i} over common sample points."""
    exps = [float(p) for p in exponents]
    if len(exps) != len(factors) or not exps:
        raise ValueError("one exponent per factor is required")
    if any(p <= 1 for p in exps):
        raise ValueError("exponents must exceed 1")
    if abs(sum(1.0 / p for p in exps) - 1.0) > rtol:
        raise ValueError("exponent budget sum 1/p_i = 1 violated")
    arrs = [f.real() if isinstance(f, SpectralField) else np.asarray(f, dtype=float) for f in factors]
    num = abs(float(np.sum(np.prod(np.stack(arrs), axis=0))))
    den = 1.0
    for a, p in zip(arrs, exps):
        # scale by the max so |a|^p neither overflows nor underflows for large p
        m = float(np.abs(a).max()) if a.size else 0.0
        den *= 0.0 if m == 0 else m * float(np.sum((np.abs(a) / m) ** p)) ** (1.0 / p)
    return safe_ratio(num, den)


# --- heat-kernel test function ---------------------------------------------

def _f(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def smooth_step(x):
    """psi(x) = f(x) / (f(x) + f(1 - x)) with f(x) = exp(-1/x): 0 for x <= 0, 1 for x >= 1.

    Returns (psi, psi', psi'').
    """
    x = np.asarray(x, dtype=float)
    a, b = _f(x), _f(1.0 - x)
    with np.errstate(divide="ignore", invalid="ignore"):
        xa = np.where(x > 0, x, 1.0)
        xb = np.where(1 - x > 0, 1 - x, 1.0)
        a1 = np.where(x > 0, a / xa**2, 0.0)
        a2 = np.where(x > 0, a * (1 / xa**4 - 2 / xa**3), 0.0)
        # b(x) = f(1-x): b' = -f'(1-x), b'' = f''(1-x)
        b1 = np.where(1 - x > 0, -b / xb**2, 0.0)
        b2 = np.where(1 - x > 0, b * (1 / xb**4 - 2 / xb**3), 0.0)
    D = a + b
    D1 = a1 + b1
    psi = a / D
    num1 = a1 * b - a * b1
    d1 = num1 / D**2
    d2 = (a2 * b - a * b2) / D**2 - 2.0 * num1 * D1 / D**3
    return psi, d1, d2


def cutoff_step(x, inner: float, outer: float):
    """1 for x <= inner, 0 for x >= outer, smooth in between; returns value and two x-derivatives."""
    z = (outer - np.asarray(x, dtype=float)) / (outer - inner)
    s, s1, s2 = smooth_step(z)
    k = -1.0 / (outer - inner)
    return s, s1 * k, s2 * k * k


@dataclass(frozen=True)
class PhiSamples:
    phi: np.ndarray
    grad: np.ndarray        # (3, ...)
    dt: np.ndarray          # d_t phi
    lap: np.ndarray         # Delta phi
    nu: float

    @property
    def heat(self) -> np.ndarray:
        """d_t phi + nu Delta phi."""
        return self.dt + self.nu * self.lap


@dataclass(frozen=True)
class TestFunctionSpec:
    """phi = chi(x, t) G(x, t) with G the backward heat kernel centered at (x0, t0 + 2 r^2/nu).

    chi is a product of smooth steps in rho = |x - x0|/r (1 on rho <= 1/2, 0 on rho >= 1)
    and tau = (t - t0) nu / r^2 (1 on |tau| <= 1/4, 0 on |tau| >= 1). ``custom`` replaces
    the whole construction by a callable (displacement, t) -> PhiSamples.
    """

    __test__ = False  # keep pytest from collecting this class

    x0: tuple[float, float, float]
    t0: float
    r: float
    nu: float
    kind: str = "heat"
    custom: Callable | None = None

    def __post_init__(self):
        if not self.r > 0 or not self.nu > 0:
            raise ValueError("r and nu must be positive")
        if self.kind not in ("heat", "custom"):
            raise ValueError(f"unknown test function kind {self.kind!r}")
        if self.kind == "custom" and self.custom is None:
            raise ValueError("custom test functions need a callable")

    @property
    def support(self) -> tuple[float, float]:
        if self.kind == "custom":
            return -math.inf, math.inf
        T = self.r**2 / self.nu
        return self.t0 - T, self.t0 + T

    def samples(self, disp, t: float) -> PhiSamples:
        """Evaluate at displacements ``disp`` = (dx, dy, dz) from x0 (broadcastable arrays)."""
        if self.kind == "custom":
            return self.custom(disp, t)
        r, nu = self.r, self.nu
        dx, dy, dz = (np.asarray(d, dtype=float) for d in disp)
        y2 = dx * dx + dy * dy + dz * dz
        shape = np.broadcast(dx, dy, dz).shape
        y = np.sqrt(y2)
        rho = y / r
        tau = (t - self.t0) * nu / r**2
        sx, sx1, sx2 = cutoff_step(rho, 0.5, 1.0)
        st, st1, _ = cutoff_step(abs(tau), 0.25, 1.0)
        st, st1 = float(st), float(st1) * math.copysign(1.0, tau) * nu / r**2
        chi = sx * st
        s = nu * (self.t0 - t) + 2.0 * r**2
        G = np.exp(-y2 / (4.0 * s)) / (4.0 * math.pi * s) ** 1.5
        # spatial derivatives of the radial factor sx(rho), rho = |y| / r
        with np.errstate(divide="ignore", invalid="ignore"):
            radial = np.where(y > 0, sx1 / (r * y), 0.0)   # d/dy_i = radial * y_i
            lap_sx = np.where(y > 0, (sx2 + 2.0 * sx1 / np.where(rho > 0, rho, 1.0)) / r**2, 0.0)
        disp_arr = [np.broadcast_to(d, shape) for d in (dx, dy, dz)]
        grad_chi = np.stack([st * radial * d for d in disp_arr])
        lap_chi = st * lap_sx
        dt_chi = sx * st1
        grad_G = np.stack([-d / (2.0 * s) * G for d in disp_arr])
        # ds/dt = -nu; dG/ds = G (|y|^2 / (4 s^2) - 3 / (2 s))
        dG_ds = G * (y2 / (4.0 * s * s) - 1.5 / s)
        dt_G = -nu * dG_ds
        # per-axis second derivatives: d_ii G = G (y_i^2 / (4 s^2) - 1 / (2 s))
        lap_G = sum(G * (d * d / (4.0 * s * s) - 0.5 / s) for d in disp_arr)
        phi = chi * G
        grad_phi = grad_chi * G + chi * grad_G
        dt_phi = dt_chi * G + chi * dt_G
        lap_phi = lap_chi * G + 2.0 * np.sum(grad_chi * grad_G, axis=0) + chi * lap_G
        return PhiSamples(np.broadcast_to(phi, shape), grad_phi, np.broadcast_to(dt_phi, shape),
                          np.broadcast_to(lap_phi, shape), nu)

    def on_grid(self, grid: Grid, t: float) -> PhiSamples:
        if self.kind == "heat" and self.r >= grid.L / 2:
            raise ValueError("heat-kernel support must fit in the torus (r < L/2)")
        return self.samples(grid.displacement(self.x0), t)


@dataclass
class HeatKernelReport:
    C: float
    C_phi: float
    C_grad: float
    C_heat: float
    C_lower: float
    inner_identity_max: float
    min_phi_support: float

    @property
    def passed(self) -> bool:
        return self.inner_identity_max <= 1e-10 and self.min_phi_support > 0


def verify_heat_kernel_bounds(phi: TestFunctionSpec, n_space: int = 41, n_time: int = 41) -> HeatKernelReport:
    """Smallest C with |phi| < C/r^3, |grad phi| < C/r^4, |phi_t + nu Lap phi| < C nu / r^5
    on Q_r and phi > 1/(C r^3) on Q_{r/2}; also the backward-heat residual where chi = 1.

    The identity residual is reported relative to max |phi_t| there.
    """
    if phi.kind != "heat":
        raise ValueError("bounds are defined for the heat-kernel test function")
    r, nu = phi.r, phi.nu
    axis = np.linspace(-r, r, n_space)
    X, Y, Z = np.meshgrid(axis, axis, axis, indexing="ij")
    inside_r = X**2 + Y**2 + Z**2 < r**2
    inside_half = X**2 + Y**2 + Z**2 <= (r / 2) ** 2
    taus = np.linspace(-1.0, 1.0, n_time + 2)[1:-1]
    c_phi = c_grad = c_heat = 0.0
    lower = math.inf
    ident = 0.0
    min_pos = math.inf
    for tau in taus:
        t = phi.t0 + tau * r**2 / nu
        smp = phi.samples((X, Y, Z), t)
        gnorm = np.sqrt(np.sum(smp.grad**2, axis=0))
        c_phi = max(c_phi, float(np.max(np.abs(smp.phi))) * r**3)
        c_grad = max(c_grad, float(np.max(gnorm)) * r**4)
        c_heat = max(c_heat, float(np.max(np.abs(smp.heat))) * r**5 / nu)
        min_pos = min(min_pos, float(np.min(smp.phi[inside_r])) if abs(tau) < 1 else min_pos)
        if abs(tau) <= 0.25:
            lower = min(lower, float(np.min(smp.phi[inside_half])))
            scale = max(float(np.max(np.abs(smp.dt[inside_half]))), 1e-300)
            ident = max(ident, float(np.max(np.abs(smp.heat[inside_half]))) / scale)
    c_low = 1.0 / (lower * r**3)
    return HeatKernelReport(max(c_phi, c_grad, c_heat, c_low), c_phi, c_grad, c_heat, c_low, ident, min_pos)


# --- localized energy relation ------------------------------------------------

_RAD_NODES, _RAD_WEIGHTS = np.polynomial.legendre.leggauss(192)


def _radial_transform(profile, r: float, kmag_unique: np.ndarray) -> np.ndarray:
    """4 pi int_0^r f(rho) sinc(k rho) rho^2 d rho for a radial profile f supported in rho < r.

    Split at r/2 where the cutoff starts, Gauss-Legendre on each piece.
    """
    out = np.zeros_like(kmag_unique)
    for a, b in ((0.0, 0.5 * r), (0.5 * r, r)):
        rho = a + 0.5 * (b - a) * (_RAD_NODES + 1.0)
        w = 0.5 * (b - a) * _RAD_WEIGHTS * profile(rho) * rho**2
        out += (np.sinc(kmag_unique[:, None] * rho[None, :] / np.pi) * w).sum(axis=1)
    return 4.0 * np.pi * out


@dataclass
class EnergyResidual:
    residual: float
    lhs: float
    rhs: float
    terms: dict[str, float]

    @property
    def relative(self) -> float:
        return safe_ratio(abs(self.residual), abs(self.lhs))


_TERMS = ("energy_phi", "dissipation", "heat", "transport", "pressure")


def energy_inequality_residual(tr: Trajectory, phi: TestFunctionSpec, s: float,
                               regularized: bool = True, method: str = "auto",
                               oversample: int = 2) -> EnergyResidual:
    """RHS - LHS of

        1/2 int |u(s)|^2 phi(s) + nu int_0^s int phi |grad u|^2
          = int_0^s int [1/2 (phi_t + nu Lap phi) |u|^2 + 1/2 |u|^2 v.grad phi + p u.grad phi]

    with (v, p) = (<u>_lambda, p_lambda) for the regularized flow, or (u, p(u)).

    ``method="fourier"`` (default for the heat kernel) forms every quadratic
    integrand exactly on the doubled grid and pairs its coefficients with the
    radial Fourier transform of phi, so space is integrated to round-off.
    ``method="grid"`` samples phi on an ``oversample``-refined grid instead.
    Time integrals use the trapezoid rule on the snapshots; the s-term is
    linearly interpolated.
    """
    if method == "auto":
        method = "fourier" if phi.kind == "heat" else "grid"
    if method not in ("fourier", "grid"):
        raise ValueError(f"unknown integration method {method!r}")
    if method == "fourier" and phi.kind != "heat":
        raise ValueError("the Fourier method needs the radial heat-kernel test function")
    t_first, t_last = tr.span
    if not t_first <= s <= t_last:
        raise ValueError(f"s={s} outside the trajectory span ({t_first}, {t_last})")
    src = tr.grid
    if phi.kind == "heat" and phi.r >= src.L / 2:
        raise ValueError("heat-kernel support must fit in the torus (r < L/2)")
    lo_s, hi_s = phi.support
    if phi.kind == "heat" and lo_s < t_first:
        raise ValueError("test function must vanish near the initial time")
    qg = make_grid(src.N * (2 if method == "fourier" else oversample), src.L)
    if phi.kind == "custom" and np.any(phi.on_grid(qg, t_first).phi != 0):
        raise ValueError("test function must vanish near the initial time")
    times = tr.times
    w = interval_weights(times, t_first, s)
    mult = tr.params.multiplier
    k = src.k
    kq = qg.k

    if method == "fourier":
        kmag = np.sqrt(qg.k2)
        uniq, inv = np.unique(np.round(kmag, 10), return_inverse=True)
        inv = inv.reshape(kmag.shape)
        phase = np.exp(1j * sum(kq[j] * phi.x0[j] for j in range(3)))
        weights = qg.mode_weights * qg.volume  # forward() coefficients carry 1/N^3

        def pairing(profile_of):
            F = _radial_transform(profile_of, phi.r, uniq)[inv] * phase / qg.volume
            return lambda fh: float(np.real(np.sum(weights * fh * F)))

    def real(c):
        return qg.inverse(resample_coeffs(c, src, qg))

    def per_snapshot(i):
        snap = tr.snapshots[i]
        c = snap.u.coeffs
        u = real(c)
        u2 = np.sum(u * u, axis=0)
        v_field = snap.u.with_coeffs(c * mult) if regularized else snap.u
        p = real(pressure_from_velocity(snap.u, v_field if regularized else None).coeffs)
        v = real(v_field.coeffs) if regularized else u
        grads = real(np.stack([1j * k[j] * c[m] for m in range(3) for j in range(3)]))
        grad2 = np.sum(grads * grads, axis=0)
        transport_vec = 0.5 * u2 * v
        pressure_vec = p * u
        if method == "grid":
            ph = phi.on_grid(qg, snap.t)
            dv = qg.cell_volume
            return {
                "energy_phi": 0.5 * float(np.sum(u2 * ph.phi)) * dv,
                "dissipation": tr.nu * float(np.sum(ph.phi * grad2)) * dv,
                "heat": 0.5 * float(np.sum(ph.heat * u2)) * dv,
                "transport": float(np.sum(transport_vec * ph.grad)) * dv,
                "pressure": float(np.sum(pressure_vec * ph.grad)) * dv,
            }
        t = snap.t

        def prof(field_name):
            def f(rho):
                smp = phi.samples((rho, np.zeros_like(rho), np.zeros_like(rho)), t)
                return getattr(smp, field_name)
            return f

        with_phi = pairing(prof("phi"))
        with_heat = pairing(prof("heat"))
        u2h = qg.forward(u2)
        # int g . grad phi = -int (div g) phi
        div = lambda vec: -sum(1j * kq[j] * qg.forward(vec[j]) for j in range(3))
        return {
            "energy_phi": 0.5 * with_phi(u2h),
            "dissipation": tr.nu * with_phi(qg.forward(grad2)),
            "heat": 0.5 * with_heat(u2h),
            "transport": with_phi(div(transport_vec)),
            "pressure": with_phi(div(pressure_vec)),
        }

    zero = dict.fromkeys(_TERMS, 0.0)
    # a snapshot matters if phi is live there and it carries time weight or brackets s
    bracket = set(np.flatnonzero((times >= times[times <= s][-1]) & (times <= times[times >= s][0])))
    vals = [per_snapshot(i) if lo_s < t < hi_s and (w[i] != 0 or i in bracket) else zero
            for i, t in enumerate(times)]
    series = {key: np.array([v[key] for v in vals]) for key in _TERMS}
    e_s = float(np.interp(s, times, series["energy_phi"]))
    diss = float(w @ series["dissipation"])
    heat = float(w @ series["heat"])
    transport = float(w @ series["transport"])
    press = float(w @ series["pressure"])
    lhs = e_s + diss
    rhs = heat + transport + press
    return EnergyResidual(rhs - lhs, lhs, rhs, {"energy_at_s": e_s, "dissipation": diss, "heat": heat,
                                                "transport": transport, "pressure": press})


# --- trajectory-level checks -----------------------------------------------

@dataclass
class Proposition1Result:
    lhs: float
    bound: float
    C: float

    @property
    def passed(self) -> bool:
        return self.lhs <= self.bound


def intensity_integral(tr: Trajectory) -> float:
    """int_0^T int (|u|^{10/3} + |p|^{5/3}) by the trapezoid rule over snapshots."""
    vals = []
    for snap in tr.snapshots:
        u2 = np.sum(snap.u.grid.inverse(snap.u.coeffs) ** 2, axis=0)
        p = pressure_from_velocity(snap.u).real()
        vals.append(float(np.sum(u2 ** (5.0 / 3.0) + np.abs(p) ** (5.0 / 3.0))) * tr.grid.cell_volume)
    t = tr.times
    return float(np.sum(0.5 * np.diff(t) * (np.array(vals[1:]) + np.array(vals[:-1]))))


def check_proposition1(tr: Trajectory, constants: InequalityConstants) -> Proposition1Result:
    """lhs = int int |u|^{10/3} + |p|^{5/3} against C^S_{10/3} (1 + C^L_{5/3}) E0^{5/3} / nu."""
    C = constants.Cprop1
    lhs = intensity_integral(tr)
    return Proposition1Result(lhs, C * tr.E0 ** (5.0 / 3.0) / tr.nu, C)


@dataclass
class LocalEnergyCheck:
    lhs: float
    rhs_base: float
    required_C: float
    residual: float | None


def check_local_energy_312(half: ScaleDiagnostics, full: ScaleDiagnostics,
                           Ctilde: float | None = None) -> LocalEnergyCheck:
    """A(r/2) + delta(r/2) against C~ (G(r)^{2/3} + G(r) + J(r)).

    Returns the smallest admissible C~ and, when ``Ctilde`` is given, lhs - C~ rhs.
    """
    if not math.isclose(half.r * 2, full.r, rel_tol=1e-9):
        raise ValueError("expected diagnostics at r/2 and r")
    lhs = half.A + half.delta
    base = full.G ** (2.0 / 3.0) + full.G + full.J
    req = safe_ratio(lhs, base)
    res = None if Ctilde is None else lhs - Ctilde * base
    return LocalEnergyCheck(lhs, base, req, res)


# --- ensembles -------------------------------------------------------------

SOBOLEV_QS = (2.0, 3.0, 10.0 / 3.0, 4.0)
CZ_QS = (1.5, 5.0 / 3.0, 2.0)
POINCARE_ALPHAS = (1.0, 1.25, 1.5)


def fit_field_constants(fields: list[SpectralField], radii_fraction=(0.125, 0.25), centers=None,
                        label: str = "ensemble") -> InequalityConstants:
    """Maxima of the Poincare, Sobolev and Calderon-Zygmund ratios over ``fields``.

    The whole-torus zero-average Sobolev ratios populate CS; ball ratios are stored
    under keys suffixed with "@ball". Poincare uses the first velocity component.
    """
    out = InequalityConstants(provenance={"label": label, "fields": len(fields),
                                          "N": sorted({f.grid.N for f in fields})})
    for u in fields:
        g = u.grid
        pts = centers if centers is not None else [(0.0, 0.0, 0.0), (g.L / 3, g.L / 2, 2 * g.L / 3)]
        comp = SpectralField(g, u.coeffs[0].copy(), SCALAR)
        for q in SOBOLEV_QS:
            out.update("CS", exponent_key(q), check_sobolev(u, g.L, q, zero_average=True))
            for frac in radii_fraction:
                for c in pts:
                    out.update("CS", exponent_key(q) + "@ball", check_sobolev(u, frac * g.L, q, c))
        for q in CZ_QS:
            out.update("CL", exponent_key(q), check_calderon_zygmund(u, q))
        for a in POINCARE_ALPHAS:
            for frac in radii_fraction:
                for c in pts:
                    out.update("CP", exponent_key(a), check_poincare(comp, frac * g.L, a, c))
    return out


def fit_trajectory_sobolev(trs: list[Trajectory], constants: InequalityConstants) -> InequalityConstants:
    """Fold every snapshot of every trajectory into the zero-average CS and the CL fits."""
    out = constants.merge(InequalityConstants())
    for tr in trs:
        L = tr.grid.L
        for snap in tr.snapshots:
            if snap.u.norm2() == 0:
                continue
            out.update("CS", "10/3", check_sobolev(snap.u, L, 10.0 / 3.0, zero_average=True))
            out.update("CL", "5/3", check_calderon_zygmund(snap.u, 5.0 / 3.0))
    return out


__all__ = [
    "safe_ratio", "InequalityConstants", "exponent_key", "check_poincare", "check_sobolev",
    "check_calderon_zygmund", "check_holder", "smooth_step", "cutoff_step", "PhiSamples",
    "TestFunctionSpec", "HeatKernelReport", "verify_heat_kernel_bounds", "EnergyResidual",
    "energy_inequality_residual", "Proposition1Result", "intensity_integral", "check_proposition1",
    "LocalEnergyCheck", "check_local_energy_312", "fit_field_constants", "fit_trajectory_sobolev",
]
