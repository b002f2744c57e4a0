"""The scale-to-scale map B_p on X = (alpha, kappa, j, g) and its linear majorant.

Given the diagnostics at the coarser scale r_{n+p} = 2^p r_n and a bound
delta on the local Reynolds number there, B_p returns upper bounds for the
diagnostics at r_n. Every inequality shares one constant C.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ckn_operators import ScaleDiagnostics, ScaleVector, to_scale_vector


@dataclass(frozen=True)
class RenormConfig:
    p: int = 20
    C: float = 1.0
    rho: float = 1e-2
    delta_bar: float = 0.0
    eps_s: float | None = None
    eps_ckn: float | None = None
    z: float | None = None
    k_max: int = 1000

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise ValueError(f"p must be an integer >= 1, got {self.p!r}")
        if not self.C > 0:
            raise ValueError(f"C must be positive, got {self.C!r}")
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho!r}")
        if not self.delta_bar >= 0:
            raise ValueError("delta_bar must be nonnegative")
        if self.z is not None and not self.z > 0:
            raise ValueError("z must be positive")
        if self.k_max < 0:
            raise ValueError("k_max must be nonnegative")


def _components(X):
    """(A, K, J, G) from a ScaleVector or an array with trailing axis of length 4."""
    a = X.as_array() if isinstance(X, ScaleVector) else np.asarray(X, dtype=float)
    alpha, kappa, j, g = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    return alpha, kappa ** 0.625, j, g ** 1.5


def _check_nonneg(X, delta):
    a = X.as_array() if isinstance(X, ScaleVector) else np.asarray(X, dtype=float)
    if np.any(a < 0) or np.any(np.asarray(delta) < 0):
        raise ValueError("inputs must be nonnegative")


def _kinematic(X, delta, cfg: RenormConfig):
    A, K, _, _ = _components(X)
    C, p = cfg.C, cfg.p
    g_b = C * (2.0 ** (-2 * p) * A + 2.0 ** (2 * p) * np.sqrt(A) * np.sqrt(delta))
    K_b = C * (2.0 ** (-p / 2) * K + 2.0 ** (1.25 * p) * A**0.625 * delta**0.625)
    # G_n^{1/5} = (G_n^{2/3})^{3/10}, bounded through g_b
    j_b = C * (2.0 ** (-p / 5) * A**0.2 * g_b**0.3 * K**0.8 + 2.0 ** (2 * p) * np.sqrt(A) * delta)
    return j_b, K_b**1.6, g_b


def kinematic_bounds(X_fine: ScaleVector, delta_fine: float, cfg: RenormConfig) -> tuple[float, float, float]:
    """Bounds (j, kappa, g) at scale n from X and delta at scale n + p."""
    _check_nonneg(X_fine, delta_fine)
    return tuple(float(v) for v in _kinematic(X_fine, delta_fine, cfg))


def _dynamic(X, delta, cfg: RenormConfig):
    A, _, J, G = _components(X)
    return cfg.C * 2.0**cfg.p * (G ** (2.0 / 3.0) + A * delta + J)


def dynamic_bound(X_fine: ScaleVector, delta_fine: float, cfg: RenormConfig) -> float:
    """Bound on alpha at scale n: C 2^p (g + A delta + j), inputs at scale n + p."""
    _check_nonneg(X_fine, delta_fine)
    return float(_dynamic(X_fine, delta_fine, cfg))


def beta_array(X: np.ndarray, delta, cfg: RenormConfig) -> np.ndarray:
    """Vectorized B_p over a trailing axis (alpha, kappa, j, g)."""
    j_b, k_b, g_b = _kinematic(X, delta, cfg)
    a_b = _dynamic(X, delta, cfg)
    return np.stack([a_b, k_b, j_b, g_b], axis=-1)


def beta_map(X: ScaleVector, delta: float, cfg: RenormConfig) -> ScaleVector:
    _check_nonneg(X, delta)
    return ScaleVector.from_array(beta_array(X.as_array(), delta, cfg))


def _split_coefficients(cfg: RenormConfig) -> tuple[float, float]:
    p = cfg.p
    if cfg.z is None:
        return 2.0 ** (-p / 10), 2.0 ** (3 * p / 10)
    # 2^{p/10} (alpha kappa)^{1/2} <= 2^{p/10} (z alpha + kappa / z)
    return 2.0 ** (p / 10) * cfg.z, 2.0 ** (p / 10) / cfg.z


def reduced_recursion(alpha: float, kappa: float, delta: float, cfg: RenormConfig) -> tuple[float, float]:
    """Two-variable recursion for (alpha, kappa) with the xi terms."""
    if min(alpha, kappa, delta) < 0:
        raise ValueError("inputs must be nonnegative")
    p, C = cfg.p, cfg.C
    ca, ck = _split_coefficients(cfg)
    xi_a = 2.0 ** (3 * p) * delta * (alpha + kappa + 1.0)
    xi_k = 2.0 ** (3 * p) * delta * alpha
    return (C * (ca * alpha + ck * kappa + xi_a),
            C * (2.0 ** (-4 * p / 5) * kappa + xi_k))


@dataclass(frozen=True)
class Majorant:
    M: np.ndarray
    b: np.ndarray
    eigenvalues: np.ndarray
    spectral_radius: float


def majorant_matrix(delta: float, cfg: RenormConfig) -> Majorant:
    """Affine map (alpha, kappa) -> M (alpha, kappa) + b bounding the reduced recursion.

    The lower-left entry carries the coupling of kappa' to alpha.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    p, C = cfg.p, cfg.C
    ca, ck = _split_coefficients(cfg)
    e = 2.0 ** (3 * p) * delta
    M = C * np.array([[ca + e, ck + e], [e, 2.0 ** (-4 * p / 5) + e]])
    b = np.array([C * e, 0.0])
    eig = np.linalg.eigvals(M)
    return Majorant(M, b, eig, float(np.max(np.abs(eig))))


@dataclass
class MapTrace:
    iterates: list[ScaleVector]
    entered_ball_at: int | None
    rho: float

    @property
    def contracted(self) -> bool:
        return self.entered_ball_at is not None


def iterate_to_ball(X0: ScaleVector, delta: float, cfg: RenormConfig, k_max: int | None = None) -> MapTrace:
    """Iterate B_p until |X_k| < rho; stopping at k_max is reported, not raised."""
    _check_nonneg(X0, delta)
    k_max = cfg.k_max if k_max is None else k_max
    X = X0
    its = [X]
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(k_max + 1):
            if X.size < cfg.rho:
                return MapTrace(its, k, cfg.rho)
            if k == k_max:
                break
            X = ScaleVector.from_array(beta_array(X.as_array(), delta, cfg))
            its.append(X)
    return MapTrace(its, None, cfg.rho)


def ball_net(radius: float = 1e3, points_per_axis: int = 5) -> np.ndarray:
    """points_per_axis^4 points covering the l1 ball |X| <= radius in R^4_+.

    Points of the cube grid [0, radius]^4 lying outside the ball are pulled
    radially onto its surface, so the extreme points of the ball are included.
    """
    axis = np.linspace(0.0, radius, points_per_axis)
    pts = np.stack(np.meshgrid(axis, axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 4)
    size = pts.sum(axis=1)
    scale = np.where(size > radius, radius / np.where(size > 0, size, 1.0), 1.0)
    return pts * scale[:, None]


def steps_to_ball(net: np.ndarray, delta: float, cfg: RenormConfig, k_max: int | None = None) -> np.ndarray:
    """Per net point, first k with |X_k| < rho, or -1 if not reached within k_max."""
    k_max = cfg.k_max if k_max is None else k_max
    X = np.array(net, dtype=float)
    out = np.full(X.shape[0], -1, dtype=int)
    active = np.ones(X.shape[0], dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(k_max + 1):
            inside = active & (X.sum(axis=1) < cfg.rho)
            out[inside] = k
            active &= ~inside
            if not active.any() or k == k_max:
                break
            X[active] = beta_array(X[active], delta, cfg)
    return out


def net_contracts(net: np.ndarray, delta: float, cfg: RenormConfig, k_max: int | None = None) -> bool:
    return bool(np.all(steps_to_ball(net, delta, cfg, k_max) >= 0))


class SearchRangeError(ValueError):
    """Bisection range does not bracket the contraction threshold."""


def contraction_threshold(cfg: RenormConfig, lo: float = 1e-80, hi: float = 1.0,
                          net: np.ndarray | None = None, k_max: int | None = None,
                          rel_tol: float = 1e-3) -> float:
    """Largest delta (to rel_tol) for which every net point enters the rho-ball.

    Bisection runs on log(delta). Returns ``hi`` if contraction already holds there.
    """
    if not 0 < lo < hi:
        raise ValueError("need 0 < lo < hi")
    net = ball_net() if net is None else net
    if net_contracts(net, hi, cfg, k_max):
        return hi
    if not net_contracts(net, lo, cfg, k_max):
        raise SearchRangeError(f"no contraction even at delta={lo:g}")
    a, b = math.log(lo), math.log(hi)
    while b - a > math.log1p(rel_tol):
        mid = 0.5 * (a + b)
        if net_contracts(net, math.exp(mid), cfg, k_max):
            a = mid
        else:
            b = mid
    return math.exp(a)


@dataclass
class ChainCheck:
    """Per-scale residuals X_n - B_p(X_{n+p}; delta_{n+p}) and the smallest passing C."""

    residuals: np.ndarray
    indices: list[int]
    passed: bool
    fitted_C: float
    p: int
    details: dict = field(default_factory=dict)


def _chain_ok(meas: np.ndarray, coarse: np.ndarray, deltas: np.ndarray, cfg: RenormConfig,
              rtol: float = 1e-12) -> bool:
    bound = beta_array(coarse, deltas, cfg)
    return bool(np.all(meas <= bound * (1 + rtol) + 1e-300))


def empirical_chain_check(chain: list[ScaleDiagnostics], cfg: RenormConfig,
                          C_range: tuple[float, float] = (1e-12, 1e12)) -> ChainCheck:
    """Compare measured X_n with B_p(measured X_{n+p}; measured delta_{n+p}) along a chain.

    ``chain[i]`` holds the diagnostics at r = L 2^{-i}. Reports residuals at
    ``cfg.C`` and the smallest C (bisection on log C) that makes every check pass;
    0 means any positive C works.
    """
    p = cfg.p
    if len(chain) <= p:
        raise ValueError(f"chain of length {len(chain)} is too short for p={p}")
    X = np.array([to_scale_vector(d).as_array() for d in chain])
    d = np.array([c.delta for c in chain])
    fine = X[p:]
    coarse = X[:-p]
    dcoarse = d[:-p]
    res = fine - beta_array(coarse, dcoarse, cfg)
    passed = bool(np.all(res <= np.abs(fine) * 1e-12))

    def ok(C):
        return _chain_ok(fine, coarse, dcoarse, RenormConfig(p=p, C=C, rho=cfg.rho, z=cfg.z))

    if not np.any(fine > 0):
        fitted = 0.0
    else:
        lo, hi = C_range
        if not ok(hi):
            fitted = math.inf
        elif ok(lo):
            fitted = lo
        else:
            a, b = math.log(lo), math.log(hi)
            while b - a > 1e-6:
                m = 0.5 * (a + b)
                if ok(math.exp(m)):
                    b = m
                else:
                    a = m
            fitted = math.exp(b)
    return ChainCheck(res, list(range(p, len(chain))), passed, fitted, p)


__all__ = [
    "RenormConfig", "kinematic_bounds", "dynamic_bound", "beta_map", "beta_array",
    "reduced_recursion", "Majorant", "majorant_matrix", "MapTrace", "iterate_to_ball", "ball_net",
    "steps_to_ball", "net_contracts", "SearchRangeError", "contraction_threshold", "ChainCheck",
    "empirical_chain_check",
]
