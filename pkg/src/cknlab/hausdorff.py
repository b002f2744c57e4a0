"""Hausdorff sums, dimension estimates and Vitali covering selection.

Cover items are open balls, or parabolic sets: the product of a radius-r
ball in the first k coordinates with a ball of radius c r^a in the rest.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

BALL = "ball"
PARABOLIC = "parabolic"


@dataclass(frozen=True)
class CoverItem:
    center: tuple[float, ...]
    radius: float
    shape: str = BALL
    exponent: float = 2.0      # a in the time radius c r^a
    space_dims: int = 3        # k: coordinates carrying the radius-r ball
    time_scale: float = 1.0    # c

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius!r}")
        if self.shape not in (BALL, PARABOLIC):
            raise ValueError(f"unknown shape {self.shape!r}")
        if self.shape == PARABOLIC:
            if self.exponent < 1:
                raise ValueError("parabolic exponent must be >= 1")
            if not 0 < self.space_dims < len(self.center):
                raise ValueError("parabolic items need 0 < space_dims < dimension")
            if not self.time_scale > 0:
                raise ValueError("time scale must be positive")

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def second_radius(self) -> float:
        return self.time_scale * self.radius**self.exponent

    @property
    def diameter(self) -> float:
        if self.shape == BALL:
            return 2.0 * self.radius
        return math.hypot(2.0 * self.radius, 2.0 * self.second_radius)

    def dilated(self, lam: float) -> "CoverItem":
        """Ball: radius lam r. Parabolic: the set of parabolic radius lam r (space lam r, rest c (lam r)^a)."""
        return CoverItem(self.center, lam * self.radius, self.shape, self.exponent,
                         self.space_dims, self.time_scale)


def parabolic_dilation(exponent: float) -> int:
    """ceil(sqrt(16 + 2^{2(1+a)/a})), and 5 for a in {1, 2}."""
    if exponent in (1, 2):
        return 5
    return math.ceil(math.sqrt(16.0 + 2.0 ** (2.0 * (1.0 + exponent) / exponent)))


def _delta(a: np.ndarray, b: np.ndarray, periods) -> np.ndarray:
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    if periods is not None:
        per = np.array([np.inf if p is None else p for p in periods], dtype=float)
        finite = np.isfinite(per)
        d[..., finite] = np.minimum(d[..., finite] % per[finite], per[finite] - d[..., finite] % per[finite])
    return d


def _split_norms(item: CoverItem, d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if item.shape == BALL:
        return np.sqrt(np.sum(d**2, axis=-1)), np.zeros(d.shape[:-1])
    k = item.space_dims
    return np.sqrt(np.sum(d[..., :k] ** 2, axis=-1)), np.sqrt(np.sum(d[..., k:] ** 2, axis=-1))


def overlaps(a: CoverItem, b: CoverItem, periods=None) -> bool:
    """Open-set intersection test; products intersect iff both factors do."""
    d = _delta(np.array(a.center), np.array(b.center), periods)
    s, t = _split_norms(a, d)
    if s >= a.radius + b.radius:
        return False
    if a.shape == PARABOLIC and t >= a.second_radius + b.second_radius:
        return False
    return True


def contains_points(item: CoverItem, points: np.ndarray, periods=None) -> np.ndarray:
    """Closed-set membership of each row of ``points``."""
    d = _delta(np.asarray(points, dtype=float), np.array(item.center), periods)
    s, t = _split_norms(item, d)
    ok = s <= item.radius * (1 + 1e-12)
    if item.shape == PARABOLIC:
        ok &= t <= item.second_radius * (1 + 1e-12)
    return ok


@dataclass
class CoveringFamily:
    items: list[CoverItem]
    dilation: float = 1.0
    periods: tuple | None = None

    def __len__(self) -> int:
        return len(self.items)

    def diameter_counts(self) -> Counter:
        """Multiplicity of each diameter (cached; items are not expected to change)."""
        key = len(self.items)
        if getattr(self, "_counts_key", None) != key:
            self._counts = Counter(it.diameter for it in self.items)
            self._counts_key = key
        return self._counts

    def covers(self, points) -> np.ndarray:
        """Which points lie in some dilated item."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        hit = np.zeros(pts.shape[0], dtype=bool)
        for it in self.items:
            hit |= contains_points(it.dilated(self.dilation), pts, self.periods)
        return hit

    def pairwise_disjoint(self) -> bool:
        return _pairwise_disjoint(self.items, self.periods)


def _pairwise_disjoint(items, periods) -> bool:
    if len(items) < 2:
        return True
    C = np.array([it.center for it in items], dtype=float)
    R = np.array([it.radius for it in items])
    R2 = np.array([it.second_radius for it in items])
    first = items[0]
    d = _delta(C[:, None, :], C[None, :, :], periods)
    s, t = _split_norms(first, d)
    apart = s >= R[:, None] + R[None, :]
    if first.shape == PARABOLIC:
        apart |= t >= R2[:, None] + R2[None, :]
    np.fill_diagonal(apart, True)
    return bool(apart.all())


def _shape_key(it: CoverItem):
    return (it.shape, it.dim, it.exponent if it.shape == PARABOLIC else None,
            it.space_dims if it.shape == PARABOLIC else None,
            it.time_scale if it.shape == PARABOLIC else None)


def vitali_select(candidates: list[CoverItem], periods=None) -> CoveringFamily:
    """Greedy maximal disjoint subfamily, class by dyadic radius class.

    Class k holds radii in (a 2^{-k-1}, a 2^{-k}] with a the largest radius;
    inside a class candidates are taken in lexicographic center order.
    """
    if not candidates:
        raise ValueError("empty candidate list")
    keys = {_shape_key(c) for c in candidates}
    if len(keys) != 1:
        raise ValueError("all candidates must share one shape")
    a = max(c.radius for c in candidates)
    cls = [int(math.floor(math.log2(a / c.radius) + 1e-12)) for c in candidates]
    order = sorted(range(len(candidates)), key=lambda i: (cls[i], tuple(candidates[i].center), -candidates[i].radius))
    C = np.array([c.center for c in candidates], dtype=float)
    R = np.array([c.radius for c in candidates])
    R2 = np.array([c.second_radius for c in candidates])
    proto = candidates[0]
    chosen: list[int] = []
    for i in order:
        if chosen:
            d = _delta(C[chosen], C[i], periods)
            s, t = _split_norms(proto, d)
            hit = s < R[chosen] + R[i]
            if proto.shape == PARABOLIC:
                hit &= t < R2[chosen] + R2[i]
            if hit.any():
                continue
        chosen.append(i)
    lam = 5.0 if proto.shape == BALL else float(parabolic_dilation(proto.exponent))
    return CoveringFamily([candidates[i] for i in chosen], lam, periods)


def hausdorff_sum(family: CoveringFamily | list[CoverItem], alpha: float) -> float:
    """sum d(F)^alpha, grouped by diameter and summed in log space."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if isinstance(family, CoveringFamily):
        counts = family.diameter_counts()
    else:
        counts = Counter(it.diameter for it in family)
    return math.fsum(math.exp(math.log(n) + alpha * math.log(d)) for d, n in counts.items())


def interval(lo: float, hi: float) -> CoverItem:
    return CoverItem(((lo + hi) / 2.0,), (hi - lo) / 2.0)


def cantor_cover(n: int) -> CoveringFamily:
    """The 2^n closed generation-n intervals of length 3^-n of the middle-thirds Cantor set."""
    if n < 0 or int(n) != n:
        raise ValueError("generation must be a nonnegative integer")
    lefts = [0]
    for _ in range(n):
        lefts = [3 * x for x in lefts] + [3 * x + 2 for x in lefts]
    lefts.sort()
    scale = 3.0 ** (-n)
    # radius set directly so every item carries the identical diameter 3^-n
    return CoveringFamily([CoverItem(((x + 0.5) * scale,), 0.5 * scale) for x in lefts])


def cantor_left_endpoints(family: CoveringFamily) -> list[float]:
    return [it.center[0] - it.radius for it in family.items]


def uniform_interval_cover(m: int, length: float = 1.0) -> CoveringFamily:
    h = length / m
    return CoveringFamily([interval(i * h, (i + 1) * h) for i in range(m)])


@dataclass
class DimensionEstimate:
    alphas: np.ndarray
    deltas: np.ndarray
    sums: np.ndarray          # (alpha, level)
    slopes: np.ndarray        # per alpha: d log mu / d log(1/delta)
    alpha_c: float
    measure_at_critical: float
    levels_used: int = 4


def _fit_slope(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.polyfit(x, y, 1)[0])


def _level_logs(families, alpha):
    return np.array([math.log(max(hausdorff_sum(f, alpha), 1e-300)) for f in families])


def estimate_dimension(covers: list[CoveringFamily], alpha_grid=None, levels: int = 4,
                       tol: float = 1e-10) -> DimensionEstimate:
    """Critical exponent from the sign change of d log mu_alpha / d log(1/delta).

    ``covers`` are ordered from coarse to fine; delta is each cover's largest
    diameter. The slope is fitted over the ``levels`` finest covers.
    """
    if len(covers) < levels:
        raise ValueError(f"need at least {levels} delta-levels, got {len(covers)}")
    if any(len(c) == 0 for c in covers):
        raise ValueError("empty cover")
    deltas = np.array([max(it.diameter for it in c.items) for c in covers])
    if np.any(np.diff(deltas) >= 0):
        raise ValueError("covers must be ordered with strictly decreasing delta")
    alphas = np.round(np.arange(0.0, 3.0 + 1e-9, 0.01), 10) if alpha_grid is None else np.asarray(alpha_grid, float)
    if np.any(np.diff(alphas) <= 0):
        raise ValueError("alpha grid must be increasing")
    fine = covers[-levels:]
    x = np.log(1.0 / deltas[-levels:])

    def slope(a):
        return _fit_slope(x, _level_logs(fine, a))

    sums = np.array([[hausdorff_sum(c, a) for c in covers] for a in alphas])
    slopes = np.array([slope(a) for a in alphas])
    nonpos = np.flatnonzero(slopes <= 0)
    if nonpos.size == 0:
        alpha_c = float(alphas[-1])
    elif nonpos[0] == 0:
        alpha_c = float(alphas[0])
    else:
        lo, hi = float(alphas[nonpos[0] - 1]), float(alphas[nonpos[0]])
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if slope(mid) > 0:
                lo = mid
            else:
                hi = mid
        alpha_c = 0.5 * (lo + hi)
    measure = float(np.exp(np.mean(_level_logs(fine, alpha_c))))
    return DimensionEstimate(alphas, deltas, sums, slopes, alpha_c, measure, levels)


# --- singular times -------------------------------------------------------

@dataclass
class SingularTimeAnalysis:
    """Inputs of the singular-time covering: a sampled trace t -> R^2(t) and constants."""

    times: np.ndarray
    R2: np.ndarray
    gamma: float = 0.5
    A: float = 1.0
    F: float = 1.0
    Tc: float = 1.0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.R2 = np.asarray(self.R2, dtype=float)
        if self.times.shape != self.R2.shape or self.times.ndim != 1 or self.times.size < 2:
            raise ValueError("times and R2 must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not 0 < self.gamma <= 0.5:
            raise ValueError(f"gamma must lie in (0, 1/2], got {self.gamma!r}")
        if not (self.A > 0 and self.Tc > 0 and self.F > 0):
            raise ValueError("A, F and Tc must be positive")
        if not np.all(np.isfinite(self.R2)) or np.any(self.R2 < 0):
            raise ValueError("R2 trace must be finite and nonnegative")

    @property
    def cumulative(self) -> np.ndarray:
        dt = np.diff(self.times)
        return np.concatenate([[0.0], np.cumsum(0.5 * dt * (self.R2[1:] + self.R2[:-1]))])

    def integral(self, a, b):
        """int_a^b R^2 for the linear interpolant of the trace."""
        t, R2 = self.times, self.R2
        cum = self.cumulative

        def prim(s):
            s = np.clip(s, t[0], t[-1])
            i = np.clip(np.searchsorted(t, s, side="right") - 1, 0, t.size - 2)
            h = s - t[i]
            slope = (R2[i + 1] - R2[i]) / (t[i + 1] - t[i])
            return cum[i] + R2[i] * h + 0.5 * slope * h * h

        return prim(np.asarray(b, float)) - prim(np.asarray(a, float))


@dataclass
class SingularTimeResult:
    flagged_times: np.ndarray
    family: CoveringFamily | None
    covering_sum: float
    bound_printed: float
    bound_consistent: float
    total_integral: float
    gamma: float
    sigmas: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def holds(self) -> bool:
        return self.covering_sum <= self.bound_printed and self.covering_sum <= self.bound_consistent


def reynolds_trace(tr) -> tuple[np.ndarray, np.ndarray]:
    """R^2(t) = J_1 / V_c^2 with J_1 = L^-1 int |grad u|^2 and V_c = nu / L."""
    L, nu = tr.grid.L, tr.nu
    return tr.series["t"], tr.series["enstrophy"] * L / nu**2


def singular_time_scan(an: SingularTimeAnalysis, sigma_grid, sigma_cutoff: float | None = None,
                       candidate_times=None) -> SingularTimeResult:
    """Flag t when (sigma/Tc)^gamma * (window average of R^2 over (t - sigma, t)) >= A for all probed sigma.

    Flagged times are covered by intervals (t - sigma, t) meeting the
    half-threshold condition; a Vitali subfamily is selected and the sum
    5^{1-g} sum sigma_i (sigma_i/Tc)^{-g} is compared with the bound
    (2 5^{1-g} / (A sqrt(Tc))) int R^2, and with the same bound without sqrt(Tc).
    """
    g, A, Tc = an.gamma, an.A, an.Tc
    sig = np.sort(np.asarray(sigma_grid, dtype=float))
    if sig.size == 0 or np.any(sig <= 0):
        raise ValueError("sigma grid must be nonempty and positive")
    if sigma_cutoff is not None:
        sig = sig[sig <= sigma_cutoff]
    t = an.times if candidate_times is None else np.asarray(candidate_times, dtype=float)
    t0 = an.times[0]
    flagged = []
    intervals = []
    for tt in t:
        probe = sig[tt - sig >= t0 - 1e-12]
        if probe.size == 0:
            continue
        avg = an.integral(tt - probe, tt) / probe
        if np.all((probe / Tc) ** g * avg >= A):
            flagged.append(tt)
            mass = avg * probe
            ok = mass >= 0.5 * A * probe * (probe / Tc) ** (-g)
            intervals.extend(interval(tt - s, tt) for s in probe[ok])
    total = float(an.cumulative[-1])
    printed = 2.0 * 5.0 ** (1 - g) / (A * math.sqrt(Tc)) * total
    consistent = 2.0 * 5.0 ** (1 - g) / A * total
    if not intervals:
        return SingularTimeResult(np.array(flagged), None, 0.0, printed, consistent, total, g)
    fam = vitali_select(intervals)
    sigmas = np.array([2.0 * it.radius for it in fam.items])
    csum = 5.0 ** (1 - g) * float(np.sum(sigmas * (sigmas / Tc) ** (-g)))
    return SingularTimeResult(np.array(flagged), fam, csum, printed, consistent, total, g, sigmas)


def five_fold(item: CoverItem) -> tuple[float, float]:
    """The interval 5F about the center of F = (t - s, t): (t - 3 s, t + 2 s)."""
    c, r = item.center[0], item.radius
    return c - 5 * r, c + 5 * r


# --- space-time cover -----------------------------------------------------

@dataclass
class SpacetimeCoverResult:
    family: CoveringFamily | None
    lhs: float                 # sum 18 r_i
    rhs: float                 # 36 / (nu eps) int int |grad u|^2
    dissipation: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs


def spacetime_cover_bound(flagged, tr, eps: float) -> SpacetimeCoverResult:
    """Vitali-select disjoint flagging cylinders and compare sum 18 r_i with 36/(nu eps) int int |grad u|^2.

    Each flagged point contributes its finest backward cylinder
    B(x0, r) x (t0 - r^2/nu, t0], encoded as a parabolic item centered at mid-window.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    nu = tr.nu
    diss = float(tr.dissipation_integral)
    rhs = 36.0 / (nu * eps) * diss
    pts = list(flagged.points) if hasattr(flagged, "points") else list(flagged)
    if not pts:
        return SpacetimeCoverResult(None, 0.0, rhs, diss)
    L = tr.grid.L
    items = [CoverItem(tuple(p.x0) + (p.t0 - p.smallest_scale**2 / (2 * nu),), p.smallest_scale,
                       PARABOLIC, 2.0, 3, 1.0 / (2 * nu)) for p in pts]
    fam = vitali_select(items, periods=(L, L, L, None))
    lhs = 18.0 * sum(it.radius for it in fam.items)
    return SpacetimeCoverResult(fam, lhs, rhs, diss)


__all__ = [
    "BALL", "PARABOLIC", "CoverItem", "CoveringFamily", "parabolic_dilation", "overlaps",
    "contains_points", "vitali_select", "hausdorff_sum", "interval", "cantor_cover",
    "cantor_left_endpoints", "uniform_interval_cover", "DimensionEstimate", "estimate_dimension",
    "SingularTimeAnalysis", "SingularTimeResult", "reynolds_trace", "singular_time_scan",
    "five_fold", "SpacetimeCoverResult", "spacetime_cover_bound",
]
