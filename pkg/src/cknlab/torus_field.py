"""Zero-mean periodic fields on the 3-torus.

Fields are stored as real-FFT coefficients normalized so that
``u(x) = sum_k u_hat(k) exp(i k.x)``; with this convention
``int |u|^2 dx = L^3 sum_k |u_hat(k)|^2`` (Parseval).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import os

import numpy as np
import scipy.fft as sfft

VELOCITY = "velocity"
SCALAR = "scalar"

WORKERS_ENV = "CKNLAB_WORKERS"


def fft_workers() -> int:
    """Thread count for transforms, taken from the CKNLAB_WORKERS environment variable."""
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


@dataclass(frozen=True)
class Grid:
    """Uniform N^3 sampling of the torus of side L."""

    N: int
    L: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 8 or self.N % 2:
            raise ValueError(f"N must be an even integer >= 8, got {self.N!r}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L!r}")

    @property
    def dx(self) -> float:
        return self.L / self.N

    @property
    def cell_volume(self) -> float:
        return self.dx**3

    @property
    def volume(self) -> float:
        return self.L**3

    @property
    def k_spacing(self) -> float:
        return 2.0 * np.pi / self.L

    @property
    def spectral_shape(self) -> tuple[int, int, int]:
        return (self.N, self.N, self.N // 2 + 1)

    @property
    def real_shape(self) -> tuple[int, int, int]:
        return (self.N, self.N, self.N)

    @cached_property
    def lattice(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Integer wave numbers n (k = 2 pi n / L), broadcastable to the spectral shape."""
        n_full = np.fft.fftfreq(self.N, d=1.0 / self.N)
        n_half = np.fft.rfftfreq(self.N, d=1.0 / self.N)
        return (
            n_full[:, None, None],
            n_full[None, :, None],
            n_half[None, None, :],
        )

    @cached_property
    def k(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(self.k_spacing * n for n in self.lattice)

    @cached_property
    def k2(self) -> np.ndarray:
        kx, ky, kz = self.k
        return kx**2 + ky**2 + kz**2

    @cached_property
    def inv_k2(self) -> np.ndarray:
        # Delta^{-1} on the k = 0 mode is defined as 0 (zero-mean fields).
        with np.errstate(divide="ignore"):
            out = np.where(self.k2 > 0, 1.0 / self.k2, 0.0)
        return out

    @cached_property
    def n_magnitude(self) -> np.ndarray:
        nx, ny, nz = self.lattice
        return np.sqrt(nx**2 + ny**2 + nz**2)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule cubic truncation: keep |n_i| < N/3 on every axis."""
        cut = self.N / 3.0
        nx, ny, nz = self.lattice
        return (np.abs(nx) < cut) & (np.abs(ny) < cut) & (np.abs(nz) < cut)

    @cached_property
    def mode_weights(self) -> np.ndarray:
        """Multiplicity of each stored rfft mode in the full lattice sum."""
        w = np.full(self.spectral_shape, 2.0)
        w[..., 0] = 1.0
        w[..., -1] = 1.0  # N even: the kz = N/2 plane is self-conjugate
        return w

    @cached_property
    def coordinates(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = self.dx * np.arange(self.N)
        return (x[:, None, None], x[None, :, None], x[None, None, :])

    def displacement(self, center) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Minimum-image displacement x - center for every grid point."""
        out = []
        for xi, ci in zip(self.coordinates, center):
            d = xi - ci
            out.append(d - self.L * np.round(d / self.L))
        return tuple(out)

    def distance(self, center) -> np.ndarray:
        dx, dy, dz = self.displacement(center)
        return np.sqrt(dx**2 + dy**2 + dz**2)

    def forward(self, values: np.ndarray) -> np.ndarray:
        """Real samples (..., N, N, N) -> normalized coefficients."""
        return sfft.rfftn(values, axes=(-3, -2, -1), workers=fft_workers()) / self.N**3

    def inverse(self, coeffs: np.ndarray) -> np.ndarray:
        return sfft.irfftn(coeffs * self.N**3, s=self.real_shape, axes=(-3, -2, -1),
                           workers=fft_workers())


def make_grid(N: int, L: float) -> Grid:
    return Grid(int(N) if float(N).is_integer() else N, float(L))


def resample_coeffs(coeffs: np.ndarray, src: Grid, dst: Grid) -> np.ndarray:
    """Map coefficients between grids of the same L by zero-padding or truncation.

    Modes with |n_i| >= min(N_src, N_dst)/2 are dropped, so Nyquist planes never carry over.
    """
    if src.L != dst.L:
        raise ValueError("resampling requires equal box sizes")
    h = min(src.N, dst.N) // 2
    out = np.zeros(coeffs.shape[:-3] + dst.spectral_shape, dtype=complex)
    pos = slice(0, h)
    neg_src, neg_dst = slice(src.N - h + 1, src.N), slice(dst.N - h + 1, dst.N)
    for a_src, a_dst in ((pos, pos), (neg_src, neg_dst)):
        for b_src, b_dst in ((pos, pos), (neg_src, neg_dst)):
            out[..., a_dst, b_dst, :h] = coeffs[..., a_src, b_src, :h]
    return out


def resample(f: "SpectralField", dst: Grid) -> "SpectralField":
    return SpectralField(dst, resample_coeffs(f.coeffs, f.grid, dst), f.kind)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients of a real periodic field.

    ``coeffs`` has shape (3, N, N, N//2+1) for velocity fields and
    (N, N, N//2+1) for scalars.
    """

    grid: Grid
    coeffs: np.ndarray
    kind: str = VELOCITY
    _real: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        expected = self.grid.spectral_shape
        if self.kind == VELOCITY:
            expected = (3,) + expected
        elif self.kind != SCALAR:
            raise ValueError(f"unknown field kind {self.kind!r}")
        if self.coeffs.shape != expected:
            raise ValueError(f"coefficient shape {self.coeffs.shape} != {expected}")

    @classmethod
    def from_real(cls, grid: Grid, values: np.ndarray, kind: str | None = None,
                  zero_mean: bool = True) -> "SpectralField":
        values = np.asarray(values, dtype=float)
        if kind is None:
            kind = VELOCITY if values.ndim == 4 else SCALAR
        c = grid.forward(values)
        if zero_mean:
            c[..., 0, 0, 0] = 0.0
        return cls(grid, c, kind)

    @classmethod
    def zeros(cls, grid: Grid, kind: str = VELOCITY) -> "SpectralField":
        shape = grid.spectral_shape if kind == SCALAR else (3,) + grid.spectral_shape
        return cls(grid, np.zeros(shape, dtype=complex), kind)

    def with_coeffs(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(self.grid, coeffs, self.kind)

    def real(self) -> np.ndarray:
        """Real-space samples (cached; treat the result as read-only)."""
        if "u" not in self._real:
            self._real["u"] = self.grid.inverse(self.coeffs)
        return self._real["u"]

    def gradient(self) -> np.ndarray:
        """Real-space derivatives: out[i, j] = d_j u_i (velocity) or out[j] = d_j f (scalar)."""
        if "grad" not in self._real:
            k = self.grid.k
            if self.kind == VELOCITY:
                g = np.stack([np.stack([1j * k[j] * self.coeffs[i] for j in range(3)])
                              for i in range(3)])
            else:
                g = np.stack([1j * k[j] * self.coeffs for j in range(3)])
            self._real["grad"] = self.grid.inverse(g)
        return self._real["grad"]

    def divergence(self) -> np.ndarray:
        """Spectral divergence coefficients i k.u_hat."""
        k = self.grid.k
        return sum(1j * k[i] * self.coeffs[i] for i in range(3))

    def norm2(self) -> float:
        """Squared L2 norm over the torus via Parseval."""
        c2 = np.abs(self.coeffs) ** 2
        if self.kind == VELOCITY:
            c2 = c2.sum(axis=0)
        return float(self.grid.volume * np.sum(self.grid.mode_weights * c2))

    def gradient_norm2(self) -> float:
        """int |grad u|^2 dx via Parseval."""
        c2 = np.abs(self.coeffs) ** 2
        if self.kind == VELOCITY:
            c2 = c2.sum(axis=0)
        return float(self.grid.volume * np.sum(self.grid.mode_weights * self.grid.k2 * c2))

    def mean(self) -> np.ndarray:
        return np.real(self.coeffs[..., 0, 0, 0])

    def max_divergence_ratio(self) -> float:
        """max_k |k.u_hat(k)| / (|k| |u_hat(k)|) over modes above the round-off floor."""
        if self.kind != VELOCITY:
            raise ValueError("divergence is defined for velocity fields")
        k = self.grid.k
        kdotu = np.abs(sum(k[i] * self.coeffs[i] for i in range(3)))
        amp = np.sqrt(np.sum(np.abs(self.coeffs) ** 2, axis=0))
        mag = np.sqrt(self.grid.k2) * amp
        ok = (mag > 0) & (amp > 1e-13 * amp.max(initial=0.0))
        return float(np.max(kdotu[ok] / mag[ok])) if np.any(ok) else 0.0

    def scaled(self, factor: float) -> "SpectralField":
        return self.with_coeffs(self.coeffs * factor)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return self.with_coeffs(self.coeffs - other.coeffs)


def project_divergence_free(u: SpectralField) -> SpectralField:
    """Leray projection u_hat <- u_hat - k (k.u_hat)/|k|^2."""
    if u.kind != VELOCITY:
        raise ValueError("projection applies to velocity fields")
    return u.with_coeffs(leray_project_coeffs(u.grid, u.coeffs))


def leray_project_coeffs(grid: Grid, c: np.ndarray) -> np.ndarray:
    k = grid.k
    kdotc = k[0] * c[0] + k[1] * c[1] + k[2] * c[2]
    factor = kdotc * grid.inv_k2
    return np.stack([c[i] - k[i] * factor for i in range(3)])


def dealias(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    return coeffs * grid.dealias_mask


def quadratic_products(grid: Grid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dealiased coefficients of a_i b_j for real-space components a, b.

    Returns shape (3, 3, ...) with out[i, j] = FT(a_i b_j) truncated by the 2/3 rule.
    """
    prod = a[:, None] * b[None, :]
    return grid.forward(prod) * grid.dealias_mask


def pressure_from_velocity(u: SpectralField, advecting: SpectralField | None = None) -> SpectralField:
    """p = -sum_ij Delta^{-1} d_i d_j (v_j u_i) with v = advecting (default u).

    In Fourier space p_hat = -(k_i k_j / |k|^2) FT(v_j u_i); the k = 0 mode is zero.
    With an advecting field v = <u>_lambda this is the pressure of the
    regularized equation.
    """
    grid = u.grid
    v = u if advecting is None else advecting
    uu = quadratic_products(grid, grid.inverse(dealias(u.coeffs, grid)),
                            grid.inverse(dealias(v.coeffs, grid)))
    k = grid.k
    acc = np.zeros(grid.spectral_shape, dtype=complex)
    for i in range(3):
        for j in range(3):
            acc += k[i] * k[j] * uu[i, j]
    p = -acc * grid.inv_k2
    p[0, 0, 0] = 0.0
    return SpectralField(grid, p, SCALAR)


@dataclass(frozen=True)
class MollifierSpec:
    """Leray mollifier chi_lambda(x) = lambda^3 chi(lambda x).

    The base profile is the normalized bump exp(-1/(1 - (|x|/R)^2)) on
    |x| < R with R = support_fraction * L.
    """

    lam: float = 1.0
    support_fraction: float = 0.25

    def __post_init__(self):
        if not self.lam >= 1.0:
            raise ValueError(f"lambda must be >= 1, got {self.lam!r}")
        if not 0.0 < self.support_fraction < 0.5:
            raise ValueError("support fraction must lie in (0, 1/2)")

    def multiplier(self, grid: Grid) -> np.ndarray:
        R = self.support_fraction * grid.L
        kmag = np.sqrt(grid.k2)
        uniq, inv = np.unique(np.round(kmag, 12), return_inverse=True)
        vals = profile_transform(uniq / self.lam, R)
        return vals[inv].reshape(kmag.shape)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(256)


def bump(rho: np.ndarray) -> np.ndarray:
    """exp(-1/(1 - rho^2)) for rho < 1, else 0 (unnormalized)."""
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    inside = rho < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - rho[inside] ** 2))
    return out


def profile_transform(kmag, R: float) -> np.ndarray:
    """Normalized 3D Fourier transform of the radial bump of support radius R.

    chi_hat(k) = int chi(rho) rho^2 sinc(k rho) d rho / int chi(rho) rho^2 d rho,
    evaluated by Gauss-Legendre quadrature on [0, R].
    """
    kmag = np.atleast_1d(np.asarray(kmag, dtype=float))
    rho = 0.5 * R * (_GL_NODES + 1.0)
    w = 0.5 * R * _GL_WEIGHTS * bump(rho / R) * rho**2
    kr = kmag[:, None] * rho[None, :]
    vals = (np.sinc(kr / np.pi) * w).sum(axis=1)
    return vals / w.sum()


def mollify(u: SpectralField, m: MollifierSpec) -> SpectralField:
    return u.with_coeffs(u.coeffs * m.multiplier(u.grid))


@dataclass(frozen=True)
class BallRegion:
    center: tuple[float, float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius!r}")


def ball_weights(grid: Grid, center, radius: float) -> np.ndarray:
    """Smoothed indicator of B_r(center): linear ramp of one cell width across the sphere."""
    if radius <= 0:
        raise ValueError(f"ball radius must be positive, got {radius!r}")
    if radius >= grid.L / 2:
        return np.ones(grid.real_shape)
    d = grid.distance(center)
    return np.clip((radius - d) / grid.dx + 0.5, 0.0, 1.0)


def _density(f) -> np.ndarray:
    if isinstance(f, SpectralField):
        if f.kind != SCALAR:
            raise ValueError("ball_integral expects a scalar field or density samples")
        return f.real()
    return np.asarray(f, dtype=float)


def ball_integral(f, grid: Grid, region: BallRegion) -> float:
    """int_{B_r} f dx by weighted sample sum times cell volume."""
    dens = _density(f)
    w = ball_weights(grid, region.center, region.radius)
    return float(np.sum(w * dens) * grid.cell_volume)


def ball_integrals_everywhere(density: np.ndarray, grid: Grid, radius: float) -> np.ndarray:
    """int_{B_r(x)} density for every grid point x, by circular convolution."""
    if radius >= grid.L / 2:
        return np.full(grid.real_shape, float(np.sum(density)) * grid.cell_volume)
    w0 = ball_weights(grid, (0.0, 0.0, 0.0), radius)
    conv = sfft.irfftn(sfft.rfftn(density) * sfft.rfftn(w0), s=grid.real_shape)
    return conv * grid.cell_volume


def shell_index(grid: Grid) -> np.ndarray:
    return np.rint(grid.n_magnitude).astype(int)


def shell_energies(u: SpectralField, shells) -> np.ndarray:
    """Kinetic energy 1/2 L^3 sum |u_hat|^2 per integer shell round(|n|) = s."""
    idx = shell_index(u.grid)
    c2 = np.sum(np.abs(u.coeffs) ** 2, axis=0) * u.grid.mode_weights
    return np.array([0.5 * u.grid.volume * float(np.sum(c2[idx == s])) for s in shells])


def power_law_spectrum(amplitude: float, exponent: float, cutoff: int):
    """Shell energies E_s = amplitude * s^-exponent for 1 <= s <= cutoff."""
    return {s: amplitude * s ** (-exponent) for s in range(1, int(cutoff) + 1)}


def sample_random_field(grid: Grid, spectrum: dict[int, float], seed: int) -> SpectralField:
    """Divergence-free Gaussian field with prescribed integer-shell energies.

    ``spectrum`` maps shell index s = round(|n|) to the energy 1/2 int |u|^2
    carried by that shell.
    """
    shells = [s for s, e in spectrum.items() if e > 0]
    if any(s < 1 for s in spectrum):
        raise ValueError("shell indices start at 1")
    if spectrum and max(spectrum) > grid.N / 3:
        raise ValueError(f"spectral cutoff {max(spectrum)} exceeds N/3 = {grid.N / 3:.3f}")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((3,) + grid.real_shape)
    c = grid.forward(noise) * grid.dealias_mask
    c[:, 0, 0, 0] = 0.0
    c = leray_project_coeffs(grid, c)
    idx = shell_index(grid)
    keep = np.isin(idx, shells)
    c = c * keep
    u = SpectralField(grid, c, VELOCITY)
    have = shell_energies(u, shells)
    for s, h in zip(shells, have):
        if h > 0:
            c[:, idx == s] *= np.sqrt(spectrum[s] / h)
    return SpectralField(grid, c, VELOCITY)
