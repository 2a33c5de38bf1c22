"""Wigner functions of number-basis states and the energy-measurement map.

The Wigner function of ``rho`` is ``W = sum_mn rho_mn K_mn`` where ``K_mn`` is
the Wigner transform of ``|m><n|``.  With the dimensionless amplitude
``A = (x sqrt(m w / hbar) + i p / sqrt(m w hbar)) / sqrt 2`` the kernels obey

    K_00 = exp(-2 |A|^2) / (pi hbar)
    K_{m+1,n} = (2 conj(A) K_{m,n} - sqrt(n) K_{m,n-1}) / sqrt(m + 1)
    K_{n,m} = conj(K_{m,n})

which is evaluated row by row in ``m`` over chunks of grid points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.ndimage import map_coordinates

from .errors import CoverageError, DegeneracyError, InvalidDimensionError
from .operators import DensityMatrix, DriveProtocol, _mat, quadratures, spectrum

__all__ = [
    "PhaseGrid",
    "WignerField",
    "laguerre",
    "fock_wigner",
    "wigner_transform",
    "displaced_thermal_wigner",
    "dephase",
    "angular_average",
    "angular_variance",
    "laguerre_delta_diagnostic",
]

MIN_COUNT = 64
N_ANGLES = 256
COVERAGE_SIGMAS = 6.0
NORM_TOL = 1e-4
_CHUNK = 2048
_EXP_LIMIT = 745.0  # exp(-x) underflows to 0 beyond this


@dataclass(frozen=True)
class PhaseGrid:
    """Rectangular grid on ``[x_min, x_max] x [p_min, p_max]`` (end points included)."""

    x_min: float
    x_max: float
    p_min: float
    p_max: float
    nx: int = 512
    np_: int = 512

    def __post_init__(self):
        if self.nx < MIN_COUNT or self.np_ < MIN_COUNT:
            raise InvalidDimensionError(f"grid counts must be >= {MIN_COUNT}")
        if not (self.x_max > self.x_min and self.p_max > self.p_min):
            raise ValueError("empty grid range")

    @classmethod
    def square(cls, half_width: float, n: int = 512, center=(0.0, 0.0)) -> "PhaseGrid":
        cx, cp = center
        return cls(cx - half_width, cx + half_width, cp - half_width, cp + half_width, n, n)

    @classmethod
    def for_protocol(cls, p: DriveProtocol, n: int = 512, sigmas: float = 6.5) -> "PhaseGrid":
        """Origin-centred grid covering every rotation of the ``t = 0`` state
        by ``sigmas`` thermal widths."""
        mw = p.m * p.omega
        x0, p0 = p.initial_center
        radius = math.sqrt(mw * x0**2 + p0**2 / mw)  # canonical units
        s2 = 0.5 * p.hbar / math.tanh(0.5 * p.beta * p.hbar * p.omega)
        R = radius + sigmas * math.sqrt(s2)
        return cls(-R / math.sqrt(mw), R / math.sqrt(mw), -R * math.sqrt(mw), R * math.sqrt(mw), n, n)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def p(self) -> np.ndarray:
        return np.linspace(self.p_min, self.p_max, self.np_)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dp(self) -> float:
        return (self.p_max - self.p_min) / (self.np_ - 1)

    def mesh(self):
        return np.meshgrid(self.x, self.p, indexing="ij")

    def contains(self, center, sx, sp, k: float = COVERAGE_SIGMAS) -> bool:
        cx, cp = center
        return (self.x_min <= cx - k * sx and cx + k * sx <= self.x_max
                and self.p_min <= cp - k * sp and cp + k * sp <= self.p_max)


def _trapezoid2(values, grid):
    return float(np.trapezoid(np.trapezoid(values, dx=grid.dp, axis=1), dx=grid.dx))


@dataclass
class WignerField:
    """Real phase-space field on a grid; ``values[i, j]`` sits at ``(x_i, p_j)``."""

    grid: PhaseGrid
    values: np.ndarray
    hbar: float
    imag_residual: float = 0.0
    check_norm: bool = True

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != (self.grid.nx, self.grid.np_):
            raise InvalidDimensionError(f"field shape {v.shape} does not match grid")
        if np.iscomplexobj(v):
            self.imag_residual = max(self.imag_residual, float(np.abs(v.imag).max()))
            v = v.real
        if self.imag_residual >= 1e-10:
            raise ValueError(f"Wigner field has imaginary residual {self.imag_residual:.2e}")
        self.values = np.ascontiguousarray(v, dtype=float)
        if self.check_norm and abs(self.integral() - 1) > NORM_TOL:
            raise CoverageError(f"field integrates to {self.integral():.6f}, not 1; "
                                "the grid misses part of the state")

    def integral(self) -> float:
        return _trapezoid2(self.values, self.grid)

    def linf(self, other: "WignerField") -> float:
        return float(np.abs(self.values - other.values).max())

    def peak(self):
        i, j = np.unravel_index(np.argmax(self.values), self.values.shape)
        return float(self.grid.x[i]), float(self.grid.p[j])


def laguerre(n: int, y):
    """Laguerre polynomial ``L_n(y)`` by the three-term recurrence."""
    y = np.asarray(y, float)
    prev, cur = np.zeros_like(y), np.ones_like(y)
    for k in range(n):
        prev, cur = cur, ((2 * k + 1 - y) * cur - k * prev) / (k + 1)
    return cur


def _alpha2(x, mom, p: DriveProtocol):
    mw = p.m * p.omega
    return (mw * np.asarray(x, float) ** 2 + np.asarray(mom, float) ** 2 / mw) / (2 * p.hbar)


def fock_wigner(n: int, x, mom, p: DriveProtocol, return_flag: bool = False):
    """``F_n = 2 (-1)^n exp(-2|alpha|^2) L_n(4|alpha|^2)`` (without ``1/(2 pi hbar)``).

    The recurrence is run on ``exp(-y/2) L_k(y)`` so nothing overflows; where
    the Gaussian envelope underflows the value is 0 and ``flag`` is set.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    y = 4 * _alpha2(x, mom, p)
    flag = 0.5 * y > _EXP_LIMIT
    env = np.exp(-0.5 * y)
    prev, cur = np.zeros_like(y), env
    for k in range(n):
        prev, cur = cur, ((2 * k + 1 - y) * cur - k * prev) / (k + 1)
    value = np.where(flag, 0.0, 2.0 * (-1) ** n * cur)
    if np.ndim(value) == 0:
        value, flag = float(value), bool(flag)
    return (value, flag) if return_flag else value


def _effective_dim(rho, tol=1e-15):
    mags = np.abs(rho).max(axis=1)
    keep = np.nonzero(mags > tol * mags.max())[0]
    return int(keep[-1]) + 1 if keep.size else 1


def _moments(rho, p):
    N = rho.shape[0]
    x, mom = quadratures(N, p)
    ex = np.real(np.trace(x.matrix @ rho))
    ep = np.real(np.trace(mom.matrix @ rho))
    vx = np.real(np.trace(x.matrix @ x.matrix @ rho)) - ex**2
    vp = np.real(np.trace(mom.matrix @ mom.matrix @ rho)) - ep**2
    return (ex, ep), math.sqrt(max(vx, 0.0)), math.sqrt(max(vp, 0.0))


def wigner_transform(rho, grid: PhaseGrid, p: DriveProtocol, check_coverage: bool = True) -> WignerField:
    """Wigner function of a number-basis state on a grid.

    Raises ``CoverageError`` unless the grid spans six standard deviations
    around the state's mean in both ``x`` and ``p``.
    """
    R = _mat(rho)
    if check_coverage:
        center, sx, sp = _moments(R, p)
        if not grid.contains(center, sx, sp):
            raise CoverageError(
                f"grid [{grid.x_min:g}, {grid.x_max:g}] x [{grid.p_min:g}, {grid.p_max:g}] "
                f"does not cover 6 sigma around ({center[0]:.3g}, {center[1]:.3g})")
    N = _effective_dim(R)
    R = R[:N, :N]
    X, P = grid.mesh()
    mw = p.m * p.omega
    A = (X.ravel() * math.sqrt(mw / p.hbar) + 1j * P.ravel() / math.sqrt(mw * p.hbar)) / math.sqrt(2)
    out = np.zeros(A.size)
    scale = np.abs(R).max()
    # W = sum_m rho_mm K_mm + 2 Re sum_{k>0} sum_m rho_{m,m+k} K_{m,m+k}, with
    # K_{m,m+k} = (-1)^m (2 alpha)^k sqrt(m!/(m+k)!) L_m^(k)(y) e^{-y/2} / (pi hbar)
    # and y = 4|alpha|^2; the normalized Laguerre functions g_m of each
    # diagonal k follow a stable three-term recurrence in m
    for lo in range(0, A.size, _CHUNK):
        a = A[lo:lo + _CHUNK]
        y = 4 * np.abs(a) ** 2
        with np.errstate(divide="ignore"):
            logy = np.log(y)
        theta = np.angle(a)
        acc = np.zeros(a.size)
        for k in range(N):
            coef = np.diagonal(R, k)
            if np.abs(coef).max() <= 1e-16 * scale:
                continue
            with np.errstate(invalid="ignore"):
                expo = -0.5 * y + (0.5 * k * logy if k else 0.0) - 0.5 * math.lgamma(k + 1)
            g = np.exp(np.maximum(expo, -_EXP_LIMIT - 10))
            g_prev = np.zeros_like(g)
            s_k = coef[0] * g
            for m in range(coef.size - 1):
                g, g_prev = ((2 * m + 1 + k - y) * g - math.sqrt(m * (m + k)) * g_prev) / math.sqrt(
                    (m + 1) * (m + 1 + k)), g
                s_k = s_k + ((-1) ** (m + 1) * coef[m + 1]) * g
            if k == 0:
                acc += s_k.real
            else:
                acc += 2 * (np.exp(1j * k * theta) * s_k).real
        out[lo:lo + _CHUNK] = acc / (math.pi * p.hbar)
    # the Hermitian sum is real; what it drops is the anti-Hermitian part of rho
    resid = float(np.abs(R - R.conj().T).max())
    return WignerField(grid, out.reshape(X.shape), p.hbar, imag_residual=resid)


def displaced_thermal_wigner(grid: PhaseGrid, p: DriveProtocol, center=None) -> WignerField:
    """Closed-form Wigner function of a Gibbs state of the oscillator
    translated to ``center`` (default: the ``t = 0`` state of the protocol)."""
    x0, p0 = p.initial_center if center is None else center
    th = math.tanh(0.5 * p.beta * p.hbar * p.omega)
    X, P = grid.mesh()
    mw = p.m * p.omega
    q = (mw * (X - x0) ** 2 + (P - p0) ** 2 / mw) / p.hbar
    return WignerField(grid, th / (math.pi * p.hbar) * np.exp(-th * q), p.hbar)


def dephase(rho, H0, gap_tol: float = 1e-10) -> DensityMatrix:
    """Projective energy measurement without readout: drop the coherences of
    ``rho`` in the eigenbasis of ``H0``."""
    s = spectrum(H0)
    gaps = np.diff(s.values)
    if gaps.size and gaps.min() < gap_tol:
        raise DegeneracyError(f"H0 has near-degenerate levels (gap {gaps.min():.2e}); "
                              "the measurement basis is ambiguous")
    V = s.vectors
    pops = np.real(np.einsum("in,ij,jn->n", V.conj(), _mat(rho), V))
    return DensityMatrix((V * pops) @ V.conj().T)


def _polar_profile(field, p, radii, n_angles, order):
    """Field sampled on circles, shape ``(len(radii), n_angles)``.

    ``order`` is the spline order of the interpolation: 1 is bilinear with an
    ``O(h^2)`` bias, 3 is a cubic spline with ``O(h^4)`` error.
    """
    g, values = field.grid, field.values
    mw = p.m * p.omega
    theta = 2 * np.pi * np.arange(n_angles) / n_angles
    R, T = np.meshgrid(radii, theta, indexing="ij")
    ix = (R * np.cos(T) / math.sqrt(mw) - g.x_min) / g.dx
    ip = (R * np.sin(T) * math.sqrt(mw) - g.p_min) / g.dp
    vals = map_coordinates(values, [ix, ip], order=order, mode="constant", cval=np.nan)
    outside = np.isnan(vals)
    if outside.any():
        edge = max(np.abs(values[[0, -1], :]).max(), np.abs(values[:, [0, -1]]).max())
        if edge >= 1e-6 * np.abs(values).max():
            raise CoverageError("field support leaves the grid under rotation "
                                f"(boundary value {edge:.2e})")
        vals = np.where(outside, 0.0, vals)
    return vals


def _radii(field, p):
    g = field.grid
    mw = p.m * p.omega
    rmax = math.hypot(max(abs(g.x_min), abs(g.x_max)) * math.sqrt(mw),
                      max(abs(g.p_min), abs(g.p_max)) / math.sqrt(mw))
    return np.linspace(0.0, rmax, 4 * max(g.nx, g.np_))


def angular_average(field: WignerField, p: DriveProtocol, n_angles: int = N_ANGLES,
                    order: int = 3) -> WignerField:
    """Average a field over rotations about the origin in canonical
    coordinates ``(x sqrt(m w), p / sqrt(m w))``.

    The average is taken on a fine radial grid (spline interpolation of the
    given ``order``, trapezoidal rule in the angle) and mapped back to the
    field's grid with a cubic spline in the radius. ``order=1`` gives plain
    bilinear resampling.
    """
    if n_angles < N_ANGLES:
        raise ValueError(f"need at least {N_ANGLES} angles")
    radii = _radii(field, p)
    profile = _polar_profile(field, p, radii, n_angles, order).mean(axis=1)
    X, P = field.grid.mesh()
    mw = p.m * p.omega
    r = np.sqrt(mw * X**2 + P**2 / mw)
    return WignerField(field.grid, CubicSpline(radii, profile)(r), field.hbar, check_norm=False)


def angular_variance(field: WignerField, p: DriveProtocol, n_angles: int = N_ANGLES,
                     order: int = 3) -> float:
    """Largest variance over angles of the field on circles about the origin."""
    vals = _polar_profile(field, p, _radii(field, p), n_angles, order)
    return float(vals.var(axis=1).max())


def laguerre_delta_diagnostic(y0: float, sizes=(10, 20, 40, 80), span: float = 10.0, points: int = 2001):
    """Truncated sums ``S_N(y) = sum_{n<=N} L_n(y) L_n(y0) e^{-(y+y0)/2}``.

    The completeness of the Laguerre functions makes ``S_N`` approach
    ``delta(y - y0)``; reported per ``N``: peak value at ``y0``, full width at
    half maximum and the integral over ``[0, y0 + span]``.
    """
    y = np.linspace(0.0, y0 + span, points)
    out = []
    for N in sizes:
        s = np.zeros_like(y)
        s0 = 0.0
        for n in range(N + 1):
            ln0 = float(laguerre(n, y0))
            s += laguerre(n, y) * ln0
            s0 += ln0 * ln0
        s *= np.exp(-0.5 * (y + y0))
        peak = s0 * math.exp(-y0)
        above = y[s >= 0.5 * peak]
        width = float(above.max() - above.min()) if above.size else math.nan
        out.append({"N": N, "peak": peak, "fwhm": width, "integral": float(np.trapezoid(s, y))})
    return out
