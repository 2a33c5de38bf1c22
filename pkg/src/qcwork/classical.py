"""Classical counterpart of the dragged oscillator.

Newton flow in closed form, the work functional, the Gaussian initial density,
the closed-form and Monte Carlo work characteristic functions, and the
arbitrary-initial-state Jarzynski equality.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .operators import DriveProtocol
from .workstats import CharacteristicSamples, JarzynskiReport

__all__ = [
    "PhasePoint",
    "GaussianPhaseDensity",
    "ClassicalWorkSample",
    "newton_map",
    "inverse_map",
    "flow",
    "hamiltonian",
    "classical_work",
    "work_by_quadrature",
    "classical_initial_density",
    "equilibrium_density",
    "partition_function",
    "cf_classical_closed",
    "cf_classical_mc",
    "gong_jarzynski_check",
    "work_mean_variance",
]

MC_CHUNK = 1 << 16


@dataclass(frozen=True)
class PhasePoint:
    """A phase-space point ``(x, p)``; both fields may be arrays of equal shape."""

    x: object
    p: object

    def __post_init__(self):
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.p))):
            raise ValueError("phase point components must be finite")

    def as_array(self):
        return np.stack([np.asarray(self.x, float), np.asarray(self.p, float)])


@dataclass(frozen=True)
class GaussianPhaseDensity:
    """Product Gaussian in ``x`` and ``p``."""

    mean: PhasePoint
    var_x: float
    var_p: float

    def __post_init__(self):
        if not (self.var_x > 0 and self.var_p > 0):
            raise ValueError("variances must be positive")

    @property
    def normalization(self) -> float:
        """Prefactor ``1 / (2 pi sigma_x sigma_p)``."""
        return 1.0 / (2 * math.pi * math.sqrt(self.var_x * self.var_p))

    def pdf(self, x, p):
        dx = np.asarray(x) - self.mean.x
        dp = np.asarray(p) - self.mean.p
        return self.normalization * np.exp(-0.5 * (dx**2 / self.var_x + dp**2 / self.var_p))

    def sample(self, rng: np.random.Generator, n: int) -> PhasePoint:
        z = rng.standard_normal((2, n))
        return PhasePoint(self.mean.x + math.sqrt(self.var_x) * z[0],
                          self.mean.p + math.sqrt(self.var_p) * z[1])

    @property
    def covariance(self):
        return np.diag([self.var_x, self.var_p])


@dataclass(frozen=True)
class ClassicalWorkSample:
    initial: PhasePoint
    final: PhasePoint
    work: object


def _center_line(p, reverse):
    if reverse:
        return p.u * p.tau, -p.u
    return 0.0, p.u


def flow(z: PhasePoint, t_start, t_end, p: DriveProtocol, reverse: bool = False) -> PhasePoint:
    """Exact Newton flow from ``t_start`` to ``t_end`` in a well whose centre
    moves as ``a + v t`` (``H(t)`` forward, ``H(tau - t)`` when ``reverse``)."""
    a, v = _center_line(p, reverse)
    m, w = p.m, p.omega
    y = np.asarray(z.x, float) - (a + v * t_start)
    ydot = np.asarray(z.p, float) / m - v
    s = t_end - t_start
    c, sn = math.cos(w * s), math.sin(w * s)
    y1 = y * c + ydot / w * sn
    ydot1 = -y * w * sn + ydot * c
    return PhasePoint(a + v * t_end + y1, m * (ydot1 + v))


def newton_map(z0: PhasePoint, t: float, p: DriveProtocol) -> PhasePoint:
    """``z(t)`` for the trajectory starting at ``z0`` at time 0."""
    w, m, u = p.omega, p.m, p.u
    c, s = math.cos(w * t), math.sin(w * t)
    x0, p0 = np.asarray(z0.x, float), np.asarray(z0.p, float)
    x = x0 * c + p0 / (m * w) * s + u * t - u / w * s
    mom = -x0 * m * w * s + p0 * c + m * u * (1 - c)
    return PhasePoint(x, mom)


def inverse_map(zt: PhasePoint, t: float, p: DriveProtocol) -> PhasePoint:
    """Initial point of the trajectory passing through ``zt`` at time ``t``."""
    w, m, u = p.omega, p.m, p.u
    c, s = math.cos(w * t), math.sin(w * t)
    x, mom = np.asarray(zt.x, float), np.asarray(zt.p, float)
    x0 = x * c - mom / (m * w) * s - u * (t * c - s / w)
    p0 = x * m * w * s + mom * c - m * u * (w * t * s + c - 1)
    return PhasePoint(x0, p0)


def hamiltonian(z: PhasePoint, t: float, p: DriveProtocol):
    x, mom = np.asarray(z.x, float), np.asarray(z.p, float)
    return mom**2 / (2 * p.m) + 0.5 * p.m * p.omega**2 * (x - p.u * t) ** 2


def classical_work(z0: PhasePoint, p: DriveProtocol) -> ClassicalWorkSample:
    """Work on ``[0, tau]`` along the exact trajectory from ``z0``.

    For isolated dynamics the work equals ``H(z(tau), tau) - H(z0, 0)``.  That
    difference is evaluated in the algebraically equal form
    ``-u [m w x0 sin(w tau) + (p0 - m u)(1 - cos(w tau))]``, which avoids the
    cancellation between the endpoint energies and vanishes exactly at ``u = 0``.
    """
    z1 = newton_map(z0, p.tau, p)
    m, w, u = p.m, p.omega, p.u
    x0, p0 = np.asarray(z0.x, float), np.asarray(z0.p, float)
    W = -u * (m * w * x0 * math.sin(w * p.tau) + (p0 - m * u) * (1 - math.cos(w * p.tau)))
    return ClassicalWorkSample(z0, z1, W)


def work_by_quadrature(z0: PhasePoint, p: DriveProtocol) -> float:
    """Integral of ``dH/dt = -m w^2 u (x(t) - u t)`` along the trajectory."""
    k = p.m * p.omega**2

    def dHdt(t):
        z = newton_map(z0, t, p)
        return -k * p.u * (float(z.x) - p.u * t)

    value, _ = integrate.quad(dHdt, 0.0, p.tau, epsabs=1e-14, epsrel=1e-13, limit=200)
    return value


def partition_function(p: DriveProtocol) -> float:
    """Classical ``Z = 2 pi / (beta w)`` (phase-space measure ``dx dp``)."""
    return 2 * math.pi / (p.beta * p.omega)


def equilibrium_density(p: DriveProtocol, t: float) -> GaussianPhaseDensity:
    """Canonical density of ``H(z, t)``."""
    return GaussianPhaseDensity(PhasePoint(p.u * t, 0.0),
                                1.0 / (p.beta * p.m * p.omega**2), p.m / p.beta)


def classical_initial_density(p: DriveProtocol) -> GaussianPhaseDensity:
    """Density at ``t = 0``: equilibrium at ``-tau'`` carried along by the flow."""
    x0, p0 = p.initial_center
    return GaussianPhaseDensity(PhasePoint(x0, p0),
                                1.0 / (p.beta * p.m * p.omega**2), p.m / p.beta)


def work_mean_variance(p: DriveProtocol):
    """Mean and variance of the classical work read off the closed-form CF."""
    k = p.m * p.u**2
    wt, w = p.omega * p.tau_prime, p.omega
    mean = k * (math.cos(wt) - math.cos(wt + w * p.tau))
    var = 2 * k * (1 - math.cos(w * p.tau)) / p.beta
    return mean, var


def cf_classical_closed(etas, p: DriveProtocol) -> CharacteristicSamples:
    """Gaussian work characteristic function of the dragged well.

    ``etas`` may be complex, which the moment extraction relies on.
    """
    eta = np.asarray(etas)
    mean, var = work_mean_variance(p)
    values = np.exp(1j * eta * mean - 0.5 * eta**2 * var)
    return CharacteristicSamples("CLASSICAL", eta, values, validate=np.isrealobj(eta))


def _chunk_work(p, density, seed, index, size):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))
    z0 = density.sample(rng, size)
    return classical_work(z0, p).work


def _chunks(n_samples):
    n_full, rest = divmod(n_samples, MC_CHUNK)
    sizes = [MC_CHUNK] * n_full + ([rest] if rest else [])
    return list(enumerate(sizes))


def cf_classical_mc(etas, p: DriveProtocol, n_samples: int = 1_000_000, seed: int = 0):
    """Monte Carlo estimate of the classical work characteristic function.

    Samples are drawn in fixed-size chunks; chunk ``i`` uses the stream
    ``SeedSequence(seed, spawn_key=(i,))`` so the estimate does not depend on
    evaluation order.  Per-chunk sums are combined with ``math.fsum``.

    Returns
    -------
    samples : CharacteristicSamples
    stderr : ndarray
        Standard error of the complex mean,
        ``sqrt((Var cos(eta W) + Var sin(eta W)) / n)``.
    """
    if n_samples < 1000:
        raise ValueError("n_samples must be >= 1000")
    eta = np.asarray(etas, dtype=float)
    density = classical_initial_density(p)
    partial = {k: [[] for _ in eta] for k in ("c", "s", "c2", "s2")}
    for index, size in _chunks(n_samples):
        W = _chunk_work(p, density, seed, index, size)
        phase = np.multiply.outer(eta, W)
        c, s = np.cos(phase), np.sin(phase)
        for j in range(eta.size):
            partial["c"][j].append(c[j].sum())
            partial["s"][j].append(s[j].sum())
            partial["c2"][j].append((c[j] ** 2).sum())
            partial["s2"][j].append((s[j] ** 2).sum())
    n = float(n_samples)
    mc = np.array([math.fsum(v) / n for v in partial["c"]])
    ms = np.array([math.fsum(v) / n for v in partial["s"]])
    var_c = np.maximum(np.array([math.fsum(v) / n for v in partial["c2"]]) - mc**2, 0.0)
    var_s = np.maximum(np.array([math.fsum(v) / n for v in partial["s2"]]) - ms**2, 0.0)
    stderr = np.sqrt((var_c + var_s) * n / (n - 1) / n)
    return CharacteristicSamples("CLASSICAL", eta, mc + 1j * ms), stderr


def _reverse_final_density(p: DriveProtocol):
    """Mean and covariance of the time-reversed process at its final time.

    The reversed drive ``H(tau - t)`` starts in equilibrium with ``H(tau)``;
    the flow is affine, so the density stays Gaussian.
    """
    start = equilibrium_density(p, p.tau)
    origin = flow(PhasePoint(0.0, 0.0), 0.0, p.tau, p, reverse=True)
    ex = flow(PhasePoint(1.0, 0.0), 0.0, p.tau, p, reverse=True)
    ep = flow(PhasePoint(0.0, 1.0), 0.0, p.tau, p, reverse=True)
    o = np.array([origin.x, origin.p], float)
    S = np.column_stack([np.array([ex.x, ex.p], float) - o, np.array([ep.x, ep.p], float) - o])
    mean = S @ np.array([start.mean.x, start.mean.p]) + o
    cov = S @ start.covariance @ S.T
    return mean, cov


def gong_jarzynski_check(p: DriveProtocol, n_samples: int = 1_000_000, seed: int = 0) -> JarzynskiReport:
    """Jarzynski equality for an arbitrary initial density.

    The left side is a Monte Carlo average of ``exp(-beta (W - dF))`` over the
    initial density.  The right side,
    ``int p_R(x, -p, tau) p(x, p, 0) / p_eq(x, p, 0) dx dp``, is a Gaussian
    integral evaluated in closed form from the reversed process.  ``dF = 0``.
    """
    density = classical_initial_density(p)
    eq0 = equilibrium_density(p, 0.0)
    delta_f = 0.0  # identical partition functions at t = 0 and t = tau

    sums, sq = [], []
    for index, size in _chunks(n_samples):
        W = _chunk_work(p, density, seed, index, size)
        e = np.exp(-p.beta * (W - delta_f))
        sums.append(e.sum())
        sq.append((e**2).sum())
    n = float(n_samples)
    lhs = math.fsum(sums) / n
    var = max(math.fsum(sq) / n - lhs**2, 0.0)
    stderr = math.sqrt(var / (n - 1))
    if stderr > 0.1 * abs(lhs):
        warnings.warn(f"relative standard error {stderr / abs(lhs):.2f} exceeds 10%; "
                      "increase n_samples", RuntimeWarning, stacklevel=2)

    # p(z,0)/p_eq(z,0) = exp(b.z - c) since both share the covariance C
    C = eq0.covariance
    Cinv = np.linalg.inv(C)
    mu = np.array([density.mean.x, density.mean.p])
    mu_eq = np.array([eq0.mean.x, eq0.mean.p])
    b = Cinv @ (mu - mu_eq)
    c = 0.5 * (mu @ Cinv @ mu - mu_eq @ Cinv @ mu_eq)
    mean_R, cov_R = _reverse_final_density(p)
    flip = np.diag([1.0, -1.0])  # p_R evaluated at (x, -p)
    m_f, S_f = flip @ mean_R, flip @ cov_R @ flip
    rhs = math.exp(b @ m_f + 0.5 * b @ S_f @ b - c)
    return JarzynskiReport("CLASSICAL", lhs, rhs, delta_f, abs(lhs - rhs), stderr=stderr)
