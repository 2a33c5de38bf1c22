"""Truncated Fock-space linear algebra for the linearly dragged harmonic oscillator.

All matrices live in the number basis of the static oscillator
``p^2/2m + m w^2 x^2 / 2`` (the Hamiltonian at ``t = 0``, where the well sits at
the origin).  The driven Hamiltonian is

    H(t) = p^2/2m + m w^2 (x - u t)^2 / 2
         = H_static - m w^2 u t x + m w^2 (u t)^2 / 2,

which is tridiagonal in this basis.  The static part is stored as its exact
diagonal ``hbar w (n + 1/2)`` rather than as ``p @ p / 2m + ...`` built from
truncated quadratures, whose last diagonal entry is wrong by ``hbar w / 2``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .errors import AccuracyError, InvalidDimensionError, TruncationError

__all__ = [
    "DriveProtocol",
    "FockOperator",
    "DensityMatrix",
    "Spectrum",
    "build_ladder",
    "quadratures",
    "build_hamiltonian",
    "spectrum",
    "herm_exp",
    "thermal_state",
    "tail_population",
    "displacement",
    "displaced_thermal",
    "propagator",
    "exact_propagator",
    "evolve",
    "propagator_convergence",
    "auto_dimension",
    "partition_function",
    "trace_distance",
]

HERMITIAN_TOL = 1e-12
TAIL_TOL = 1e-10
TAIL_WIDTH = 5


@dataclass(frozen=True)
class DriveProtocol:
    """Physical parameters of the dragged oscillator and its two-stage drive.

    The well is at rest at ``x = -u tau_prime`` until ``t = -tau_prime``,
    then moves with constant speed ``u``.  Work is counted on ``[0, tau]``.
    """

    m: float = 1.0
    omega: float = 1.0
    u: float = 1.0
    tau_prime: float = 1.0
    tau: float = 2.0
    beta: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        for name in ("m", "omega", "beta", "hbar", "tau"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")
        if not (np.isfinite(self.tau_prime) and self.tau_prime >= 0):
            raise ValueError(f"tau_prime must be finite and >= 0, got {self.tau_prime!r}")
        if not np.isfinite(self.u):
            raise ValueError("u must be finite")

    @classmethod
    def fig1(cls, **overrides) -> "DriveProtocol":
        """beta = u = m = omega = hbar = 1, tau' = 1, tau = 2."""
        return cls(**overrides)

    def replace(self, **changes) -> "DriveProtocol":
        return dataclasses.replace(self, **changes)

    def center(self, t):
        """Position of the well minimum at time ``t``."""
        return self.u * np.asarray(t, dtype=float)

    @property
    def initial_center(self):
        """Phase-space centre ``(x0, p0)`` of the state at ``t = 0``."""
        wt = self.omega * self.tau_prime
        return (-(self.u / self.omega) * math.sin(wt), self.m * self.u * (1.0 - math.cos(wt)))

    def check_time(self, t, slack=1e-12):
        span = slack * max(1.0, self.tau, self.tau_prime)
        if not (-self.tau_prime - span <= t <= self.tau + span):
            raise ValueError(
                f"t={t!r} outside the protocol window [{-self.tau_prime}, {self.tau}]"
            )


@dataclass
class FockOperator:
    """Dense operator in the truncated number basis."""

    matrix: np.ndarray
    hermitian: bool = False

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise InvalidDimensionError(f"operator must be square, got {self.matrix.shape}")
        if self.hermitian:
            scale = max(np.abs(self.matrix).max(), 1e-300)
            dev = np.abs(self.matrix - self.matrix.conj().T).max() / scale
            if dev >= HERMITIAN_TOL:
                raise TypeError(f"operator flagged Hermitian but deviates by {dev:.2e}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def H(self) -> "FockOperator":
        return FockOperator(self.matrix.conj().T, self.hermitian)

    def __matmul__(self, other):
        return FockOperator(self.matrix @ _mat(other))

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)


@dataclass
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite matrix in the number basis."""

    matrix: np.ndarray
    validate: dataclasses.InitVar[bool] = True

    def __post_init__(self, validate):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidDimensionError(f"density matrix must be square, got {m.shape}")
        # remove the anti-Hermitian rounding left by products like D rho D^dagger
        self.matrix = 0.5 * (m + m.conj().T)
        if validate:
            dev = np.abs(m - m.conj().T).max()
            if dev >= HERMITIAN_TOL:
                raise ValueError(f"density matrix not Hermitian (deviation {dev:.2e})")
            tr = np.trace(self.matrix).real
            if abs(tr - 1.0) >= 1e-10:
                raise ValueError(f"density matrix trace {tr!r} differs from 1")
            lowest = np.linalg.eigvalsh(self.matrix)[0]
            if lowest < -1e-10:
                raise ValueError(f"density matrix has eigenvalue {lowest:.2e} < 0")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def populations(self) -> np.ndarray:
        return self.matrix.diagonal().real.copy()

    def expectation(self, op) -> float:
        return float(np.real(np.trace(_mat(op) @ self.matrix)))

    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix, self.matrix)))

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)


@dataclass
class Spectrum:
    """Ascending eigenvalues and the unitary whose columns are eigenvectors."""

    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.conj().T

    def function(self, func) -> np.ndarray:
        """Matrix function ``V f(L) V^dagger``."""
        return (self.vectors * func(self.values)) @ self.vectors.conj().T


def _mat(obj) -> np.ndarray:
    if isinstance(obj, (FockOperator, DensityMatrix)):
        return obj.matrix
    return np.asarray(obj)


def build_ladder(N: int):
    """Annihilation and creation operators truncated to ``N`` levels.

    Only the upper-left ``(N-1) x (N-1)`` block of ``[a, a^dagger]`` equals
    the identity; the last diagonal entry is ``-(N-1)``.
    """
    if int(N) != N or N < 2:
        raise InvalidDimensionError(f"Fock dimension must be an integer >= 2, got {N!r}")
    N = int(N)
    a = np.diag(np.sqrt(np.arange(1, N, dtype=float)), 1)
    return FockOperator(a), FockOperator(a.T.copy())


def quadratures(N: int, p: DriveProtocol):
    """Position and momentum operators ``(x, p)`` in the number basis."""
    a = build_ladder(N)[0].matrix
    x = math.sqrt(p.hbar / (2 * p.m * p.omega)) * (a + a.T)
    mom = 1j * math.sqrt(p.m * p.omega * p.hbar / 2) * (a.T - a)
    return FockOperator(x, hermitian=True), FockOperator(mom, hermitian=True)


def _static_levels(N, p):
    return p.hbar * p.omega * (np.arange(N) + 0.5)


def _tridiagonal(N, p, center):
    """Diagonal and off-diagonal of H for a well centred at ``center``."""
    k = p.m * p.omega**2
    diag = _static_levels(N, p) + 0.5 * k * center**2
    off = -k * center * math.sqrt(p.hbar / (2 * p.m * p.omega)) * np.sqrt(np.arange(1, N))
    return diag, off


def build_hamiltonian(p: DriveProtocol, t: float, dim: int) -> FockOperator:
    """Hamiltonian ``H(t)`` of the dragged well, ``t`` in ``[-tau', tau]``."""
    p.check_time(t)
    if dim < 2:
        raise InvalidDimensionError(f"Fock dimension must be >= 2, got {dim!r}")
    diag, off = _tridiagonal(dim, p, float(p.center(t)))
    H = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    return FockOperator(H, hermitian=True)


def spectrum(op) -> Spectrum:
    A = _mat(op)
    if isinstance(op, FockOperator) and not op.hermitian:
        _require_hermitian(A)
    values, vectors = np.linalg.eigh(A)
    return Spectrum(values, vectors)


def _require_hermitian(A):
    scale = max(np.abs(A).max(), 1e-300)
    if np.abs(A - A.conj().T).max() / scale >= HERMITIAN_TOL:
        raise TypeError("herm_exp requires a Hermitian operator")


def herm_exp(op, scale: complex) -> FockOperator:
    """``exp(scale * A)`` for Hermitian ``A`` via its spectral decomposition."""
    A = _mat(op)
    _require_hermitian(A)
    values, vectors = np.linalg.eigh(A)
    out = (vectors * np.exp(scale * values)) @ vectors.conj().T
    hermitian = np.imag(scale) == 0
    if hermitian:
        out = 0.5 * (out + out.conj().T)
    return FockOperator(out, hermitian=bool(hermitian))


def partition_function(p: DriveProtocol, t: float, dim: int) -> float:
    """Truncated-basis ``Tr exp(-beta H(t))``."""
    diag, off = _tridiagonal(dim, p, float(p.center(t)))
    levels = sla.eigvalsh_tridiagonal(diag, off)
    return float(np.exp(-p.beta * levels).sum())


def _check_tail(rho, what):
    pops = np.abs(rho.diagonal().real)
    tail = pops[-TAIL_WIDTH:].sum()
    if tail >= TAIL_TOL:
        N = rho.shape[0]
        raise TruncationError(
            f"{what}: population {tail:.2e} in the top {TAIL_WIDTH} of {N} levels "
            f"exceeds {TAIL_TOL:g}; need a larger Fock dimension (try dim >= {_grow(N)})",
            required_dim=_grow(N),
        )


def _grow(N):
    return int(math.ceil(1.5 * N)) + 8


def tail_population(rho) -> float:
    """Population of the top ``TAIL_WIDTH`` number states."""
    return float(np.real(np.diag(_mat(rho))[-TAIL_WIDTH:]).sum())


def thermal_state(p: DriveProtocol, t: float, dim: int, check_tail: bool = True) -> DensityMatrix:
    """Gibbs state ``exp(-beta H(t)) / Z`` of the truncated Hamiltonian.

    ``check_tail=False`` skips the truncation gate; callers doing so should
    report ``tail_population`` themselves.
    """
    p.check_time(t)
    diag, off = _tridiagonal(dim, p, float(p.center(t)))
    levels, vectors = sla.eigh_tridiagonal(diag, off)
    weights = np.exp(-p.beta * (levels - levels[0]))
    weights /= weights.sum()
    rho = (vectors * weights) @ vectors.T
    if check_tail:
        _check_tail(rho, f"thermal state at t={t}")
    return DensityMatrix(rho.astype(complex))


def displacement(x0: float, p0: float, dim: int, p: DriveProtocol) -> FockOperator:
    """Phase-space translation ``exp(i (p0 x - x0 p) / hbar)``.

    ``D rho D^dagger`` moves the state centre by ``(x0, p0)``.
    """
    x, mom = quadratures(dim, p)
    gen = p0 * x.matrix - x0 * mom.matrix
    return herm_exp(gen, 1j / p.hbar)


def displaced_thermal(p: DriveProtocol, dim: int, check_tail: bool = True) -> DensityMatrix:
    """State at ``t = 0`` after the first drive stage: a thermal state of
    ``H(0)`` translated to ``(-(u/w) sin w tau', m u (1 - cos w tau'))``."""
    rho_th = thermal_state(p, 0.0, dim, check_tail=check_tail).matrix
    if p.tau_prime == 0 or p.u == 0:
        return DensityMatrix(rho_th)
    x0, p0 = p.initial_center
    D = displacement(x0, p0, dim, p).matrix
    rho = D @ rho_th @ D.conj().T
    if check_tail:
        _check_tail(rho, "displaced thermal state")
    return DensityMatrix(rho)


def _unitarity_defect(U):
    return np.abs(U.conj().T @ U - np.eye(U.shape[0])).max()


def _check_unitary(U, what):
    defect = _unitarity_defect(U)
    if defect > 1e-8:
        raise AccuracyError(f"{what}: unitarity violated by {defect:.2e}")
    return defect


def _center_line(p, reverse):
    """Well centre as ``a + v t``; the reversed drive is ``H(tau - t)``."""
    if reverse:
        return p.u * p.tau, -p.u
    return 0.0, p.u


def propagator(p: DriveProtocol, t0: float, t1: float, steps: int, dim: int,
               reverse: bool = False) -> FockOperator:
    """Time-ordered propagator from ``t0`` to ``t1`` by midpoint time slicing.

    The product of slice exponentials ``exp(-i H(t_k) dt / hbar)`` at slice
    midpoints ``t_k`` converges as ``dt**2``.  With ``reverse=True`` the
    Hamiltonian is ``H(tau - t)`` and times refer to the reversed clock.
    """
    if not t0 < t1:
        raise ValueError(f"need t0 < t1, got {t0}, {t1}")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    a, v = _center_line(p, reverse)
    for t in (t0, t1):
        p.check_time(p.tau - t if reverse else t)
    dt = (t1 - t0) / steps
    U = np.eye(dim, dtype=complex)
    for k in range(steps):
        tk = t0 + (k + 0.5) * dt
        diag, off = _tridiagonal(dim, p, a + v * tk)
        levels, vectors = sla.eigh_tridiagonal(diag, off)
        U = ((vectors * np.exp(-1j * dt / p.hbar * levels)) @ vectors.T) @ U
    _check_unitary(U, f"propagator with {steps} steps")
    return FockOperator(U)


def exact_propagator(p: DriveProtocol, t0: float, t1: float, dim: int,
                     reverse: bool = False) -> FockOperator:
    """Closed-form propagator for a linearly moving quadratic well.

    In the interaction picture of the static oscillator the drive is linear in
    ``x`` and ``p``, so the time-ordered exponential collapses to a single
    displacement; returned up to a global phase, which cancels in every
    ``U rho U^dagger`` expression.
    """
    if not t0 <= t1:
        raise ValueError(f"need t0 <= t1, got {t0}, {t1}")
    for t in (t0, t1):
        p.check_time(p.tau - t if reverse else t)
    a, v = _center_line(p, reverse)
    w = p.omega

    def int_cos(s):  # antiderivative of (a + v s) cos(w s)
        return a * math.sin(w * s) / w + v * (s * math.sin(w * s) / w + math.cos(w * s) / w**2)

    def int_sin(s):  # antiderivative of (a + v s) sin(w s)
        return -a * math.cos(w * s) / w + v * (-s * math.cos(w * s) / w + math.sin(w * s) / w**2)

    A = -p.m * w**2 * (int_cos(t1) - int_cos(t0))
    B = -w * (int_sin(t1) - int_sin(t0))
    x, mom = quadratures(dim, p)
    UI = herm_exp(A * x.matrix + B * mom.matrix, -1j / p.hbar).matrix
    levels = _static_levels(dim, p)
    U = np.exp(-1j * levels * t1 / p.hbar)[:, None] * UI * np.exp(1j * levels * t0 / p.hbar)[None, :]
    _check_unitary(U, "closed-form propagator")
    return FockOperator(U)


def evolve(p: DriveProtocol, t0: float, t1: float, dim: int, steps=None,
           reverse: bool = False) -> FockOperator:
    """Propagator by time slicing when ``steps`` is given, closed form otherwise."""
    if steps is None:
        return exact_propagator(p, t0, t1, dim, reverse=reverse)
    return propagator(p, t0, t1, steps, dim, reverse=reverse)


def propagator_convergence(p: DriveProtocol, t0: float, t1: float, steps: int, dim: int):
    """Richardson diagnostic for the slicing scheme.

    Returns ``(d1, d2, ratio)`` with ``d1 = |U_s - U_2s|``, ``d2 = |U_2s - U_4s|``
    (max norm); a second-order scheme gives ``ratio = d1/d2`` close to 4.
    """
    Us = [propagator(p, t0, t1, k * steps, dim).matrix for k in (1, 2, 4)]
    d1 = np.abs(Us[0] - Us[1]).max()
    d2 = np.abs(Us[1] - Us[2]).max()
    return d1, d2, d1 / d2


def trace_distance(rho, sigma) -> float:
    diff = _mat(rho) - _mat(sigma)
    return 0.5 * float(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))).sum())


def _max_center_radius2(p: DriveProtocol):
    """Largest ``|alpha|^2`` of any state centre met along the protocol."""
    w, m, u = p.omega, p.m, p.u
    x0, p0 = p.initial_center
    t = np.linspace(0.0, p.tau, 129)
    # forward centre trajectory from (x0, p0), see classical.newton_map
    xs = x0 * np.cos(w * t) + p0 / (m * w) * np.sin(w * t) + u * t - u / w * np.sin(w * t)
    ps = -x0 * m * w * np.sin(w * t) + p0 * np.cos(w * t) + m * u * (1 - np.cos(w * t))
    xs = np.concatenate([xs, [-u * p.tau_prime, u * p.tau]])
    ps = np.concatenate([ps, [0.0, 0.0]])
    mw = m * w
    return float(np.max((mw * xs**2 + ps**2 / mw) / (2 * p.hbar)))


def auto_dimension(p: DriveProtocol, cap: int = 2000) -> int:
    """Fock dimension for which every state met along the protocol keeps its
    top-five population below ``1e-10``, with 25% headroom for the
    characteristic-function drift under doubling."""
    alpha2 = _max_center_radius2(p)
    x = p.beta * p.hbar * p.omega
    nbar = 1.0 / math.expm1(x)
    N = max(16, int(nbar + alpha2 + 6 * math.sqrt((nbar + 1) * (alpha2 + nbar + 1))) + 10)
    probe = p.replace(tau_prime=0.0, u=1.0)
    radius = math.sqrt(2 * p.hbar * alpha2 / (p.m * p.omega))
    while N <= cap:
        try:
            D = displacement(radius, 0.0, N, probe).matrix
            rho = D @ thermal_state(probe, 0.0, N).matrix @ D.conj().T
            _check_tail(rho, "probe")
            break
        except TruncationError:
            N = int(N * 1.2) + 4
    else:
        raise TruncationError(f"no Fock dimension <= {cap} meets the tail bound", required_dim=cap)
    return min(cap, int(math.ceil(1.25 * N)))
