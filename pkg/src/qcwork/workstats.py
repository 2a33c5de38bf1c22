"""Work characteristic functions, quasi-distributions and Jarzynski equalities.

Three operator orderings of the initial phase factor are supported:

* ``TPM``: a projective energy measurement at ``t = 0`` (the state is dephased
  in the eigenbasis of ``H(0)`` first),
* ``FCS``: the symmetric splitting ``e^{-i eta H0/2} rho e^{-i eta H0/2}``,
* ``MH``: the Jordan product ``(e^{-i eta H0} rho + rho e^{-i eta H0}) / 2``.

Everything is evaluated in the eigenbases of ``H(0)`` and ``H(tau)``; with
``Ut = V_tau^dagger U V_0`` and ``r = V_0^dagger rho V_0`` each characteristic
function is a sum over index triples ``(m, n, k)``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConsistencyError, InvalidDimensionError, TruncationError
from .operators import (
    DensityMatrix,
    DriveProtocol,
    FockOperator,
    _mat,
    build_hamiltonian,
    evolve,
    partition_function,
    spectrum,
    tail_population,
    thermal_state,
)

__all__ = [
    "DEFINITIONS",
    "CharacteristicSamples",
    "WorkQuasiDistribution",
    "JarzynskiReport",
    "SpectralSetup",
    "spectral_setup",
    "characteristic",
    "cf_tpm",
    "cf_fcs",
    "cf_mh",
    "quasi_distribution",
    "moments_from_cf",
    "energy_change",
    "reverse_final_state",
    "jarzynski_dimension",
    "jarzynski_check",
    "default_eta_grid",
]

DEFINITIONS = ("TPM", "FCS", "MH")
_TAGS = DEFINITIONS + ("CLASSICAL",)
CF_TOL = 1e-10
IMAG_RAISE_TOL = 1e-8
EQ_POPULATION_FLOOR = 1e-14


def default_eta_grid(eta_min=-4.0, eta_max=4.0, count=161) -> np.ndarray:
    return np.linspace(eta_min, eta_max, count)


def _check_tag(definition):
    tag = str(definition).upper()
    if tag not in _TAGS:
        raise ValueError(f"unknown work definition {definition!r}; expected one of {_TAGS}")
    return tag


@dataclass
class CharacteristicSamples:
    """Values of a work characteristic function on a grid of counting fields.

    With ``validate`` the normalization ``Phi(0) = 1`` and the symmetry
    ``Phi(-eta) = conj Phi(eta)`` are checked wherever the grid allows.
    """

    definition: str
    etas: np.ndarray
    values: np.ndarray
    validate: dataclasses.InitVar[bool] = True

    def __post_init__(self, validate):
        self.definition = _check_tag(self.definition)
        self.etas = np.atleast_1d(np.asarray(self.etas))
        self.values = np.atleast_1d(np.asarray(self.values, dtype=complex))
        if self.etas.shape != self.values.shape:
            raise InvalidDimensionError("eta grid and values differ in length")
        if validate:
            self._validate()

    def _validate(self):
        eta = np.asarray(self.etas, float)
        zero = np.abs(eta) < 1e-15
        if zero.any():
            dev = np.abs(self.values[zero] - 1).max()
            if dev > CF_TOL:
                raise ConsistencyError(f"{self.definition}: Phi(0) differs from 1 by {dev:.2e}")
        lookup = {float(e): v for e, v in zip(eta, self.values)}
        dev = max((abs(lookup[-e] - np.conj(v)) for e, v in lookup.items() if -e in lookup),
                  default=0.0)
        if dev > CF_TOL:
            raise ConsistencyError(f"{self.definition}: conjugate symmetry broken by {dev:.2e}")

    def max_deviation(self, other: "CharacteristicSamples") -> float:
        if not np.array_equal(self.etas, other.etas):
            raise ValueError("grids differ")
        return float(np.abs(self.values - other.values).max())


@dataclass
class WorkQuasiDistribution:
    """Real weights on a discrete work support (may be negative)."""

    definition: str
    support: np.ndarray
    weights: np.ndarray
    merge_tol: float
    imag_residual: float = 0.0

    def __post_init__(self):
        self.definition = _check_tag(self.definition)
        order = np.argsort(self.support, kind="stable")
        self.support = np.asarray(self.support, float)[order]
        self.weights = np.asarray(self.weights, float)[order]
        total = math.fsum(self.weights)
        if abs(total - 1.0) > 1e-10:
            raise ConsistencyError(f"{self.definition} weights sum to {total!r}")
        if self.definition == "TPM" and self.weights.min() < -1e-12:
            raise ConsistencyError(f"negative TPM weight {self.weights.min():.2e}")

    @property
    def total(self) -> float:
        return math.fsum(self.weights)

    @property
    def min_weight(self) -> float:
        return float(self.weights.min())

    @property
    def negativity_count(self) -> int:
        return int((self.weights < -1e-12).sum())

    def characteristic(self, etas) -> CharacteristicSamples:
        """Resummed ``sum_j w_j exp(i eta W_j)``."""
        eta = np.asarray(etas)
        values = np.exp(1j * np.multiply.outer(eta, self.support)) @ self.weights
        return CharacteristicSamples(self.definition, eta, values, validate=np.isrealobj(eta))

    def moment(self, k: int) -> float:
        return math.fsum(self.weights * self.support**k)

    def exp_average(self, s: float) -> float:
        """``sum_j w_j exp(-s W_j)``."""
        return math.fsum(self.weights * np.exp(-s * self.support))


@dataclass
class JarzynskiReport:
    definition: str
    lhs: float
    rhs: float
    delta_f: float
    discrepancy: float
    stderr: float | None = None
    truncation_tail: float | None = None

    def __post_init__(self):
        self.discrepancy = abs(self.lhs - self.rhs)

    def passed(self, tol: float = 1e-8, sigmas: float = 3.0) -> bool:
        """Within ``sigmas`` standard errors for Monte Carlo reports, else ``tol``."""
        if self.stderr is not None:
            return self.discrepancy <= sigmas * self.stderr
        return self.discrepancy <= tol


@dataclass
class SpectralSetup:
    """Eigen-data shared by all definitions for one ``(rho, H0, Htau, U)``."""

    e0: np.ndarray
    et: np.ndarray
    ut: np.ndarray  # V_tau^dagger U V_0
    r: np.ndarray   # V_0^dagger rho V_0
    v0: np.ndarray

    @property
    def dim(self) -> int:
        return self.e0.size

    @property
    def spacing(self) -> float:
        """Typical gap between the lowest levels of ``H(0)``."""
        return float(np.median(np.diff(self.e0[: max(3, self.dim // 4)])))


def spectral_setup(rho0, H0, Htau, U) -> SpectralSetup:
    mats = [_mat(a) for a in (rho0, H0, Htau, U)]
    shapes = {m.shape for m in mats}
    if len(shapes) != 1 or mats[0].ndim != 2:
        raise InvalidDimensionError(f"operator shapes disagree: {sorted(shapes)}")
    rho, h0, ht, u = mats
    s0, st = spectrum(h0), spectrum(ht)
    ut = st.vectors.conj().T @ u @ s0.vectors
    r = s0.vectors.conj().T @ rho @ s0.vectors
    return SpectralSetup(s0.values, st.values, ut, 0.5 * (r + r.conj().T), s0.vectors)


def _phi_from_inner(setup, eta, inner):
    """``sum_m e^{i eta E_m(tau)} [Ut A Ut^dagger]_mm`` for the inner matrix A."""
    diag = ((setup.ut @ inner) * setup.ut.conj()).sum(axis=1)
    return np.exp(1j * eta * setup.et) @ diag


def _inner(setup, definition, eta):
    e0, r = setup.e0, setup.r
    if definition == "TPM":
        return np.diag(np.exp(-1j * eta * e0) * r.diagonal())
    if definition == "FCS":
        half = np.exp(-0.5j * eta * e0)
        return half[:, None] * r * half[None, :]
    ph = np.exp(-1j * eta * e0)
    return 0.5 * (ph[:, None] + ph[None, :]) * r


def characteristic(setup: SpectralSetup, definition: str, etas) -> CharacteristicSamples:
    """Direct triple-sum evaluation; ``etas`` may be complex."""
    tag = _check_tag(definition)
    if tag == "CLASSICAL":
        raise ValueError("use classical.cf_classical_closed for the classical CF")
    eta = np.atleast_1d(np.asarray(etas))
    values = np.array([_phi_from_inner(setup, e, _inner(setup, tag, e)) for e in eta])
    return CharacteristicSamples(tag, eta, values, validate=np.isrealobj(eta))


def cf_tpm(rho0, H0, Htau, U, etas) -> CharacteristicSamples:
    """Two-point-measurement characteristic function.

    The first energy measurement removes the coherences of ``rho0``, so for a
    state commuting with ``H0`` this is the plain trace formula.
    """
    return characteristic(spectral_setup(rho0, H0, Htau, U), "TPM", etas)


def cf_fcs(rho0, H0, Htau, U, etas) -> CharacteristicSamples:
    """Full-counting-statistics characteristic function."""
    return characteristic(spectral_setup(rho0, H0, Htau, U), "FCS", etas)


def cf_mh(rho0, H0, Htau, U, etas) -> CharacteristicSamples:
    """Margenau-Hill characteristic function."""
    return characteristic(spectral_setup(rho0, H0, Htau, U), "MH", etas)


def _cluster(values, tol):
    """Labels grouping sorted neighbours closer than ``tol``; returns
    ``(labels, representative values)``."""
    order = np.argsort(values, kind="stable")
    sv = values[order]
    starts = np.concatenate([[True], np.diff(sv) > tol])
    group = np.cumsum(starts) - 1
    labels = np.empty_like(group)
    labels[order] = group
    reps = sv[starts]
    return labels, reps


def _merge(support, weights_re, weights_im, tol):
    labels, reps = _cluster(support, tol)
    n = reps.size
    return (reps,
            np.bincount(labels, weights=weights_re, minlength=n),
            np.bincount(labels, weights=weights_im, minlength=n))


def quasi_distribution(rho0, H0, Htau, U, definition: str, merge_tol: float | None = None,
                       setup: SpectralSetup | None = None) -> WorkQuasiDistribution:
    """Enumerate the work quasi-distribution on its discrete support.

    Support points closer than ``merge_tol`` (default ``1e-6`` times the level
    spacing of ``H0``) are merged.  Complex contributions are accumulated and
    the imaginary remainder after pairing is reported; above ``1e-8`` it is an
    internal inconsistency.
    """
    tag = _check_tag(definition)
    if setup is None:
        setup = spectral_setup(rho0, H0, Htau, U)
    spacing = setup.spacing
    tol = 1e-6 * spacing if merge_tol is None else float(merge_tol)
    if not 0 < tol < spacing / 10:
        raise ValueError(f"merge_tol must lie in (0, {spacing / 10:g})")
    ut, r, e0, et = setup.ut, setup.r, setup.e0, setup.et
    N = setup.dim

    if tag == "TPM":
        w = np.abs(ut) ** 2 * r.diagonal()[None, :]
        W = et[:, None] - e0[None, :]
        support, wr, wi = _merge(W.ravel(), w.real.ravel(), w.imag.ravel(), tol)
    elif tag == "MH":
        G = ut * (r @ ut.conj().T).T
        w = 0.5 * (G + G.conj())
        W = et[:, None] - e0[None, :]
        support, wr, wi = _merge(W.ravel(), w.real.ravel(), w.imag.ravel(), tol)
    elif tag == "FCS":
        labels, half = _cluster((0.5 * (e0[:, None] + e0[None, :])).ravel(), tol)
        J = half.size
        acc = np.empty((N, J), dtype=complex)
        flat_r = r.ravel()
        for m in range(N):
            T = (ut[m][:, None] * ut[m].conj()[None, :]).ravel() * flat_r
            acc[m] = (np.bincount(labels, weights=T.real, minlength=J)
                      + 1j * np.bincount(labels, weights=T.imag, minlength=J))
        W = et[:, None] - half[None, :]
        support, wr, wi = _merge(W.ravel(), acc.real.ravel(), acc.imag.ravel(), tol)
    else:
        raise ValueError("the classical work distribution is continuous")

    residual = float(np.abs(wi).max()) if wi.size else 0.0
    if residual > IMAG_RAISE_TOL:
        raise ConsistencyError(f"{tag}: imaginary weight residual {residual:.2e} after pairing")
    return WorkQuasiDistribution(tag, support, wr, tol, residual)


def moments_from_cf(func: Callable, orders=(1, 2, 3), radius: float = 0.05, points: int = 64):
    """Raw moments ``<W^k> = (-i)^k Phi^(k)(0)`` from Cauchy contour integration.

    ``func`` maps an array of complex ``eta`` to complex values and must be
    analytic near the origin.
    """
    theta = 2 * np.pi * np.arange(points) / points
    z = radius * np.exp(1j * theta)
    coeffs = np.fft.fft(np.asarray(func(z), dtype=complex)) / points
    out = {}
    for k in orders:
        deriv = coeffs[k] * math.factorial(k) / radius**k
        out[k] = ((-1j) ** k * deriv)
    return out


def energy_change(rho0, H0, Htau, U) -> float:
    """``Tr[H(tau) U rho U^dagger] - Tr[H(0) rho]``."""
    rho, u = _mat(rho0), _mat(U)
    rho_t = u @ rho @ u.conj().T
    return float(np.real(np.trace(_mat(Htau) @ rho_t) - np.trace(_mat(H0) @ rho)))


def reverse_final_state(p: DriveProtocol, dim: int, steps=None,
                        check_tail: bool = True) -> DensityMatrix:
    """Final state of the time-reversed process, momentum-flipped.

    The Gibbs state of ``H(tau)`` evolves under ``H(tau - t)`` for a time
    ``tau``; complex conjugation in the number basis then plays the role of
    ``p -> -p`` since the oscillator eigenfunctions are real.
    """
    rho_eq = thermal_state(p, p.tau, dim, check_tail=check_tail).matrix
    UR = evolve(p, 0.0, p.tau, dim, steps=steps, reverse=True).matrix
    rho = UR @ rho_eq @ UR.conj().T
    return DensityMatrix(rho.conj())


def jarzynski_dimension(p: DriveProtocol) -> int:
    """Largest Fock dimension whose thermal populations stay above the
    ``1e-14`` floor needed to invert ``rho_eq(0)``."""
    x = p.beta * p.hbar * p.omega
    # top level n = N - 1 has population (1 - e^{-x}) e^{-x n}
    return max(2, int(math.floor(math.log(-math.expm1(-x) / EQ_POPULATION_FLOOR) / x)) + 1)


def _free_energy_change(p, dim):
    z0 = partition_function(p, 0.0, dim)
    zt = partition_function(p, p.tau, dim)
    return -math.log(zt / z0) / p.beta


def jarzynski_check(rho0, p: DriveProtocol, definition: str, dim: int | None = None,
                    steps=None) -> JarzynskiReport:
    """Generalized Jarzynski equality for an arbitrary initial state.

    The left side is the quasi-average of ``exp(-beta (W - dF))`` over the
    enumerated work distribution.  The right side is built from the reversed
    process in the eigenbasis of ``H(0)``:

    * TPM: ``sum_n rhoR_nn rho_nn / rho_eq_nn``,
    * FCS: ``sum_mn rhoR_mn rho_nm / sqrt(rho_eq_mm rho_eq_nn)``,
    * MH: ``Re Tr[rho rhoR rho_eq^{-1}]``.

    Inverting ``rho_eq(0)`` caps the dimension (see ``jarzynski_dimension``),
    which at ``beta hbar omega ~ 1`` is below what the displaced Gibbs state of
    ``H(tau)`` needs for a ``1e-10`` tail.  Both sides are exact in the same
    truncated space, so that state is built without the tail gate and its
    tail population is returned as ``truncation_tail``.
    """
    tag = _check_tag(definition)
    rho = _mat(rho0)
    dim = rho.shape[0] if dim is None else dim
    if rho.shape[0] != dim:
        raise InvalidDimensionError("state dimension differs from dim")
    H0 = build_hamiltonian(p, 0.0, dim)
    Ht = build_hamiltonian(p, p.tau, dim)
    U = evolve(p, 0.0, p.tau, dim, steps=steps)
    delta_f = _free_energy_change(p, dim)

    eq = thermal_state(p, 0.0, dim)
    s0 = spectrum(H0)
    q = np.real(np.diag(s0.vectors.conj().T @ eq.matrix @ s0.vectors))
    if q.min() < EQ_POPULATION_FLOOR:
        raise TruncationError(
            f"equilibrium population {q.min():.1e} < {EQ_POPULATION_FLOOR:g}: inverting "
            f"rho_eq(0) is ill-conditioned; lower beta*hbar*omega or use dim <= "
            f"{jarzynski_dimension(p)}",
            required_dim=jarzynski_dimension(p),
        )

    dist = quasi_distribution(rho, H0, Ht, U, tag)
    lhs = dist.exp_average(p.beta) * math.exp(p.beta * delta_f)

    to0 = lambda a: s0.vectors.conj().T @ a @ s0.vectors  # noqa: E731
    r0 = to0(rho)
    rR_state = reverse_final_state(p, dim, steps=steps, check_tail=False)
    rR = to0(rR_state.matrix)
    tail = tail_population(thermal_state(p, p.tau, dim, check_tail=False))
    if tag == "TPM":
        rhs = math.fsum(np.real(rR.diagonal()) * np.real(r0.diagonal()) / q)
    elif tag == "FCS":
        s = 1 / np.sqrt(q)
        rhs = float(np.real(np.sum(rR * r0.T * s[:, None] * s[None, :])))
    else:
        rhs = float(np.real(np.trace(r0 @ rR @ np.diag(1 / q))))
    return JarzynskiReport(tag, lhs, rhs, delta_f, abs(lhs - rhs), truncation_tail=tail)
