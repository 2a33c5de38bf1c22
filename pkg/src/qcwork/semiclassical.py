"""Planck-constant expansion of the FCS and MH characteristic functions.

Two independent evaluators of ``Phi(eta; hbar)`` are provided:

* ``fock``: exact operator computation in a truncated number basis,
* ``gaussian``: a closed form.  Every operator in the trace is a displacement
  or a power of ``q**N``, so the trace collapses to one Gaussian.  The result
  is analytic in complex ``hbar``, which gives the Taylor coefficients through
  a contour integral (``hbar_taylor``).

The ``hbar_scan`` extracts the same coefficients from real-``hbar`` samples by
polynomial least squares, as one would for a model without a closed form.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .classical import PhasePoint, cf_classical_closed
from .errors import ScanInvalidError
from .operators import (
    DriveProtocol,
    auto_dimension,
    build_hamiltonian,
    displaced_thermal,
    evolve,
)
from .workstats import quasi_distribution, spectral_setup

__all__ = [
    "WignerKirkwoodTerm",
    "wigner_kirkwood_f",
    "weyl_exp_symbol",
    "gaussian_cf",
    "hbar_taylor",
    "expansion_coefficients",
    "HbarScanResult",
    "default_hbar_ladder",
    "scan_dimension",
    "fit_hbar_series",
    "hbar_scan",
    "hbar_scan_many",
    "Phi2Comparison",
    "phi2_compare",
    "Fig1Table",
    "fig1_table",
]

SCAN_DEFINITIONS = ("FCS", "MH")
DEFAULT_DEGREE = 6
DIM_CAP = 1200
RESIDUAL_GATE = 1e-2


# ---------------------------------------------------------------------------
# Wigner-Kirkwood correction


@dataclass(frozen=True)
class WignerKirkwoodTerm:
    eta: float
    z: PhasePoint
    t: float
    value: complex

    def __post_init__(self):
        if self.eta == 0 and self.value != 0:
            raise ValueError("f must vanish at eta = 0")


def wigner_kirkwood_f(eta, z: PhasePoint, t: float, p: DriveProtocol) -> WignerKirkwoodTerm:
    """Second-order coefficient ``f(i eta, z, t)`` of the Weyl symbol of
    ``exp(-i eta H(t))`` for the dragged quadratic well."""
    ie = 1j * eta
    x, mom = float(z.x), float(z.p)
    d2v = p.m * p.omega**2
    dv = d2v * (x - p.u * t)
    value = ie**2 / (8 * p.m) * (d2v - ie / 3 * dv**2 - ie / (3 * p.m) * mom**2 * d2v)
    return WignerKirkwoodTerm(eta, z, t, complex(value))


def weyl_exp_symbol(eta, z: PhasePoint, t: float, p: DriveProtocol, hbar=None) -> complex:
    """Exact Weyl symbol of ``exp(-i eta H(t))``.

    For a (translated) oscillator it is
    ``sec(y) exp(-(2i / hbar w) tan(y) H(z, t))`` with ``y = eta hbar w / 2``.
    """
    hbar = p.hbar if hbar is None else hbar
    y = eta * hbar * p.omega / 2
    H = float(z.p) ** 2 / (2 * p.m) + 0.5 * p.m * p.omega**2 * (float(z.x) - p.u * t) ** 2
    return complex(cmath.exp(-2j / (hbar * p.omega) * cmath.tan(y) * H) / cmath.cos(y))


# ---------------------------------------------------------------------------
# closed form via displacement algebra


class _Chain:
    """Running product ``exp(logc) D(a, abar) exp(-S N)`` of displacements
    ``D(a, abar) = exp((a a^dagger - abar a) / sqrt(hbar))`` and number-operator
    exponentials.  Displacement amplitudes are stored multiplied by
    ``sqrt(hbar)`` so only the composition phases carry ``1/hbar``.
    """

    def __init__(self, hbar):
        self.hbar = hbar
        self.logc = 0j
        self.a = 0j
        self.abar = 0j
        self.S = 0j

    def disp(self, b, bbar):
        # move exp(-S N) to the right: E(S) D(b, bbar) = D(b e^-S, bbar e^S) E(S)
        b, bbar = b * cmath.exp(-self.S), bbar * cmath.exp(self.S)
        self.logc += (self.a * bbar - self.abar * b) / (2 * self.hbar)
        self.a += b
        self.abar += bbar
        return self

    def number(self, s):
        self.S += s
        return self

    def log_trace(self):
        """``log Tr`` up to the ``1 / (1 - e^-S)`` prefactor."""
        return self.logc - self.a * self.abar / (2 * self.hbar) / cmath.tanh(self.S / 2)


def _amplitude(x, mom, p):
    """Scaled amplitude ``alpha sqrt(hbar)`` of a translation by ``(x, p)``."""
    mw = p.m * p.omega
    return complex(x * math.sqrt(mw / 2), mom / math.sqrt(2 * mw))


def _propagator_shift(p):
    """Displacement ``(x, p)`` of the interaction-picture propagator on ``[0, tau]``."""
    w, u, T = p.omega, p.u, p.tau
    int_cos = u * (T * math.sin(w * T) / w + (math.cos(w * T) - 1) / w**2)
    int_sin = u * (-T * math.cos(w * T) / w + math.sin(w * T) / w**2)
    A = -p.m * w**2 * int_cos
    B = -w * int_sin
    return B, -A


def _log_gaussian_cf(eta, p, definition, hbar):
    w = p.omega
    s = 0.5j * eta * hbar * w
    zeta = _amplitude(*p.initial_center, p)
    gamma = _amplitude(*_propagator_shift(p), p)
    d = _amplitude(p.u * p.tau, 0.0, p)
    bw = p.beta * hbar * w

    def chain(left, right):
        c = _Chain(hbar)
        c.disp(d, d.conjugate()).number(-2 * s).disp(-d, -d.conjugate())
        c.number(1j * w * p.tau).disp(gamma, gamma.conjugate())
        c.disp(*left).number(bw + 2 * s).disp(*right)
        c.disp(-gamma, -gamma.conjugate()).number(-1j * w * p.tau)
        return c.log_trace()

    zc = zeta.conjugate()
    if definition == "FCS":
        es, ems = cmath.exp(s), cmath.exp(-s)
        return [chain((zeta * ems, zc * es), (-zeta * es, -zc * ems))]
    e2, em2 = cmath.exp(2 * s), cmath.exp(-2 * s)
    return [chain((zeta * em2, zc * e2), (-zeta, -zc)),
            chain((zeta, zc), (-zeta * e2, -zc * em2))]


def gaussian_cf(etas, p: DriveProtocol, definition: str, hbar=None) -> np.ndarray:
    """Closed-form FCS or MH characteristic function of the dragged oscillator.

    ``hbar`` defaults to the protocol value and may be complex; ``etas`` may be
    complex as well.  The initial state is the displaced Gibbs state of
    ``displaced_thermal`` with the same temperature.
    """
    definition = definition.upper()
    if definition not in SCAN_DEFINITIONS:
        raise ValueError("closed form available for FCS and MH only")
    hbar = p.hbar if hbar is None else hbar
    eta = np.atleast_1d(np.asarray(etas))
    out = np.empty(eta.shape, dtype=complex)
    for i, e in enumerate(eta.ravel()):
        logs = _log_gaussian_cf(complex(e), p, definition, complex(hbar))
        out.flat[i] = sum(cmath.exp(v) for v in logs) / len(logs)
    return out


def hbar_taylor(etas, p: DriveProtocol, definition: str, order: int = 4,
                radius: float = 0.5, points: int = 64) -> np.ndarray:
    """Taylor coefficients ``c_k`` of ``Phi(eta; hbar) = sum_k c_k hbar^k``.

    Evaluated by the trapezoidal rule on the circle ``|hbar| = radius``, which
    is spectrally accurate for a function analytic in a larger disc (the
    nearest singularity sits at ``|hbar| = 2 pi / (beta w)``).

    Returns an array of shape ``(order + 1, len(etas))``.
    """
    if not 0 < radius < 2 * math.pi / (p.beta * p.omega):
        raise ValueError("radius must stay inside the disc of analyticity")
    theta = 2 * np.pi * np.arange(points) / points
    hs = radius * np.exp(1j * theta)
    eta = np.atleast_1d(np.asarray(etas, dtype=float))
    vals = np.array([gaussian_cf(eta, p, definition, hbar=h) for h in hs])
    coeffs = np.fft.fft(vals, axis=0) / points
    scale = radius ** np.arange(order + 1)
    return coeffs[: order + 1] / scale[:, None]


def expansion_coefficients(c) -> dict:
    """Map power-series coefficients in ``hbar`` to the coefficients of
    ``(i hbar)^k``: ``Phi0 = c0``, ``Phi1 = c1 / i``, ``Phi2 = -c2``."""
    c = np.asarray(c)
    return {k: c[k] / (1j) ** k for k in range(min(len(c), 5))}


# ---------------------------------------------------------------------------
# hbar scans


def default_hbar_ladder(p: DriveProtocol, count: int = 10, ratio: float = 0.8) -> np.ndarray:
    """Geometric ladder ``0.8 hbar_p ratio**k`` for ``k < count``, descending."""
    return 0.8 * p.hbar * ratio ** np.arange(count)


def scan_dimension(p: DriveProtocol, hbar: float, cap: int = DIM_CAP) -> int:
    """Fock dimension used at ``hbar``: ``ceil(80 / hbar)`` or the adaptive
    ``auto_dimension`` if larger, capped at ``cap``."""
    ph = p.replace(hbar=hbar)
    return min(cap, max(int(math.ceil(80.0 / hbar)), auto_dimension(ph, cap=cap)))


def _fock_values(ph, etas, definitions, dim, steps):
    rho = displaced_thermal(ph, dim)
    H0 = build_hamiltonian(ph, 0.0, dim)
    Ht = build_hamiltonian(ph, ph.tau, dim)
    U = evolve(ph, 0.0, ph.tau, dim, steps=steps)
    setup = spectral_setup(rho, H0, Ht, U)
    return {d: quasi_distribution(rho, H0, Ht, U, d, setup=setup).characteristic(etas).values
            for d in definitions}


def _sample_table(etas, p, definitions, hbars, method, dim, steps):
    """Characteristic-function samples of shape ``(len(hbars), len(etas))``
    per definition."""
    out = {d: np.empty((len(hbars), len(etas)), dtype=complex) for d in definitions}
    dims = []
    for i, h in enumerate(hbars):
        ph = p.replace(hbar=float(h))
        if method == "gaussian":
            dims.append(0)
            for d in definitions:
                out[d][i] = gaussian_cf(etas, ph, d)
            continue
        N = dim(h) if callable(dim) else (scan_dimension(p, h) if dim is None else int(dim))
        dims.append(N)
        vals = _fock_values(ph, etas, definitions, N, steps)
        for d in definitions:
            out[d][i] = vals[d]
    return out, dims


def fit_hbar_series(hbars, values, degree: int):
    """Least-squares polynomial in ``hbar`` fitted separately to the real and
    imaginary parts.

    Returns ``(coefficients, sigma, residual)`` where ``sigma`` combines the
    OLS standard error with the change of each coefficient when the degree is
    raised by one (a truncation-bias estimate; zero if no spare point exists).
    """
    h = np.asarray(hbars, float)
    v = np.asarray(values, complex)
    n = h.size

    def ols(deg):
        V = np.vander(h, deg + 1, increasing=True)
        coef, *_ = np.linalg.lstsq(V, np.column_stack([v.real, v.imag]), rcond=None)
        resid = V @ coef - np.column_stack([v.real, v.imag])
        dof = n - deg - 1
        if dof > 0:
            s2 = (resid**2).sum(axis=0) / dof
            cov = np.linalg.pinv(V.T @ V)
            se = np.sqrt(np.outer(np.diag(cov), s2).sum(axis=1))
        else:
            se = np.zeros(deg + 1)
        return coef[:, 0] + 1j * coef[:, 1], se, float(np.abs(resid[:, 0] + 1j * resid[:, 1]).max())

    coef, se, residual = ols(degree)
    nested = np.zeros(degree + 1)
    if n >= degree + 3:
        upper, _, _ = ols(degree + 1)
        nested = np.abs(upper[: degree + 1] - coef)
    return coef, np.sqrt(se**2 + nested**2), residual


@dataclass
class HbarScanResult:
    """Polynomial fit ``Phi(eta; hbar) ~ sum_k c_k hbar^k`` at one ``eta``."""

    eta: float
    definition: str
    hbars: np.ndarray
    samples: np.ndarray
    coefficients: np.ndarray
    uncertainties: np.ndarray
    residual: float
    degree: int
    dims: list = field(default_factory=list)

    @property
    def c0(self) -> complex:
        return complex(self.coefficients[0])

    @property
    def c1(self) -> complex:
        return complex(self.coefficients[1])

    @property
    def c2(self) -> complex:
        return complex(self.coefficients[2])

    def phi(self, order: int) -> complex:
        """Coefficient of ``(i hbar)^order``."""
        return complex(self.coefficients[order] / (1j) ** order)

    def sigma(self, order: int) -> float:
        return float(self.uncertainties[order])

    @property
    def relative_residual(self) -> float:
        return self.residual / abs(self.c0) if self.c0 != 0 else math.inf

    def gate_ok(self, floor: float = 0.0) -> bool:
        return self.residual < RESIDUAL_GATE * max(abs(self.c0), floor)


def _check_ladder(hbars, p, degree):
    h = np.asarray(hbars, float)
    if np.unique(h).size < 4:
        raise ValueError("need at least 4 distinct hbar values")
    if np.any(np.diff(h) >= 0):
        raise ValueError("hbar ladder must be strictly descending")
    if h[0] > p.hbar * (1 + 1e-12) or h[-1] <= 0:
        raise ValueError("hbar values must lie in (0, protocol hbar]")
    if not 3 <= degree <= h.size - 1:
        raise ValueError(f"degree must lie in [3, {h.size - 1}]")
    return h


def hbar_scan_many(etas, p: DriveProtocol, definitions=SCAN_DEFINITIONS, hbars=None,
                   degree: int = DEFAULT_DEGREE, dim=None, steps=None, method: str = "fock",
                   gate_floor: float = 0.0) -> dict:
    """Run ``hbar`` scans for several ``eta`` values and definitions, sharing
    one operator computation per ``hbar``.

    Parameters
    ----------
    dim : None, int or callable
        Fock dimension policy; ``None`` uses ``scan_dimension``.
    method : {"fock", "gaussian"}
        Sample evaluator.
    gate_floor : float
        The fit is accepted when ``residual < 1e-2 max(|c0|, gate_floor)``.

    Returns
    -------
    dict
        ``{definition: [HbarScanResult per eta]}``.

    Raises
    ------
    ScanInvalidError
        If any fit fails the residual gate.
    """
    hbars = default_hbar_ladder(p) if hbars is None else hbars
    h = _check_ladder(hbars, p, degree)
    if method not in ("fock", "gaussian"):
        raise ValueError("method must be 'fock' or 'gaussian'")
    defs = [d.upper() for d in definitions]
    eta = np.atleast_1d(np.asarray(etas, float))
    table, dims = _sample_table(eta, p, defs, h, method, dim, steps)
    out = {}
    bad = []
    for d in defs:
        results = []
        for j, e in enumerate(eta):
            coef, sig, res = fit_hbar_series(h, table[d][:, j], degree)
            r = HbarScanResult(float(e), d, h.copy(), table[d][:, j].copy(), coef, sig, res,
                               degree, list(dims))
            if not r.gate_ok(gate_floor):
                bad.append(f"{d} eta={e:g}: residual {res:.2e}, |c0| {abs(r.c0):.2e}")
            results.append(r)
        out[d] = results
    if bad:
        raise ScanInvalidError("hbar fit residual gate violated: " + "; ".join(bad))
    return out


def hbar_scan(eta: float, p: DriveProtocol, definition: str, hbars=None,
              degree: int = DEFAULT_DEGREE, dim=None, steps=None,
              method: str = "fock") -> HbarScanResult:
    """Fit the ``hbar`` dependence of one characteristic-function value.

    ``beta, m, omega, u, tau', tau`` stay fixed while ``hbar`` runs over the
    ladder; the Fock dimension grows as ``1 / hbar``.
    """
    return hbar_scan_many([eta], p, [definition], hbars, degree, dim, steps, method)[
        definition.upper()][0]


@dataclass
class Phi2Comparison:
    eta: np.ndarray
    phi2_fcs: np.ndarray
    phi2_mh: np.ndarray
    sigma_fcs: np.ndarray
    sigma_mh: np.ndarray

    @property
    def difference(self) -> np.ndarray:
        return self.phi2_fcs - self.phi2_mh

    @property
    def combined_sigma(self) -> np.ndarray:
        return np.hypot(self.sigma_fcs, self.sigma_mh)

    @property
    def significant(self) -> np.ndarray:
        """``|difference| > 3 x combined uncertainty``."""
        return np.abs(self.difference) > 3 * self.combined_sigma


def phi2_compare(etas, p: DriveProtocol, **scan_kw) -> Phi2Comparison:
    """Second-order coefficients of FCS and MH side by side."""
    scans = hbar_scan_many(etas, p, SCAN_DEFINITIONS, **scan_kw)
    F, M = scans["FCS"], scans["MH"]
    return Phi2Comparison(
        np.array([r.eta for r in F]),
        np.array([r.phi(2) for r in F]),
        np.array([r.phi(2) for r in M]),
        np.array([r.sigma(2) for r in F]),
        np.array([r.sigma(2) for r in M]),
    )


FIG1_GATE_FLOOR = 1e-3
FIG1_SERIES = ("classical", "phi0_fcs", "phi0_mh", "fcs_order2", "mh_order2")


@dataclass
class Fig1Table:
    """Five complex series on a common ``eta`` grid."""

    eta: np.ndarray
    series: dict
    residual: np.ndarray
    hbar: float

    def real(self) -> dict:
        return {k: v.real for k, v in self.series.items()}

    def imag(self) -> dict:
        return {k: v.imag for k, v in self.series.items()}


def fig1_table(p: DriveProtocol | None = None, etas=None, **scan_kw) -> Fig1Table:
    """Classical characteristic function, the zeroth order of FCS and MH, and
    ``Phi0 + (i hbar)^2 Phi2`` for each definition at the protocol ``hbar``.

    The residual gate is applied against ``max(|c0|, 1e-3)``: where the
    characteristic function has decayed below a thousandth of its value at
    ``eta = 0`` the fit is judged on the scale of the curve, not of ``|c0|``.
    """
    p = DriveProtocol.fig1() if p is None else p
    eta = np.linspace(-4.0, 4.0, 161) if etas is None else np.asarray(etas, float)
    scan_kw.setdefault("gate_floor", FIG1_GATE_FLOOR)
    scans = hbar_scan_many(eta, p, SCAN_DEFINITIONS, **scan_kw)
    h2 = p.hbar**2
    series = {"classical": cf_classical_closed(eta, p).values}
    for d, key in (("FCS", "fcs"), ("MH", "mh")):
        res = scans[d]
        series[f"phi0_{key}"] = np.array([r.phi(0) for r in res])
        series[f"{key}_order2"] = np.array([r.phi(0) - h2 * r.phi(2) for r in res])
    residual = np.array([max(a.residual, b.residual) for a, b in zip(scans["FCS"], scans["MH"])])
    return Fig1Table(eta, {k: series[k] for k in FIG1_SERIES}, residual, p.hbar)
