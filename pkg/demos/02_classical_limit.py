"""How the quantum characteristic functions approach the classical one.

Scans ``hbar`` at fixed ``beta, m, omega, u, tau', tau`` and fits a
polynomial in ``hbar``.  The zeroth-order coefficient reproduces the classical
characteristic function, the first order vanishes and the second order
differs between FCS and MH when the initial state carries coherence.

Pass ``--fock`` to use exact Fock-space computations instead of the Gaussian
closed form (slower, about half a minute).
"""

import sys

import numpy as np

from qcwork.classical import cf_classical_closed
from qcwork.operators import DriveProtocol
from qcwork.semiclassical import default_hbar_ladder, hbar_scan_many, phi2_compare

method = "fock" if "--fock" in sys.argv else "gaussian"
p = DriveProtocol.fig1()
etas = np.array([0.25, 0.5, 1.0])
print(f"hbar ladder ({method}):", np.round(default_hbar_ladder(p), 4))

scans = hbar_scan_many(etas, p, method=method)
classical = cf_classical_closed(etas, p).values
print("\neta   def  |Phi0 - classical|/|classical|  |c1|/|c0|   fit residual")
for d in ("FCS", "MH"):
    for r, c in zip(scans[d], classical):
        print(f"{r.eta:4.2f}  {d:3s}  {abs(r.phi(0) - c) / abs(c):30.2e}  "
              f"{abs(r.c1) / abs(r.c0):9.2e}  {r.residual:.2e}")

print("\nsecond order, with and without initial coherence")
for label, q in (("tau'=1", p), ("tau'=0", p.replace(tau_prime=0.0))):
    cmp = phi2_compare([1.0, 2.0], q, method=method)
    for j, e in enumerate(cmp.eta):
        print(f"{label}  eta={e:3.1f}  FCS {cmp.phi2_fcs[j]:.5f}  MH {cmp.phi2_mh[j]:.5f}  "
              f"|diff|/sigma {abs(cmp.difference[j]) / cmp.combined_sigma[j]:8.1f}")
