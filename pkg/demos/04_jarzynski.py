"""Generalized Jarzynski equality for coherent and thermal initial states.

The left side averages ``exp(-beta (W - dF))`` over each work quasi-distribution;
the right side is built from the time-reversed process.  The classical
version uses Monte Carlo for the left side and a Gaussian integral for the right.
"""

from qcwork.classical import gong_jarzynski_check
from qcwork.operators import DriveProtocol, displaced_thermal
from qcwork.workstats import DEFINITIONS, jarzynski_check, jarzynski_dimension

p = DriveProtocol.fig1()
# rho_eq(0) is inverted, so the dimension stops where populations reach 1e-14
N = jarzynski_dimension(p)
print(f"dimension {N}")
for label, q in (("coherent", p), ("thermal", p.replace(tau_prime=0.0))):
    rho = displaced_thermal(q, N, check_tail=False)
    for d in DEFINITIONS:
        r = jarzynski_check(rho, q, d)
        print(f"{label:8s} {d:3s} lhs {r.lhs:.10f} rhs {r.rhs:.10f} |diff| {r.discrepancy:.1e} "
              f"tail {r.truncation_tail:.1e}")

g = gong_jarzynski_check(p, n_samples=200_000, seed=1)
print(f"classical  lhs {g.lhs:.4f} +- {g.stderr:.4f}  rhs {g.rhs:.4f}")
