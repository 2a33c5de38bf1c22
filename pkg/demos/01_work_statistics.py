"""Work characteristic functions and quasi-distributions of the dragged oscillator.

Builds the displaced thermal state, propagates it through the drive and
compares the three quantum definitions with each other and with the
classical closed form.  Run with ``python3 demos/01_work_statistics.py``.
"""

import numpy as np

from qcwork.classical import cf_classical_closed
from qcwork.operators import (
    DriveProtocol,
    auto_dimension,
    build_hamiltonian,
    displaced_thermal,
    evolve,
)
from qcwork.workstats import (
    DEFINITIONS,
    characteristic,
    energy_change,
    quasi_distribution,
    spectral_setup,
)

p = DriveProtocol.fig1()
N = max(80, auto_dimension(p))
rho = displaced_thermal(p, N)
H0 = build_hamiltonian(p, 0.0, N)
Ht = build_hamiltonian(p, p.tau, N)
U = evolve(p, 0.0, p.tau, N)
setup = spectral_setup(rho, H0, Ht, U)
print(f"Fock dimension {N}")

etas = np.array([0.0, 0.5, 1.0, 2.0])
classical = cf_classical_closed(etas, p).values
print("\neta   " + "".join(f"{d:>24s}" for d in DEFINITIONS) + f"{'CLASSICAL':>24s}")
cfs = {d: characteristic(setup, d, etas).values for d in DEFINITIONS}
for j, e in enumerate(etas):
    row = "".join(f"{cfs[d][j].real:>12.6f}{cfs[d][j].imag:+12.6f}" for d in DEFINITIONS)
    print(f"{e:4.1f}  {row}{classical[j].real:>12.6f}{classical[j].imag:+12.6f}")

# TPM destroys the initial coherence; FCS and MH keep it and go negative
print("\ndefinition  support  min weight   negative  <W>        <W^2>")
for d in DEFINITIONS:
    q = quasi_distribution(rho, H0, Ht, U, d, setup=setup)
    print(f"{d:10s} {q.support.size:8d} {q.min_weight:11.3e} {q.negativity_count:9d}"
          f"  {q.moment(1):.6f}  {q.moment(2):.6f}")
print(f"energy change Tr[H rho] {energy_change(rho, H0, Ht, U):.6f}")

# FCS support sits on half-integer multiples of hbar*omega
fcs = quasi_distribution(rho, H0, Ht, U, "FCS", setup=setup)
big = fcs.support[np.abs(fcs.weights) > 1e-3]
print("FCS support points with |weight| > 1e-3:", np.round(big, 3))
