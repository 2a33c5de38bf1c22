"""Energy dephasing seen in phase space.

A projective measurement of ``H(0)`` removes the off-diagonal elements of the
state in the energy basis.  For the oscillator that is the same as averaging
the Wigner function over the angle around the origin.  After dephasing all
three work definitions give one characteristic function.
"""

import numpy as np

from qcwork.operators import DriveProtocol, build_hamiltonian, displaced_thermal, evolve
from qcwork.wigner import (
    PhaseGrid,
    angular_average,
    angular_variance,
    dephase,
    wigner_transform,
)
from qcwork.workstats import DEFINITIONS, characteristic, spectral_setup

p = DriveProtocol.fig1()
N = 80
rho = displaced_thermal(p, N)
H0 = build_hamiltonian(p, 0.0, N)
rho_d = dephase(rho, H0)

for n in (128, 256, 512):
    grid = PhaseGrid.for_protocol(p, n)
    w = wigner_transform(rho, grid, p)
    w_d = wigner_transform(rho_d, grid, p)
    avg = angular_average(w, p)
    print(f"grid {n:3d}: |avg - dephased| {np.abs(avg.values - w_d.values).max():.2e}, "
          f"|initial - dephased| {np.abs(w.values - w_d.values).max():.3f}, "
          f"integral {w_d.integral():.10f}, angular variance {angular_variance(w_d, p):.1e}")

Ht = build_hamiltonian(p, p.tau, N)
U = evolve(p, 0.0, p.tau, N)
etas = np.linspace(-4, 4, 161)
setup = spectral_setup(rho_d, H0, Ht, U)
cfs = [characteristic(setup, d, etas).values for d in DEFINITIONS]
print("post-measurement CF spread across definitions:",
      f"{max(np.abs(a - b).max() for a in cfs for b in cfs):.1e}")
