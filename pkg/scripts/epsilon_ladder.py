"""Steady M_i / M_b along the epsilon ladder on several grids.

Shows how the successive differences depend on angular resolution.

    python scripts/epsilon_ladder.py 100x100 50x400 25x800
"""

import sys
import time

import numpy as np

from crtm.diagnostics import split_mass
from crtm.kernel import assemble, constant_kernel
from crtm.mesh import build_mesh
from crtm.solver import SolverConfig, steady_state

EPSILONS = (0.2, 0.1, 0.05, 0.025)


def ladder(ny, nt):
    mesh = build_mesh(ny, nt, 10.0, 20.0)
    ratios = []
    for eps in EPSILONS:
        m = steady_state(assemble(constant_kernel(1.0, eps), mesh), mesh, SolverConfig(),
                         method="direct")
        m_i, m_b = split_mass(m, mesh)
        ratios.append(m_i / m_b)
    return np.array(ratios)


def main(grids):
    for g in grids or ["100x100", "25x800"]:
        ny, nt = map(int, g.split("x"))
        t0 = time.time()
        r = ladder(ny, nt)
        d = np.abs(np.diff(r))
        trend = "decreasing" if np.all(np.diff(d) < 0) else "not decreasing"
        print(f"{g:>9}: ratios {' '.join(f'{x:.5f}' for x in r)}  "
              f"|diff| {' '.join(f'{x:.2e}' for x in d)}  {trend}  ({time.time() - t0:.0f}s)")


if __name__ == "__main__":
    main(sys.argv[1:])
