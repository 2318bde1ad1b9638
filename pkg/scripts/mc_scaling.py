"""Particle-vs-kinetic distance and bootstrap floor for growing ensembles.

    python scripts/mc_scaling.py [--t 0.5] [--sizes 62500 250000 1000000]
"""

import argparse

from crtm.diagnostics import weighted_l2_distance, well_contrast
from crtm.kernel import assemble, constant_kernel
from crtm.mesh import build_mesh, uniform_init
from crtm.montecarlo import bootstrap_noise_floor, simulate
from crtm.solver import SolverConfig, run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--t", type=float, default=0.5)
    ap.add_argument("--n", type=int, default=100, help="mesh half-resolution")
    ap.add_argument("--sizes", type=int, nargs="+", default=[62_500, 250_000, 1_000_000])
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    mesh = build_mesh(args.n, args.n, 10.0, 20.0)
    spec = constant_kernel(1.0, 0.05)
    pde = run(uniform_init(mesh), assemble(spec, mesh), mesh,
              SolverConfig(dt=1e-3, t_end=args.t, stop_at_steady=False)).state
    print("pde well contrast", well_contrast(pde, mesh))
    prev = None
    for n in args.sizes:
        h = simulate(n, args.seed, 1e-3, args.t, spec, mesh).histograms[args.t]
        d = weighted_l2_distance(h.to_state(), pde, mesh)
        f = bootstrap_noise_floor(h)
        extra = f"  ratio to previous {d / prev:.3f}" if prev else ""
        print(f"N={n:>8d} distance {d:.3e} floor {f:.3e} d/floor {d / f:.2f}"
              f"  wells {well_contrast(h.to_state(), mesh)}{extra}")
        prev = d


if __name__ == "__main__":
    main()
