"""The four experiments behind the command-line tool, as plain functions.

Each takes an :class:`~crtm.config.ExperimentConfig` and returns in-memory
results; :mod:`crtm.cli` only adds file output and exit codes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .config import ExperimentConfig
from .diagnostics import (DiagnosticsReport, split_mass, weighted_l2_distance,
                          weighted_l2_error, well_contrast)
from .kernel import assemble, diffusion_coeff
from .mesh import build_mesh, uniform_init
from .montecarlo import Histogram2D, bootstrap_noise_floor, simulate
from .solver import CFLError, RunResult, SolverConfig, check_cfl, run, steady_state

log = logging.getLogger(__name__)


def solver_config(cfg: ExperimentConfig, **kw) -> SolverConfig:
    base = dict(dt=cfg.dt, t_end=cfg.t_end, steady_tol=cfg.steady_tol,
                snapshot_times=tuple(cfg.snapshot_times), stride=cfg.stride,
                stop_at_steady=False)
    base.update(kw)
    return SolverConfig(**base)


def mesh_of(cfg: ExperimentConfig, n_y=None, n_theta=None):
    return build_mesh(n_y or cfg.n_y, n_theta or cfg.n_theta, cfg.L, cfg.V)


def evolve(cfg: ExperimentConfig) -> RunResult:
    """PDE run from the uniform state to ``t_end`` with snapshots.

    With ``entropy`` enabled the steady state is computed first and the
    report carries the relative entropy and the sup of ``n / m``.
    """
    mesh = mesh_of(cfg)
    kernel = assemble(cfg.kernel_spec(), mesh)
    scfg = solver_config(cfg)
    reference = None
    if cfg.entropy:
        reference = steady_state(kernel, mesh, replace(scfg, stop_at_steady=True),
                                 method=cfg.steady_method)
    return run(uniform_init(mesh), kernel, mesh, scfg, reference=reference)


def refinement_pairs(cfg: ExperimentConfig):
    if cfg.pairs == "diagonal":
        return list(zip(cfg.ny_list, cfg.ntheta_list))
    return [(ny, nt) for ny in cfg.ny_list for nt in cfg.ntheta_list]


def converge(cfg: ExperimentConfig) -> DiagnosticsReport:
    """Grid-refinement table: squared weighted error of each coarse run at
    ``t_end`` against a ``reference_n`` x ``reference_n`` run, interpolated
    bicubically onto the coarse centres."""
    pairs = refinement_pairs(cfg)
    nref = cfg.reference_n
    if any(ny > nref or nt > nref for ny, nt in pairs):
        raise ValueError(f"reference_n={nref} is coarser than a test grid")
    spec = cfg.kernel_spec()
    scfg = solver_config(cfg, snapshot_times=())

    def final(ny, nt):
        mesh = mesh_of(cfg, ny, nt)
        return mesh, run(uniform_init(mesh), assemble(spec, mesh), mesh, scfg).state

    ref_mesh, ref = final(nref, nref)
    report = DiagnosticsReport()
    for ny, nt in pairs:
        mesh, coarse = final(ny, nt)
        err2 = weighted_l2_error(coarse, mesh, ref, ref_mesh)
        log.info("n_y=%d n_theta=%d err2=%.3e", ny, nt, err2)
        report.errors.append({"dy": mesh.dy, "dtheta": mesh.dtheta, "err2": err2,
                              "n_y": ny, "n_theta": nt})
    return report


@dataclass
class Comparison:
    pde: object
    histogram: Histogram2D
    distance: float
    noise_floor: float
    wells_pde: tuple
    wells_mc: tuple
    extra: dict = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        return self.distance / self.noise_floor


def mc_compare(cfg: ExperimentConfig) -> Comparison:
    """PDE and particle runs to ``t_end`` from the uniform law, binned on the
    same mesh, with the bootstrap noise floor of the histogram."""
    mesh = mesh_of(cfg)
    spec = cfg.kernel_spec()
    pde = run(uniform_init(mesh), assemble(spec, mesh), mesh,
              solver_config(cfg, snapshot_times=())).state
    mc = simulate(cfg.n_cell, cfg.seed, cfg.dt, cfg.t_end, spec, mesh,
                  workers=cfg.workers, block_size=cfg.block_size)
    hist = mc.histograms[float(cfg.t_end)]
    dist = weighted_l2_distance(hist.to_state(), pde, mesh)
    floor = bootstrap_noise_floor(hist, reps=cfg.bootstrap_reps, seed=cfg.seed)
    return Comparison(pde=pde, histogram=hist, distance=dist, noise_floor=floor,
                      wells_pde=well_contrast(pde, mesh),
                      wells_mc=well_contrast(hist.to_state(), mesh))


def asymptotic(cfg: ExperimentConfig) -> list[dict]:
    """Steady bulk/boundary split for each epsilon of the ladder."""
    mesh = mesh_of(cfg)
    scfg = solver_config(cfg, stop_at_steady=True)
    rows = []
    for eps in cfg.epsilons:
        spec = cfg.kernel_spec(eps)
        kernel = assemble(spec, mesh)
        if cfg.steady_method == "evolve":
            try:
                check_cfl(kernel, mesh, cfg.dt)
            except CFLError as exc:
                raise CFLError(f"epsilon={eps}: {exc}") from exc
        m = steady_state(kernel, mesh, scfg, method=cfg.steady_method)
        m_i, m_b = split_mass(m, mesh)
        D = diffusion_coeff(spec, 0.0, 0.0)
        rows.append({"epsilon": eps, "M_i": m_i, "M_b": m_b, "ratio": m_i / m_b,
                     "diffusion_coeff": D})
        log.info("epsilon=%g ratio=%.6f", eps, m_i / m_b)
    return rows


def ladder_differences(rows) -> np.ndarray:
    return np.abs(np.diff([r["ratio"] for r in rows]))
