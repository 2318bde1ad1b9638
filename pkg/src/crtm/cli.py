"""``crtm`` command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure (CFL or
non-finite values), 4 non-convergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiments
from .config import COMMANDS, ConfigError, ExperimentConfig, load_config
from .io import write_state_csv, write_table
from .kernel import QuadratureError
from .solver import BlowUpError, CFLError, NonConvergenceError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_NONCONV = 0, 2, 3, 4

log = logging.getLogger("crtm")


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crtm", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="INI-style experiment file")
    p.add_argument("--out", help="output directory (overrides experiment.out)")
    p.add_argument("--seed", type=_seed, help="Monte Carlo seed (overrides mc.seed)")
    p.add_argument("--workers", type=int, help="Monte Carlo worker threads (overrides mc.workers)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _snapshot_name(t: float) -> str:
    return f"state_t{t:.6g}.csv"


def cmd_evolve(cfg: ExperimentConfig, out: Path) -> None:
    res = experiments.evolve(cfg)
    prov = cfg.provenance()
    mesh = experiments.mesh_of(cfg)
    for t, s in sorted(res.snapshots.items()):
        write_state_csv(out / _snapshot_name(t), s, mesh, prov)
    write_state_csv(out / "state_final.csv", res.state, mesh, prov)
    res.report.write_csv(out / "report.csv", prov)


def cmd_converge(cfg: ExperimentConfig, out: Path) -> None:
    report = experiments.converge(cfg)
    report.write_error_table(out / "error_table.csv", cfg.provenance())


def cmd_mc_compare(cfg: ExperimentConfig, out: Path) -> None:
    cmp = experiments.mc_compare(cfg)
    prov = cfg.provenance()
    mesh = experiments.mesh_of(cfg)
    write_state_csv(out / "pde_state.csv", cmp.pde, mesh, prov)
    cmp.histogram.write_csv(out / "mc_histogram.csv", prov)
    write_table(out / "distance.csv",
                ["t", "distance", "noise_floor", "ratio", "well_bottom_pde", "well_top_pde",
                 "well_bottom_mc", "well_top_mc"],
                [[cfg.t_end, cmp.distance, cmp.noise_floor, cmp.ratio, *cmp.wells_pde,
                  *cmp.wells_mc]], prov)


def cmd_asymptotic(cfg: ExperimentConfig, out: Path) -> None:
    rows = experiments.asymptotic(cfg)
    cols = ["epsilon", "M_i", "M_b", "ratio", "diffusion_coeff"]
    write_table(out / "ladder.csv", cols, [[r[c] for c in cols] for r in rows], cfg.provenance())
    for a, b, d in zip(rows, rows[1:], experiments.ladder_differences(rows)):
        log.info("|ratio(%g) - ratio(%g)| = %.3e", b["epsilon"], a["epsilon"], d)


HANDLERS = {"evolve": cmd_evolve, "converge": cmd_converge,
            "mc-compare": cmd_mc_compare, "asymptotic": cmd_asymptotic}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, {"command": args.command, "out": args.out,
                                        "seed": args.seed, "workers": args.workers})
    except ConfigError as exc:
        print(f"crtm: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        HANDLERS[cfg.command](cfg, out)
    except (CFLError, BlowUpError, QuadratureError) as exc:
        print(f"crtm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except NonConvergenceError as exc:
        print(f"crtm: not converged: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except ValueError as exc:
        print(f"crtm: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
