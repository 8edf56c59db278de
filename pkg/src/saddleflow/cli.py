"""Command-line batch runner.

    saddleflow run CONFIG [--output-dir DIR]
    saddleflow check CONFIG
    saddleflow sweep CONFIG [--rho R ...] [--samples N] [--seed S] [--output-dir DIR]

Each ``(rho, z0)`` pair produces a trajectory CSV and a two-column-block plot
data file; one ``report.json`` collects certificates, verdicts, oracle
solutions and property tallies.  The exit status is 0 on success and 2 when
the configuration is invalid; failures inside individual runs are recorded
in the report instead.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import analysis
from .errors import ConfigurationError, SaddleFlowError
from .flow import Trajectory, integrate
from .oracle import SolutionSet, enumerate_kkt
from .problem import Problem, SolutionCertificate, State, kkt_certificate
from .schema import OUTPUT_DIR_ENV, RunConfig, SamplingSpec, parse_run_config, problem_to_dict

log = logging.getLogger("saddleflow")

EXIT_OK = 0
EXIT_CONFIG = 2
REPORT_NAME = "report.json"
MAX_ZERO_DISSIPATION_SAMPLES = 2000


def _clean(obj):
    """Make ``obj`` JSON-safe: arrays to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def _state_dict(z: State) -> dict:
    return {"x": z.x.tolist(), "mu": z.mu.tolist()}


def _plot_data(traj: Trajectory, rho: float, idx: int) -> str:
    cols = [f"x_{i + 1}" for i in range(traj.n)] + [f"mu_{i + 1}" for i in range(traj.m)]
    lines = [f"# rho = {rho!r}, initial state {idx}", "# " + " ".join(cols)]
    for row in traj.z:
        lines.append(" ".join(format(float(v), ".17g") for v in row))
    return "\n".join(lines) + "\n"


def _reference(sols: Optional[SolutionSet]) -> Optional[SolutionCertificate]:
    """Preferred reference solution: the first strictly complementary one."""
    if sols is None or not sols.solutions:
        return None
    for c in sols.solutions:
        if c.strict_complementarity:
            return c
    return sols.solutions[0]


def _prepare_rho(cfg: RunConfig, p: Problem, rng: np.random.Generator) -> dict:
    """Oracle, reference solution, reduced system and property tallies for one rho."""
    info: dict = {"rho": p.rho}
    sols = None
    try:
        sols = enumerate_kkt(p)
        info["oracle"] = sols.to_dict()
    except SaddleFlowError as exc:
        info["oracle"] = {"error": f"{type(exc).__name__}: {exc}"}
    ref = _reference(sols)
    info["reference_solution"] = _state_dict(ref.z_star) if ref else None
    system = None
    if "hamiltonian" in cfg.analyses:
        if ref is None:
            info["hamiltonian"] = {"error": "no reference solution"}
        else:
            try:
                system = analysis.hamiltonian_reduction(p, ref)
                info["hamiltonian"] = system.to_dict()
            except SaddleFlowError as exc:
                info["hamiltonian"] = {"error": f"{type(exc).__name__}: {exc}"}
    if "monotonicity" in cfg.analyses:
        try:
            pairs = [(s, t) for s, t in zip(cfg.sampling.draw(p, rng, cfg.property_samples),
                                            cfg.sampling.draw(p, rng, cfg.property_samples))]
            info["monotonicity"] = analysis.monotonicity_tally(
                p, pairs, ref.z_star if ref else None)
        except SaddleFlowError as exc:
            info["monotonicity"] = {"error": f"{type(exc).__name__}: {exc}"}
    return {"info": info, "solutions": sols, "reference": ref, "system": system}


def _zero_dissipation_tally(p: Problem, traj: Trajectory, ref: SolutionCertificate) -> dict:
    tally = {"samples_in_set": 0, "samples": 0, "item_i": 0, "item_ii": 0, "item_iii": 0,
             "item_iv": 0, "item_v": 0, "item_vi": 0, "max_constraint_violation": 0.0}
    keep = np.flatnonzero(np.abs(traj.dissipation) <= analysis.MEMBERSHIP_TOL)
    tally["samples_in_set"] = int(keep.size)
    if keep.size > MAX_ZERO_DISSIPATION_SAMPLES:
        keep = keep[np.linspace(0, keep.size - 1, MAX_ZERO_DISSIPATION_SAMPLES).astype(int)]
    for k in keep:
        rep = analysis.zero_dissipation_checks(p, traj.state(int(k)), ref)
        tally["samples"] += 1
        tally["item_i"] += int(rep.in_feasible_set or not rep.item_i_applicable)
        tally["item_ii"] += int(rep.grad_f_match <= 1e-6)
        tally["item_iii"] += int(bool(np.all(rep.linearization_defects <= 1e-6)))
        tally["item_iv"] += int(rep.grad_g_mu_match <= 1e-6)
        tally["item_v"] += int(rep.inactive_duals_zero)
        tally["item_vi"] += int(rep.strict_comp_implication is not False)
        if rep.item_i_applicable:
            tally["max_constraint_violation"] = max(tally["max_constraint_violation"],
                                                    rep.max_constraint_violation)
    return tally


def _run_one(cfg: RunConfig, p: Problem, prep: dict, ri: int, zi: int, z0: State) -> dict:
    """Integrate and analyse one ``(rho, z0)`` pair; writes the CSV and plot files."""
    stem = f"r{ri:02d}_z{zi:03d}"
    rec: dict = {"rho_index": ri, "rho": p.rho, "z0_index": zi, "z0": _state_dict(z0),
                 "trajectory_file": f"traj_{stem}.csv", "plot_file": f"plot_{stem}.dat",
                 "error": None}
    ref: Optional[SolutionCertificate] = prep["reference"]
    try:
        traj = integrate(p, z0, cfg.integrator, z_ref=ref.z_star if ref else None)
        (cfg.output_dir / rec["trajectory_file"]).write_text(traj.to_csv())
        (cfg.output_dir / rec["plot_file"]).write_text(_plot_data(traj, p.rho, zi))
        rec.update(terminal_status=traj.terminal_status, t_final=float(traj.times[-1]),
                   n_samples=len(traj), terminal=_state_dict(traj.terminal))
        if traj.terminal_status == "error":
            rec["error"] = f"integration diverged at step {traj.error_step}"
            return rec
        if "kkt" in cfg.analyses:
            rec["certificate"] = kkt_certificate(p, traj.terminal, tol=1e-5).to_dict()
            if prep["solutions"] is not None:
                rec["distance_to_solution_set"] = prep["solutions"].primal_distance(traj.terminal.x)
        if ref is None:
            return rec
        if "dissipation" in cfg.analyses:
            rec["dissipation"] = {"max": float(np.max(traj.dissipation)),
                                  "min": float(np.min(traj.dissipation)),
                                  "lasalle_initial": float(traj.lasalle[0]),
                                  "lasalle_final": float(traj.lasalle[-1])}
        if "zero_dissipation" in cfg.analyses:
            rec["zero_dissipation"] = _zero_dissipation_tally(p, traj, ref)
        if "cycle" in cfg.analyses:
            verdict = analysis.detect_cycle(traj, ref.z_star, cfg.cycle.tol_radius,
                                            cfg.cycle.tol_return, cfg.cycle.field_tol,
                                            system=prep["system"])
            rec["cycle"] = verdict.to_dict()
        if "hamiltonian" in cfg.analyses and prep["system"] is not None:
            res = analysis.hamiltonian_residuals(p, traj, prep["system"], ref.z_star)
            rec["hamiltonian_residual"] = {"samples": int(res.size),
                                           "max": float(res.max()) if res.size else None,
                                           "bound": 10.0 * cfg.integrator.h}
    except SaddleFlowError as exc:
        rec["error"] = f"{type(exc).__name__}: {exc}"
    return rec


def run(cfg: RunConfig) -> dict:
    """Execute every ``(rho, z0)`` pair of ``cfg`` and write the artifacts.

    Returns the report dictionary that was written to ``report.json``.
    """
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    seeds = np.random.SeedSequence(cfg.seed)
    state_seed, *rho_seeds = seeds.spawn(1 + len(cfg.rho_values))
    states = list(cfg.initial_states) + cfg.sampling.draw(cfg.problem, np.random.default_rng(state_seed))
    problems = [cfg.problem.with_rho(r) for r in cfg.rho_values]
    preps = [_prepare_rho(cfg, p, np.random.default_rng(s)) for p, s in zip(problems, rho_seeds)]

    tasks = [(ri, zi) for ri in range(len(problems)) for zi in range(len(states))]
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        futures = {t: pool.submit(_run_one, cfg, problems[t[0]], preps[t[0]], t[0], t[1],
                                  states[t[1]]) for t in tasks}
        # merge in (rho, z0) order regardless of completion order
        runs = [futures[t].result() for t in sorted(tasks)]

    report = {
        "schema_version": 1,
        "problem": problem_to_dict(cfg.problem),
        "config": {
            "rho_values": list(cfg.rho_values),
            "integrator": {"h": cfg.integrator.h, "T": cfg.integrator.T,
                           "scheme": cfg.integrator.scheme,
                           "equilibrium_tol": cfg.integrator.equilibrium_tol,
                           "record_stride": cfg.integrator.record_stride},
            "analyses": sorted(cfg.analyses),
            "seed": cfg.seed,
            "n_initial_states": len(states),
        },
        "rho": [pr["info"] for pr in preps],
        "runs": runs,
        "summary": _summary(runs),
    }
    report = _clean(report)
    text = json.dumps(report, indent=2, sort_keys=False) + "\n"
    (cfg.output_dir / REPORT_NAME).write_text(text)
    return report


def _summary(runs: list[dict]) -> dict:
    verdicts: dict = {}
    for r in runs:
        kind = r.get("cycle", {}).get("kind")
        if kind is not None:
            verdicts[kind] = verdicts.get(kind, 0) + 1
    return {"runs": len(runs), "errors": sum(r["error"] is not None for r in runs),
            "verdicts": dict(sorted(verdicts.items()))}


def _describe(cfg: RunConfig) -> str:
    p = cfg.problem
    n_states = len(cfg.initial_states) + cfg.sampling.count
    return (f"problem {p.name or '<unnamed>'}: n={p.n}, m={p.m}, X={p.hard_set.kind}\n"
            f"{n_states} initial state(s) x {len(cfg.rho_values)} rho value(s) "
            f"{cfg.rho_values}; h={cfg.integrator.h}, T={cfg.integrator.T}, "
            f"scheme={cfg.integrator.scheme}\n"
            f"analyses: {', '.join(sorted(cfg.analyses)) or 'none'}\n"
            f"output: {cfg.output_dir}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="saddleflow", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate and analyse every (rho, z0) pair")
    p_run.add_argument("config", type=Path)
    p_run.add_argument("--output-dir", type=Path, help=f"overrides the config and ${OUTPUT_DIR_ENV}")

    p_check = sub.add_parser("check", help="validate a configuration and its problem file")
    p_check.add_argument("config", type=Path)

    p_sweep = sub.add_parser("sweep", help="run from seeded random initial states")
    p_sweep.add_argument("config", type=Path)
    p_sweep.add_argument("--rho", type=float, nargs="+", help="rho values (default: from config)")
    p_sweep.add_argument("--samples", type=int, default=20, help="number of random initial states")
    p_sweep.add_argument("--seed", type=int, help="random seed (default: from config)")
    p_sweep.add_argument("--output-dir", type=Path, help=f"overrides the config and ${OUTPUT_DIR_ENV}")
    return parser


def load_config(path: Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc.strerror}") from None
    return parse_run_config(text, Path(path).parent)


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if getattr(args, "output_dir", None) is not None:
            cfg = replace(cfg, output_dir=args.output_dir)
        if args.command == "sweep":
            if args.samples < 1:
                raise ConfigurationError("--samples must be positive")
            if args.seed is not None and args.seed < 0:
                raise ConfigurationError("--seed must be nonnegative")
            if args.rho is not None and any(r < 0 for r in args.rho):
                raise ConfigurationError("--rho values must be nonnegative")
            sampling = SamplingSpec(args.samples, cfg.sampling.x_range, cfg.sampling.mu_range)
            cfg = replace(cfg, initial_states=[], sampling=sampling,
                          rho_values=args.rho if args.rho is not None else cfg.rho_values,
                          seed=args.seed if args.seed is not None else cfg.seed)
    except ConfigurationError as exc:
        print(f"saddleflow: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "check":
        print(_describe(cfg))
        print("configuration OK")
        return EXIT_OK

    report = run(cfg)
    s = report["summary"]
    verdicts = ", ".join(f"{k}: {v}" for k, v in s["verdicts"].items()) or "none"
    print(f"{s['runs']} run(s), {s['errors']} error(s); verdicts {verdicts}")
    print(f"report written to {cfg.output_dir / REPORT_NAME}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
