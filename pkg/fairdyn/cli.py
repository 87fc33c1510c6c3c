"""
Command line surface.

    python run.py simulate configs/bifurcation.json --set policy.kind=greedy
    python run.py optimal-policy configs/bifurcation.json
    python run.py fit scores.csv --equalize-shapes
    python run.py compare-policies configs/compare_policies.json --sweep lender.R=0.1,0.21
    python run.py selfcheck

Exit codes are 0 on success, 1 for invalid input and 2 for numerical failures. Errors are also written to stderr
as a single JSON object.
"""

import argparse
import itertools
import json
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import List

import numpy as np
import pandas as pd
from tqdm import tqdm

from . import utils, specfun, ingest, synthetic, plots
from .config import ScenarioConfig, PolicyConfig, load_config
from .population import GroupLabel, PopulationState
from .dynamics import simulate
from .policy import FairPolicy, FixedPolicy, EqualizedOddsPolicy, blind_threshold
from .equilibrium import (
    equilibrium_curve, social_welfare_threshold, SocialWelfarePolicy, uniqueness_scan,
)
from .control import (
    OptimalPolicy, solve_bellman, greedy_threshold, detect_bifurcation, lemma1_check, parity_verdict,
    discounted_reward, optimize_fair_rate,
)
from .errors import (
    FairDynError, ConfigError, DomainError, ScoreTableError, DegenerateHistogramError, ConvergenceError,
    NoSolutionError, DegenerateSelectionError,
)
from .logger import Logger

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2

EXIT_CODES = {
    ConfigError: EXIT_VALIDATION,
    DomainError: EXIT_VALIDATION,
    ScoreTableError: EXIT_VALIDATION,
    DegenerateHistogramError: EXIT_VALIDATION,
    ConvergenceError: EXIT_NUMERICAL,
    NoSolutionError: EXIT_NUMERICAL,
    DegenerateSelectionError: EXIT_NUMERICAL,
    OSError: EXIT_VALIDATION,
}

MODES = ("simulate", "equilibrium-curve", "optimal-policy", "fit", "compare-policies", "selfcheck", "show-config",
         "make-synthetic")


def exit_code(e: BaseException) -> int:
    for klass in type(e).__mro__:
        if klass in EXIT_CODES:
            return EXIT_CODES[klass]
    return EXIT_NUMERICAL if isinstance(e, FairDynError) else EXIT_VALIDATION


def error_report(e: BaseException) -> dict:
    report = {"error": type(e).__name__, "message": str(e)}
    if isinstance(e, FairDynError):
        report.update(e.details())
    return report


# -------------------------------------------------------------
# Output helpers
# -------------------------------------------------------------

def _jsonable(x):
    """ Replaces non finite floats by None and numpy scalars by python ones. """
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_json(data: dict, path: str):
    with open(path, "wt", encoding="utf-8") as f:
        json.dump(_jsonable(data), f, indent=2)
        f.write("\n")


def write_csv(rows: List[dict], columns, path: str):
    frame = pd.DataFrame(rows, columns=list(columns))
    frame.to_csv(path, index=False, float_format="%.12g", na_rep="NaN")


def safe_name(s: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", s).strip("_") or "unnamed"


def _suffixed(file_name: str, suffix: str) -> str:
    root, ext = os.path.splitext(file_name)
    return f"{root}_{safe_name(suffix)}{ext}"


def _output_path(config: ScenarioConfig, file_name: str) -> str:
    os.makedirs(config.output.folder, exist_ok=True)
    return os.path.join(config.output.folder, file_name)


# -------------------------------------------------------------
# Scenario construction
# -------------------------------------------------------------

def build_groups(config: ScenarioConfig, log: Logger):
    """
    Returns (groups, labels, fitted). groups holds (state, dynamics params) pairs. When the scenario names a score
    table the states are fitted from it, and a configured group with the same name contributes its alpha.
    """
    if config.data:
        equalize = True if config.equalize_shapes else None
        fitted = ingest.pipeline(config.data, config.bins, config.smoothing, equalize=equalize, log=log)
        alphas = {group.name: group.alpha for group in config.groups}
        labels = [group.label for group in fitted]
        groups = [(group.state, config.dynamics.to_params(alphas.get(group.label.name, 0.0))) for group in fitted]
        return groups, labels, fitted
    labels = [GroupLabel(i, group.name) for i, group in enumerate(config.groups)]
    groups = [(group.to_state(), config.dynamics.to_params(group.alpha)) for group in config.groups]
    return groups, labels, None


def solve_value_functions(config: ScenarioConfig, groups, log: Logger, cache: dict = None):
    """
    One solved value function per group, solved once per distinct (c, dynamics) pair.
    """
    cache = {} if cache is None else cache
    lender = config.lender.to_params()
    solver = config.solver
    result = []
    for state, params in groups:
        key = (state.c, params, lender)
        if key not in cache:
            cache[key] = solve_bellman(
                state.c, params, lender,
                grid_size=solver.grid_size,
                tol=solver.tol,
                action_grid=solver.action_grid,
                refine_rounds=solver.refine_rounds,
                max_iterations=solver.max_iterations or None,
                log=log,
            )
        result.append(cache[key])
    return result


def build_policy(policy_config: PolicyConfig, config: ScenarioConfig, groups, labels, log: Logger,
                 cache: dict = None):
    """
    Turns a policy section into a ThresholdPolicy. Returns (policy, extra summary fields).
    """
    kind = policy_config.kind
    lender = config.lender.to_params()
    if kind == "optimal":
        return OptimalPolicy(solve_value_functions(config, groups, log, cache)), {}
    if kind == "greedy":
        return FixedPolicy(greedy_threshold(lender), label="greedy"), {}
    if kind == "fixed":
        return FixedPolicy(policy_config.threshold), {}
    if kind == "social_welfare":
        return SocialWelfarePolicy([params for _, params in groups]), {}
    if kind == "equalized_odds":
        return EqualizedOddsPolicy(), {}

    s = policy_config.s if policy_config.s is not None else 0.5
    if kind == "blind":
        template = blind_threshold(policy_config.threshold if policy_config.threshold is not None else 0.5)
    elif kind == "demographic_parity":
        template = FairPolicy.demographic_parity(s)
    elif kind == "equality_of_opportunity":
        template = FairPolicy.equality_of_opportunity(s)
    elif kind == "custom":
        template = FairPolicy.custom(s, policy_config.k1, policy_config.k2)
    else:
        raise ConfigError(f"unknown policy kind {kind!r}", field="policy.kind")

    if not policy_config.optimize_s:
        return template, {}
    policy, value = optimize_fair_rate(template, groups, lender, T=config.solver.optimize_horizon, labels=labels)
    log.info(f"Optimized {policy_config.label}: {policy.describe()} (discounted reward {value:.6g})")
    return policy, {"optimized": True, "optimized_reward": value}


def trajectory_summary(traj, lender) -> dict:
    """
    Final means, parity gap and verdict, plus per group dips below the starting mean.
    """
    initial = traj.mu[0]
    lowest = traj.mu[1:].min(axis=0) if traj.horizon > 0 else initial
    final = traj.mu[-1]
    result = {
        "policy": traj.policy,
        "groups": [label.name for label in traj.labels],
        "initial_means": traj.initial_means(),
        "final_means": traj.final_means(),
        "min_means": [float(x) for x in lowest],
        "temporary_harm": [bool(lo < mu0 <= mu_T) for lo, mu0, mu_T in zip(lowest, initial, final)],
        "final_thresholds": [float(x) for x in traj.threshold[-1]],
        "discounted_reward": discounted_reward(traj, lender.gamma),
        "parity_gap": None,
        "verdict": None,
    }
    if traj.n_groups == 2:
        verdict = parity_verdict(traj, lender)
        result["parity_gap"] = verdict.final_gap
        result["verdict"] = verdict.to_dict()
    return result


def _maybe_gnuplot(config: ScenarioConfig, kind: str, csv_path: str, groups=None, log: Logger = None):
    if config.output.gnuplot:
        script = plots.write_gnuplot(kind, csv_path, groups=groups)
        if log is not None:
            log.debug(f"Wrote {script}")


# -------------------------------------------------------------
# Commands
# -------------------------------------------------------------

def cmd_simulate(config: ScenarioConfig, log: Logger) -> dict:
    groups, labels, _ = build_groups(config, log)
    lender = config.lender.to_params()
    policy, extra = build_policy(config.policy, config, groups, labels, log)
    traj = simulate(groups, policy, config.horizon, lender=lender, labels=labels, log=log)

    trajectory_path = _output_path(config, config.output.trajectory)
    write_csv(traj.to_rows(), traj.COLUMNS, trajectory_path)
    _maybe_gnuplot(config, "trajectory", trajectory_path, [label.name for label in labels], log)

    summary = {
        "name": config.name,
        "command": "simulate",
        "horizon": config.horizon,
        "lender": lender.to_dict(),
        "dynamics": [params.to_dict() for _, params in groups],
        "c": list(traj.c),
        **trajectory_summary(traj, lender),
        **extra,
        "code_hash": utils.code_hash(),
    }
    write_json(summary, _output_path(config, config.output.summary))
    gap = summary["parity_gap"]
    log.important(
        f"{config.name}: final means {', '.join(f'{m:.4f}' for m in summary['final_means'])}"
        + ("" if gap is None else f", parity gap {gap:.3e} ({summary['verdict']['verdict']})")
    )
    return summary


def _bands(points):
    bands = []
    for point in points:
        label = point.classification.value
        if bands and bands[-1]["classification"] == label:
            bands[-1]["A_max"] = point.A
        else:
            bands.append({"classification": label, "A_min": point.A, "A_max": point.A})
    return bands


def cmd_equilibrium_curve(config: ScenarioConfig, log: Logger) -> dict:
    """
    Equilibrium mean for each fixed threshold, using the first group's shape and dynamics. With two or more
    groups every row is classified against the first two starting means.
    """
    groups, labels, _ = build_groups(config, log)
    state, params = groups[0]
    if len({s.c for s, _ in groups}) > 1:
        log.warn(f"Groups differ in shape, the curve uses c={state.c:g} of {labels[0].name}.")
    mu0 = (groups[0][0].mu, groups[1][0].mu) if len(groups) >= 2 else None

    A_grid = np.linspace(0.0, 1.0, config.solver.A_steps)
    points = equilibrium_curve(A_grid, state.c, params, mu0=mu0, log=log)
    curve_path = _output_path(config, config.output.equilibrium)
    write_csv([point.to_row() for point in points], ("A", "mu_inf", "stable", "boundary", "classification"),
              curve_path)
    _maybe_gnuplot(config, "equilibrium", curve_path, log=log)

    peak = max(points, key=lambda point: point.mu_inf)
    summary = {
        "name": config.name,
        "command": "equilibrium-curve",
        "c": state.c,
        "dynamics": params.to_dict(),
        "mu0": mu0,
        "A_steps": len(points),
        "peak_A": peak.A,
        "peak_mu_inf": peak.mu_inf,
        "social_welfare_threshold":
            social_welfare_threshold(params, state.mu) if params.beta > 0 and params.alpha < 1 else None,
        "bands": _bands(points) if mu0 is not None else [],
        "unstable": [point.A for point in points if not point.stable],
        "code_hash": utils.code_hash(),
    }
    write_json(summary, _output_path(config, config.output.summary))
    log.important(f"{config.name}: equilibrium mean peaks at A={peak.A:.4f} (mu_inf={peak.mu_inf:.4f})")
    return summary


def cmd_optimal_policy(config: ScenarioConfig, log: Logger) -> dict:
    groups, labels, _ = build_groups(config, log)
    cache = {}
    vfs = solve_value_functions(config, groups, log, cache)
    distinct = list(dict.fromkeys(vfs))
    mu0_grid = np.linspace(0.02, 0.98, config.solver.bifurcation_points)

    reports = []
    for vf in distinct:
        names = [label.name for label, group_vf in zip(labels, vfs) if group_vf is vf]
        suffix = None if len(distinct) == 1 else names[0]
        vf_name = config.output.value_function if suffix is None else _suffixed(config.output.value_function, suffix)
        log_name = config.output.solver_log if suffix is None else _suffixed(config.output.solver_log, suffix)

        vf_path = _output_path(config, vf_name)
        write_csv(vf.to_rows(), ("mu", "J", "A_star"), vf_path)
        _maybe_gnuplot(config, "value_function", vf_path, log=log)
        if vf.solver_log is not None:
            vf.solver_log.export_to_csv(_output_path(config, log_name))

        bifurcation = detect_bifurcation(vf, mu0_grid=mu0_grid, T=config.solver.bifurcation_horizon, log=log)
        report = {
            "groups": names,
            "c": vf.c,
            "dynamics": vf.params.to_dict(),
            "lender": vf.lender.to_dict(),
            "iterations": vf.iterations,
            "residual": vf.residual,
            "value_function": vf_name,
            **bifurcation.to_dict(),
        }
        if config.solver.lemma1_check and vf.params.beta > 0:
            lemma = lemma1_check(vf, log=log)
            report["lemma1"] = lemma.to_dict()
            if lemma.passed is False:
                log.warn(f"{len(lemma.violations)} solved thresholds fall below nu/beta = {lemma.bound:.4f}.")
        reports.append(report)
        log.important(
            f"{config.name} ({', '.join(names)}): {bifurcation.n_clusters} limit cluster(s) at "
            f"{', '.join(f'{x:.4f}' for x in bifurcation.clusters)}"
            + ("" if not bifurcation.boundaries else
               f", basin boundaries {', '.join(f'{x:.4f}' for x in bifurcation.boundaries)}")
        )

    result = {
        "name": config.name,
        "command": "optimal-policy",
        "solutions": reports,
        "code_hash": utils.code_hash(),
    }
    write_json(result, _output_path(config, config.output.bifurcation))
    return result


def cmd_fit(path: str, folder: str, file_name: str = "fitted_groups.json", bins: int = 100, smoothing: int = 1,
            equalize=None, log: Logger = None) -> dict:
    log = log or Logger()
    fitted = ingest.pipeline(path, bins=bins, smoothing=smoothing, equalize=equalize, log=log)
    result = {
        "source": path,
        "bins": bins,
        "smoothing": smoothing,
        "equalize": equalize,
        "groups": [group.to_dict() for group in fitted],
        "code_hash": utils.code_hash(),
    }
    os.makedirs(folder, exist_ok=True)
    write_json(result, os.path.join(folder, file_name))
    for group in fitted:
        log.important(f"{group.label.name}: mu={group.state.mu:.4f} c={group.state.c:.4f}")
    return result


def cmd_compare_policies(config: ScenarioConfig, log: Logger) -> dict:
    if not config.policies:
        raise ConfigError("at least one policy is required", field="policies")
    groups, labels, fitted = build_groups(config, log)
    lender = config.lender.to_params()
    cache = {}

    results = []
    for i, policy_config in enumerate(config.policies):
        policy, extra = build_policy(policy_config, config, groups, labels, log, cache)
        traj = simulate(groups, policy, config.horizon, lender=lender, labels=labels, log=log)
        trajectory_name = _suffixed(config.output.trajectory, policy_config.label)
        trajectory_path = _output_path(config, trajectory_name)
        write_csv(traj.to_rows(), traj.COLUMNS, trajectory_path)
        _maybe_gnuplot(config, "trajectory", trajectory_path, [label.name for label in labels], log)
        summary = {"name": policy_config.label, "trajectory": trajectory_name, **trajectory_summary(traj, lender),
                   **extra}
        results.append(summary)
        log.info(
            f"{policy_config.label:<28} final means {', '.join(f'{m:.4f}' for m in summary['final_means'])}"
        )

    result = {
        "name": config.name,
        "command": "compare-policies",
        "horizon": config.horizon,
        "lender": lender.to_dict(),
        "groups": [{"name": label.name, **state.to_dict(), "alpha": params.alpha}
                   for label, (state, params) in zip(labels, groups)],
        "fitted_from": config.data or None,
        "policies": results,
        "code_hash": utils.code_hash(),
    }
    write_json(result, _output_path(config, config.output.comparison))
    return result


def cmd_selfcheck(log: Logger, mesh_points: int = None) -> dict:
    """
    Special function identities and the equilibrium uniqueness scan.
    """
    checks = []
    for name, passed, detail in specfun.identity_suite():
        log.info(f"{name:<24} {'<green>ok<end>' if passed else '<red>FAIL<end>'} {detail}")
        checks.append({"name": name, "passed": bool(passed), "detail": detail})

    scan = uniqueness_scan() if mesh_points is None else uniqueness_scan(mesh_points=mesh_points)
    log.info(
        f"{'uniqueness scan':<24} {'<green>ok<end>' if scan.passed else '<red>FAIL<end>'} "
        f"{scan.cells} cells, {scan.boundary_cells} boundary, {len(scan.failures)} failures"
    )
    passed = all(check["passed"] for check in checks) and scan.passed
    return {"passed": passed, "identities": checks, "uniqueness": scan.to_dict()}


def cmd_show_config(config: ScenarioConfig) -> dict:
    return {"config": config.to_dict(), "schema": config.schema()}


def cmd_make_synthetic(path: str, n_scores: int = 400, profiles=None, log: Logger = None) -> str:
    log = log or Logger()
    tables = synthetic.make_score_tables(profiles or synthetic.DEFAULT_PROFILES, n_scores=n_scores)
    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)
    synthetic.write_score_csv(tables, path)
    log.important(f"Wrote {len(tables)} score rows to {path}")
    return path


SCENARIO_COMMANDS = {
    "simulate": cmd_simulate,
    "equilibrium-curve": cmd_equilibrium_curve,
    "optimal-policy": cmd_optimal_policy,
    "compare-policies": cmd_compare_policies,
}


# -------------------------------------------------------------
# Sweeps
# -------------------------------------------------------------

def expand_sweep(sweeps: List[str]) -> List[List[str]]:
    """
    ["lender.R=0.1,0.2", "dynamics.nu=0.1,0.3"] -> every combination as a list of name=value overrides.
    """
    axes = []
    for sweep in sweeps:
        if "=" not in sweep:
            raise ConfigError(f"sweep must look like name=v1,v2,..., found {sweep!r}")
        key, values = sweep.split("=", 1)
        values = [v.strip() for v in values.split(",") if v.strip() != ""]
        if not values:
            raise ConfigError(f"sweep {key!r} has no values")
        axes.append([f"{key.strip()}={v}" for v in values])
    return [list(combination) for combination in itertools.product(*axes)]


def run_sweep(mode: str, config_path: str, overrides: List[str], sweeps: List[str], print_level: int,
              log: Logger) -> int:
    """
    Runs one isolated scenario per sweep combination on a thread pool. Each run gets its own config, logger and
    output sub folder. Returns the worst exit code.
    """
    variants = expand_sweep(sweeps)
    base = load_config(config_path, overrides)
    configs = []
    for i, assignments in enumerate(variants):
        folder = os.path.join(base.output.folder, f"{safe_name(base.name)}_{i:03d}")
        configs.append(load_config(config_path, overrides + assignments + [f"output.folder={json.dumps(folder)}"]))

    def job(config):
        run_log = Logger(print_level=max(print_level, Logger.WARN))
        try:
            return SCENARIO_COMMANDS[mode](config, run_log), None
        except FairDynError as e:
            return None, e
        finally:
            os.makedirs(config.output.folder, exist_ok=True)
            run_log.save_log(os.path.join(config.output.folder, config.output.log))

    results = [None] * len(configs)
    with ThreadPoolExecutor(max_workers=utils.worker_count(len(configs))) as executor:
        futures = {executor.submit(job, config): i for i, config in enumerate(configs)}
        for future in tqdm(as_completed(futures), total=len(futures), desc=mode, disable=print_level > Logger.INFO):
            results[futures[future]] = future.result()

    worst = EXIT_OK
    entries = []
    for assignments, config, (result, error) in zip(variants, configs, results):
        entry = {"overrides": assignments, "folder": config.output.folder}
        if error is None:
            entry["result"] = result
        else:
            entry["error"] = error_report(error)
            worst = max(worst, exit_code(error))
            log.error(f"{config.output.folder}: {error}")
        entries.append(entry)
    os.makedirs(base.output.folder, exist_ok=True)
    write_json({"command": mode, "runs": entries}, os.path.join(base.output.folder, "sweep.json"))
    log.important(f"Sweep of {len(configs)} runs finished, {sum('error' in e for e in entries)} failed.")
    return worst


# -------------------------------------------------------------
# Entry point
# -------------------------------------------------------------

class ArgumentParser(argparse.ArgumentParser):
    """ Reports usage errors as ConfigError so they share the validation exit code. """

    def error(self, message):
        raise ConfigError(message)


def make_parser() -> ArgumentParser:
    parser = ArgumentParser(description="Long term dynamics of fair lending policies.")
    parser.add_argument("mode", help=f"[{'|'.join(MODES)}]")
    parser.add_argument("target", nargs="?", default=None,
                        help="Scenario JSON for scenario commands, score table CSV for fit, output CSV for "
                             "make-synthetic.")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="NAME=VALUE",
                        help="Override a config field, e.g. --set dynamics.beta=0.99 or --set groups.1.alpha=0.4")
    parser.add_argument("--sweep", action="append", default=[], metavar="NAME=V1,V2",
                        help="Run every combination of the listed values on worker threads.")
    parser.add_argument("--out", type=str, default=None, help="Output folder, overrides output.folder.")
    parser.add_argument("--gnuplot", action="store_true", help="Also write gnuplot scripts.")
    parser.add_argument("--quiet", action="store_true", help="Only print warnings and errors.")
    parser.add_argument("--A-steps", dest="A_steps", type=int, default=None,
                        help="Thresholds on the equilibrium curve.")
    parser.add_argument("--bins", type=int, default=100, help="Repayment histogram bins for fit.")
    parser.add_argument("--smoothing", type=int, default=1, help="Moving average window for fit, 1 disables it.")
    parser.add_argument("--equalize-shapes", dest="equalize_shapes", action="store_true",
                        help="Give all fitted groups their average shape.")
    parser.add_argument("--equalize-group", dest="equalize_groups", action="append", default=[], metavar="A,B",
                        help="Average the shapes of the named groups only, repeatable.")
    parser.add_argument("--n-scores", dest="n_scores", type=int, default=400,
                        help="Score rows per group for make-synthetic.")
    parser.add_argument("--profile", action="append", default=[], metavar="NAME:MU:C",
                        help="Synthetic group profile, repeatable.")
    parser.add_argument("--mesh-points", dest="mesh_points", type=int, default=None,
                        help="Mu mesh of the selfcheck uniqueness scan.")
    return parser


def _scenario_overrides(args) -> List[str]:
    overrides = list(args.overrides)
    if args.out is not None:
        overrides.append(f"output.folder={json.dumps(args.out)}")
    if args.gnuplot:
        overrides.append("output.gnuplot=true")
    if args.A_steps is not None:
        overrides.append(f"solver.A_steps={args.A_steps}")
    return overrides


def _parse_profiles(profiles: List[str]):
    result = []
    for profile in profiles:
        parts = profile.rsplit(":", 2)
        if len(parts) != 3:
            raise ConfigError(f"profile must look like NAME:MU:C, found {profile!r}", field="profile")
        try:
            state = PopulationState(float(parts[1]), float(parts[2]))
        except ValueError as e:
            raise ConfigError(f"invalid profile {profile!r}: {e}", field="profile")
        result.append((parts[0], state.mu, state.c))
    return result


def _equalize_option(args):
    if args.equalize_shapes:
        return True
    if args.equalize_groups:
        return [[name.strip() for name in names.split(",")] for names in args.equalize_groups]
    return None


def run(args, log: Logger) -> int:
    mode = args.mode
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}, expected one of {', '.join(MODES)}", field="mode")

    if mode == "selfcheck":
        result = cmd_selfcheck(log, mesh_points=args.mesh_points)
        print(json.dumps(_jsonable(result), indent=2))
        return EXIT_OK if result["passed"] else EXIT_NUMERICAL

    if mode == "make-synthetic":
        if args.target is None:
            raise ConfigError("make-synthetic needs an output CSV path", field="target")
        cmd_make_synthetic(args.target, args.n_scores, _parse_profiles(args.profile) or None, log=log)
        return EXIT_OK

    if mode == "fit":
        if args.target is None:
            raise ConfigError("fit needs a score table CSV path", field="target")
        cmd_fit(args.target, args.out or ScenarioConfig().output.folder, bins=args.bins, smoothing=args.smoothing,
                equalize=_equalize_option(args), log=log)
        return EXIT_OK

    overrides = _scenario_overrides(args)
    if mode == "show-config":
        config = load_config(args.target, overrides)
        print(json.dumps(_jsonable(cmd_show_config(config)), indent=2))
        return EXIT_OK

    if args.sweep:
        return run_sweep(mode, args.target, overrides, args.sweep, log.print_level, log)

    config = load_config(args.target, overrides)
    try:
        SCENARIO_COMMANDS[mode](config, log)
    finally:
        os.makedirs(config.output.folder, exist_ok=True)
        log.save_log(os.path.join(config.output.folder, config.output.log))
    return EXIT_OK


def main(argv=None) -> int:
    """
    Parses argv, runs the command and returns the exit code.
    """
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # --help
        return int(e.code or 0)
    except ConfigError as e:
        print(json.dumps(error_report(e)), file=sys.stderr)
        return EXIT_VALIDATION

    log = Logger(print_level=Logger.WARN if args.quiet else Logger.INFO)
    try:
        return run(args, log)
    except (FairDynError, OSError) as e:
        log.error(f"{type(e).__name__}: {e}")
        print(json.dumps(_jsonable(error_report(e))), file=sys.stderr)
        return exit_code(e)
