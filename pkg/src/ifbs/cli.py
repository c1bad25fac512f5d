"""Command-line runs: validate, solve, simulate, diagnose.

Every run writes ``manifest.json`` into its output directory.  The manifest
records the full argument list, so ``ifbs replay <manifest>`` repeats a run.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .belief import BeliefError, build_local_blur_set, build_prior_set, build_simplex_grid
from .diagnostics import (
    approximation_bound,
    beta_zero_oracle,
    check_entropy_perturbation,
    refinement_monotonicity,
)
from .lp import LPError
from .model import (
    GridworldConfig,
    ModelError,
    PerceptionMDP,
    build_gridworld,
    build_three_state,
    load_builtin_config,
    validate_model,
)
from .policy import PerceptionActionPolicy
from .serialize import (
    MANIFEST_FILE,
    load_model_file,
    load_result,
    read_json,
    save_policy,
    save_result,
    write_json,
    write_lp_dump,
    write_residence_csv,
    write_table_csv,
    write_trace_jsonl,
)
from .simulator import batch_rollouts, rollout, sample_state, trial_rng
from .solver import DEFAULT_MAX_ITER, DEFAULT_TOL, build_instances, value_iteration

log = logging.getLogger("ifbs")

BUILTINS = ("three-state", "mars", "mars-8x8")
CHECKS = ("monotonicity", "entropy-bound", "beta-zero-oracle", "bound", "all")

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    """Bad command-line input; exits with status 2."""


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _add_model_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--model", help="model JSON or gridworld config JSON")
    src.add_argument("--builtin", choices=BUILTINS, help="packaged benchmark")
    p.add_argument("--spacing", type=float, default=0.2,
                   help="simplex-grid spacing for non-grid models (default 0.2)")
    p.add_argument("--gamma", type=float, help="override the discount factor")
    p.add_argument("--beta", type=float, help="override the information weight")


def _add_solver_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ifbs", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model file")
    p.add_argument("file", nargs="?", help="model JSON (same as --model)")
    p.add_argument("--model", dest="model_flag")
    p.add_argument("--out", help="write report.json here")

    p = sub.add_parser("solve", help="run value iteration and export the result")
    _add_model_args(p)
    _add_solver_args(p)
    p.add_argument("--out", default="run", help="output directory")
    p.add_argument("--dump-lp", action="store_true", help="write every final LP to lp.jsonl")
    p.add_argument("--dense-kernels", action="store_true", help="include dense kernels in policy.json")

    p = sub.add_parser("simulate", help="roll out a solved policy")
    p.add_argument("result", help="directory written by 'solve'")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--horizon", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--prior", type=int, help="initial prior index (default: the run's initial prior)")
    p.add_argument("--slices", type=_int_list, help="time steps to export (default: all)")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out", help="output directory (default: <result>/simulate)")

    p = sub.add_parser("diagnose", help="run a theory check")
    p.add_argument("check", choices=CHECKS)
    _add_model_args(p)
    p.add_argument("--result", help="solved result directory (for 'bound')")
    p.add_argument("--spacings", type=_float_list, default=[0.2, 0.1, 0.05])
    p.add_argument("--states", type=_int_list, default=[2, 3, 5, 10],
                   help="state counts for entropy-bound")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-11)
    p.add_argument("--samples", type=int, default=2000, help="density samples for 'bound'")
    p.add_argument("--out", default="diagnose", help="output directory")

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    return parser


def resolve_model(args) -> tuple[PerceptionMDP, GridworldConfig | None, str]:
    """Model, optional gridworld config and a source label from the flags."""
    config = None
    if getattr(args, "model", None):
        try:
            loaded = load_model_file(args.model)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read {args.model}: {exc}") from None
        except ModelError as exc:
            raise InputError(str(exc)) from None
        source = f"file:{args.model}"
        if isinstance(loaded, GridworldConfig):
            config = loaded
            model = build_gridworld(config)
        else:
            model = loaded
    else:
        name = getattr(args, "builtin", None) or "three-state"
        source = f"builtin:{name}"
        if name == "three-state":
            model = build_three_state()
        else:
            config = load_builtin_config(name)
            model = build_gridworld(config)
            model = PerceptionMDP(model.transition, model.cost, model.gamma, model.beta, name=name)
    model = model.with_params(gamma=args.gamma, beta=args.beta)
    problems = validate_model(model)
    if problems:
        raise InputError("invalid model: " + "; ".join(problems))
    return model, config, source


def build_sets(model: PerceptionMDP, config: GridworldConfig | None, spacing: float):
    """Belief sets plus the default initial prior.

    Gridworlds use the six-per-cell blur scheme and start from the vertex of
    the start cell; other models use a simplex grid and the uniform prior.
    """
    if config is not None:
        posteriors = build_local_blur_set(config)
        initial = np.eye(model.num_states)[config.state(config.start_cell)]
    else:
        posteriors = build_simplex_grid(model.num_states, spacing)
        initial = np.full(model.num_states, 1.0 / model.num_states)
    return build_prior_set(posteriors, model, initial=initial)


def _manifest(args, argv, **extra) -> dict:
    keys = ("model", "builtin", "spacing", "gamma", "beta", "tol", "max_iter", "seed",
            "trials", "horizon", "jobs", "out", "result", "check", "spacings", "slices")
    doc = {"command": args.command, "argv": list(argv), "version": __version__}
    doc.update({k: getattr(args, k) for k in keys if hasattr(args, k)})
    doc.update(extra)
    return doc


def _jobs(value) -> int:
    return value if value else (os.cpu_count() or 1)


def cmd_validate(args, argv) -> int:
    path = args.file or args.model_flag
    if not path:
        raise InputError("validate needs a model file")
    try:
        loaded = load_model_file(path)
    except OSError as exc:
        print(f"cannot read {path}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except json.JSONDecodeError as exc:
        print(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}", file=sys.stderr)
        return EXIT_INPUT
    except ModelError as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if isinstance(loaded, GridworldConfig):
        problems = loaded.problems()
        if not problems:
            problems = validate_model(build_gridworld(loaded))
    else:
        problems = validate_model(loaded)
    report = {"file": path, "valid": not problems, "violations": problems}
    print(json.dumps(report, indent=1))
    if args.out:
        write_json(Path(args.out) / "report.json", report)
        write_json(Path(args.out) / MANIFEST_FILE, _manifest(args, argv))
    return EXIT_OK if not problems else EXIT_FAIL


def cmd_solve(args, argv) -> int:
    model, config, source = resolve_model(args)
    sets = build_sets(model, config, args.spacing)
    out = Path(args.out)
    log.info("%s: %d posteriors, %d prior images, %d priors",
             source, sets.num_posteriors, sets.num_prior_images, sets.num_priors)
    instances = build_instances(model, sets)
    result = value_iteration(model, sets, tol=args.tol, max_iter=args.max_iter,
                             jobs=_jobs(args.jobs), instances=instances)
    save_result(result, out)
    save_policy(PerceptionActionPolicy.from_result(result), out / "policy.json", args.dense_kernels)
    if args.dump_lp:
        write_lp_dump([inst.with_costs(inst.objective_for(result.V_hat, model.beta)) for inst in instances],
                      out / "lp.jsonl")
    summary = {
        "model_source": source,
        "num_posteriors": sets.num_posteriors,
        "num_prior_images": sets.num_prior_images,
        "num_priors": sets.num_priors,
        "initial_prior": sets.initial[0],
        "initial_value": float(result.V[sets.initial[0]]),
        "iterations": result.iterations,
        "converged": result.converged,
        "final_residual": result.residuals[-1],
        "contraction_violations": result.contraction_violations(),
    }
    write_json(out / MANIFEST_FILE, _manifest(args, argv, **summary))
    print(json.dumps(summary, indent=1))
    return EXIT_OK if result.converged else EXIT_FAIL


def cmd_simulate(args, argv) -> int:
    try:
        result = load_result(args.result)
    except FileNotFoundError as exc:
        raise InputError(str(exc)) from None
    if args.trials < 1 or args.horizon < 0:
        raise InputError("trials must be >= 1 and horizon >= 0")
    if not result.converged:
        log.warning("result in %s did not converge", args.result)
    sets = result.sets
    prior = args.prior if args.prior is not None else (sets.initial[0] if sets.initial else 0)
    if not 0 <= prior < sets.num_priors:
        raise InputError(f"prior index {prior} out of range")
    out = Path(args.out) if args.out else Path(args.result) / "simulate"
    out.mkdir(parents=True, exist_ok=True)
    policy = PerceptionActionPolicy.from_result(result)
    hist, summary = batch_rollouts(result.model, policy, prior, args.horizon, args.trials,
                                   seed=args.seed, jobs=_jobs(args.jobs))
    write_residence_csv(hist, out / "residence.csv", args.slices)
    rng = trial_rng(args.seed, 0)
    s0 = sample_state(rng, sets.priors[prior])
    trace = rollout(result.model, policy, prior, s0, args.horizon, args.seed, 0, rng=rng)
    write_trace_jsonl([trace], out / "trace.jsonl")
    report = {"prior": prior, "planned_value": float(result.V[prior]), **summary.to_dict()}
    write_json(out / "report.json", report)
    write_json(out / MANIFEST_FILE, _manifest(args, argv, prior=prior))
    print(json.dumps(report, indent=1))
    return EXIT_OK


def _run_check(name, args, out: Path) -> dict:
    if name == "entropy-bound":
        reports = [check_entropy_perturbation(n, args.trials, args.seed) for n in args.states]
        return {"check": name, "passed": all(r.passed for r in reports),
                "by_num_states": [r.to_dict() for r in reports]}
    if name == "monotonicity":
        model, _, _ = resolve_model(args)
        try:
            rep = refinement_monotonicity(model, args.spacings, tol=args.tol)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        table = rep.details.pop("table")
        write_table_csv([{**r, "belief": json.dumps(r["belief"])} for r in table],
                        out / "monotonicity.csv", ["spacing", "kind", "index", "belief", "value"])
        return rep.to_dict()
    if name == "beta-zero-oracle":
        model, _, _ = resolve_model(args)
        return beta_zero_oracle(model, spacing=args.spacing, tol=args.tol).to_dict()
    if name == "bound":
        if args.result:
            result = load_result(args.result)
        else:
            model, config, _ = resolve_model(args)
            sets = build_sets(model, config, args.spacing)
            result = value_iteration(model, sets, tol=1e-8)
        rep = approximation_bound(result.model, result.sets, result, args.samples, args.seed)
        return {"check": name, "passed": bool(np.isfinite(rep.epsilon)), **rep.to_dict()}
    raise InputError(f"unknown check {name!r}")


def cmd_diagnose(args, argv) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = [c for c in CHECKS if c != "all"] if args.check == "all" else [args.check]
    reports = [_run_check(n, args, out) for n in names]
    passed = all(r["passed"] for r in reports)
    doc = reports[0] if len(reports) == 1 else {"check": "all", "passed": passed, "checks": reports}
    write_json(out / "report.json", doc)
    write_json(out / MANIFEST_FILE, _manifest(args, argv, passed=passed))
    for r in reports:
        print(f"{r['check']}: {'PASS' if r['passed'] else 'FAIL'}")
    return EXIT_OK if passed else EXIT_FAIL


def cmd_replay(args, argv) -> int:
    try:
        doc = read_json(args.manifest)
        recorded = doc["argv"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InputError(f"cannot replay {args.manifest}: {exc}") from None
    return main(recorded)


COMMANDS = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "diagnose": cmd_diagnose,
    "replay": cmd_replay,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, argv)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (LPError, BeliefError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
