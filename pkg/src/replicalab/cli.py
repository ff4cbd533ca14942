"""Batch experiment front-end.

Subcommands cover table dumps, combinatorial identity checks, design
diagnostics, the two distinguishing-task simulations, adaptive-bound
diagnostics, and the selection tournament. Reports are deterministic for a
fixed (config, seed): timestamps go to a sidecar file, per-trial randomness is
derived from the seed by counter, and output keys are sorted.

Exit codes: 0 success, 2 configuration error, 3 resource cap, 4 failed
internal self-check.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time

import numpy as np

from . import __version__
from .circuits import CircuitEnsemble
from .designs import default_probes, design_distance, frame_potential
from .linalg import ResourceBudgetError, SelfCheckError, set_memory_budget
from .perms import rising_factorial, sum_d_power_cycles, sum_d_power_even_cycles
from .tasks import (
    TaskInstance,
    adaptive_diagnostics,
    build_state,
    default_copies_per_match,
    greedy_adaptive_tree,
    haar_basis_tree,
    helstrom_tournament,
    ingster_bound_check,
    run_strategy,
    symmetrize_rotations,
    tv_bound_rhs,
)
from .trees import standard_tree
from .weingarten import (
    UnsupportedRegimeError,
    montanaro_bound_check,
    weingarten_table,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RESOURCE = 3
EXIT_SELFCHECK = 4


def _rng_for(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream,)))


def _write_report(args, payload: dict) -> None:
    doc = {
        "command": payload.pop("_command"),
        "version": __version__,
        "config": payload.pop("_config"),
        "results": payload,
    }
    if args.format == "json":
        text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    else:
        text = _to_csv(doc)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        with open(args.out + ".meta.json", "w") as fh:
            json.dump({"written_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())}, fh)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)


def _to_csv(doc: dict) -> str:
    rows = doc["results"].get("rows")
    buf = io.StringIO()
    writer = csv.writer(buf)
    if rows:
        writer.writerow(sorted(rows[0].keys()))
        for row in rows:
            writer.writerow([row[k] for k in sorted(row.keys())])
    else:
        flat = {k: v for k, v in doc["results"].items() if not isinstance(v, (dict, list))}
        writer.writerow(sorted(flat.keys()))
        writer.writerow([flat[k] for k in sorted(flat.keys())])
    return buf.getvalue()


def _load_config_defaults(argv):
    """Pull --config file values in as defaults (flags still win)."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return {}
    with open(known.config) as fh:
        return json.load(fh)


def _cmd_wg(args) -> dict:
    table = weingarten_table(args.m, args.d)
    if not table.abs_sum_identity_holds():
        raise SelfCheckError("absolute-sum identity failed")
    bound = montanaro_bound_check(args.m, args.d) if args.m <= args.d ** (2 / 3) else None
    out = table.to_json_dict()
    out["abs_sum"] = str(table.abs_sum())
    out["abs_sum_identity"] = "exact match"
    if bound is not None:
        out["decay_max_ratio"] = bound.max_ratio
    return out


def _cmd_facts(args) -> dict:
    s1 = sum_d_power_cycles(args.m, args.d)
    s2 = sum_d_power_even_cycles(args.m, args.d)
    return {
        "cycle_sum": str(s1),
        "cycle_sum_closed": str(rising_factorial(args.d, args.m)),
        "cycle_sum_status": "exact match",
        "even_cycle_sum": str(s2),
        "even_cycle_sum_status": "exact match",
    }


def _make_ensemble(args) -> CircuitEnsemble:
    if args.kind == "interleaved":
        return CircuitEnsemble(kind="interleaved", n_qubits=args.n, depth=args.depth)
    return CircuitEnsemble(kind=args.kind, n_qubits=args.n)


def _cmd_design(args) -> dict:
    ensemble = _make_ensemble(args)
    rng = _rng_for(args.seed)
    probes = default_probes(args.t, ensemble.dim, _rng_for(args.seed, 1),
                            normalized=args.normalized_probes)
    report = design_distance(ensemble, args.t, probes, args.samples, rng)
    fp_mean, fp_se, fp_ref = frame_potential(ensemble, args.t, args.pairs, _rng_for(args.seed, 2))
    return {
        "rows": [
            {
                "ensemble": ensemble.to_json(seed=args.seed),
                "t": args.t,
                "depth": args.depth if args.kind == "interleaved" else 0,
                "distance": round(report.distance_hs, 10),
                "stderr": round(report.distance_stderr, 10),
                "n_samples": report.n_samples,
                "frame_potential": round(fp_mean, 10),
                "frame_potential_stderr": round(fp_se, 10),
                "haar_frame_potential": fp_ref,
            }
        ]
    }


def _strategy_tree(name: str, task: TaskInstance, members, rng):
    k, d, depth = task.k, task.dim, task.n_rounds
    if name == "standard":
        return standard_tree(k, d, depth)
    if name == "haar-basis":
        return haar_basis_tree(k, d, depth, rng)
    if name == "greedy":
        return greedy_adaptive_tree(k, d, depth, task.epsilon, members, seed=task.seed)
    raise ValueError(f"unknown strategy {name!r}")


def _cmd_sim(args, kind: str) -> dict:
    ensemble = CircuitEnsemble(kind=args.ensemble, n_qubits=args.n,
                               depth=args.depth if args.ensemble == "interleaved" else 0)
    task = TaskInstance(kind=kind, n_qubits=args.n, k=args.k, epsilon=args.eps,
                        ensemble=ensemble, n_rounds=args.rounds, seed=args.seed)
    members = task.sub_ensemble(args.members, _rng_for(args.seed, 3))
    rng = _rng_for(args.seed, 4)
    tree = _strategy_tree(args.strategy, task, members, _rng_for(args.seed, 5))
    rows = []
    for rounds in range(1, task.n_rounds + 1):
        sub = (
            standard_tree(task.k, task.dim, rounds)
            if args.strategy == "standard"
            else _strategy_tree(args.strategy, TaskInstance(
                kind=kind, n_qubits=args.n, k=args.k, epsilon=args.eps,
                ensemble=ensemble, n_rounds=rounds, seed=args.seed), members,
                _rng_for(args.seed, 5))
        )
        bound = tv_bound_rhs(sub, task.epsilon, members=members)
        rep = run_strategy(sub, task.epsilon, members, args.trials, rng, tv_bound=bound)
        rows.append({"N": rounds, **rep.to_json_dict()})
    out = {"task": task.to_json_dict(), "strategy": args.strategy, "rows": rows}
    if kind == "mixedness" and tree.nonadaptive:
        ing = ingster_bound_check(tree, task.epsilon, members)
        out["chi2_mixture"] = ing.chi2_mixture
        out["chi2_bound"] = ing.rhs
        out["chi2_bound_holds"] = ing.holds
    return out


def _cmd_diagnostics(args) -> dict:
    ensemble = CircuitEnsemble(kind="haar", n_qubits=args.n)
    task = TaskInstance(kind="mixedness", n_qubits=args.n, k=args.k, epsilon=args.eps,
                        ensemble=ensemble, n_rounds=args.rounds, seed=args.seed)
    members = task.sub_ensemble(args.members, _rng_for(args.seed, 3))
    tree = standard_tree(task.k, task.dim, task.n_rounds)
    record = adaptive_diagnostics(tree, task.epsilon, members, args.samples, _rng_for(args.seed, 6))
    return {"task": task.to_json_dict(), **record.to_json_dict()}


def _cmd_tournament(args) -> dict:
    d = 2**args.n
    rng_states = _rng_for(args.seed, 7)
    from .weingarten import haar_sample

    candidates = [np.eye(d, dtype=complex) / d] + [
        build_state(haar_sample(d, rng_states), args.eps).rho.matrix
        for _ in range(args.alternatives)
    ]
    copies = args.copies or default_copies_per_match(args.eps)

    def one_trial(trial: int) -> bool:
        rng = _rng_for(args.seed, 100 + trial)
        true_index = int(rng.integers(0, len(candidates)))
        winner = helstrom_tournament(candidates, copies, true_index, rng)
        return winner == true_index

    if args.workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_tournament_worker,
                                    [(args.seed, t, d, args.eps, args.alternatives, copies)
                                     for t in range(args.trials)]))
    else:
        results = [one_trial(t) for t in range(args.trials)]
    wins = int(sum(results))
    from .tasks import wilson_interval

    lo, hi = wilson_interval(wins, args.trials)
    return {
        "candidates": len(candidates),
        "copies_per_match": copies,
        "trials": args.trials,
        "wins": wins,
        "success_rate": wins / args.trials,
        "wilson_lo": round(lo, 8),
        "wilson_hi": round(hi, 8),
    }


def _tournament_worker(packed) -> bool:
    seed, trial, d, eps, alternatives, copies = packed
    from .weingarten import haar_sample

    rng_states = _rng_for(seed, 7)
    candidates = [np.eye(d, dtype=complex) / d] + [
        build_state(haar_sample(d, rng_states), eps).rho.matrix for _ in range(alternatives)
    ]
    rng = _rng_for(seed, 100 + trial)
    true_index = int(rng.integers(0, len(candidates)))
    return helstrom_tournament(candidates, copies, true_index, rng) == true_index


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="replicalab",
                                     description="replica-limited state testing laboratory")
    parser.add_argument("--config", help="JSON file of default parameter values")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out", help="report path (stdout if omitted)")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--memory-budget", type=int, help="bytes; default 2 GiB")

    p = sub.add_parser("wg", help="exact moment coefficient table")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    common(p)

    p = sub.add_parser("facts", help="cycle-sum identity checks")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    common(p)

    p = sub.add_parser("design", help="moment-operator distance and frame potential")
    p.add_argument("--kind", choices=("haar", "clifford", "interleaved"), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--t", type=int, default=2)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--pairs", type=int, default=2000)
    p.add_argument("--normalized-probes", action="store_true")
    common(p)

    for name in ("sim-rqc", "sim-mixedness"):
        p = sub.add_parser(name, help=f"{name[4:]} distinguishing simulation")
        p.add_argument("--n", type=int, required=True)
        p.add_argument("--k", type=int, default=1)
        p.add_argument("--eps", type=float, required=True)
        p.add_argument("--rounds", "--N", type=int, default=4, dest="rounds")
        p.add_argument("--trials", type=int, default=2000)
        p.add_argument("--members", type=int, default=4,
                       help="finite sub-ensemble size before reflection closure")
        p.add_argument("--ensemble", choices=("haar", "clifford", "interleaved"), default="haar")
        p.add_argument("--depth", type=int, default=6)
        p.add_argument("--strategy", choices=("standard", "haar-basis", "greedy"),
                       default="standard")
        common(p)

    p = sub.add_parser("diagnostics", help="perturbation statistics and chain bound")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--rounds", type=int, default=2)
    p.add_argument("--members", type=int, default=2)
    p.add_argument("--samples", type=int, default=2000)
    common(p)

    p = sub.add_parser("tournament", help="hypothesis-selection tournament")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--alternatives", type=int, default=7)
    p.add_argument("--copies", type=int, help="copies per match; default ceil(64/eps^2)")
    p.add_argument("--trials", type=int, default=200)
    common(p)

    return parser


HANDLERS = {
    "wg": _cmd_wg,
    "facts": _cmd_facts,
    "design": _cmd_design,
    "sim-rqc": lambda a: _cmd_sim(a, "rqc"),
    "sim-mixedness": lambda a: _cmd_sim(a, "mixedness"),
    "diagnostics": _cmd_diagnostics,
    "tournament": _cmd_tournament,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        defaults = _load_config_defaults(argv)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    subparser = sub_action.choices[args.command]
    for key, value in defaults.items():
        attr = key.replace("-", "_")
        if hasattr(args, attr) and subparser.get_default(attr) == getattr(args, attr):
            setattr(args, attr, value)
    if getattr(args, "memory_budget", None):
        set_memory_budget(args.memory_budget)
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("command", "config")}
    try:
        payload = HANDLERS[args.command](args)
    except (ValueError, UnsupportedRegimeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceBudgetError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except SelfCheckError as exc:
        print(f"self-check failed: {exc}", file=sys.stderr)
        return EXIT_SELFCHECK
    payload["_command"] = args.command
    payload["_config"] = config
    _write_report(args, payload)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
