"""Command-line harness.

Machine-readable JSON goes to stdout, the human summary to stderr, CSV
only where explicitly requested via ``--out``.  Given a full flag set
(including the seed) every command's stdout is byte-for-byte
reproducible; wall-clock timing appears only in the stderr summary.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 I/O
error.
"""

from __future__ import annotations

import argparse
import csv
import importlib.resources
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, exact, lm, runtime, verify
from .machines import Pfa2, issue_errors, load_machine, validate_pfa, validate_qcfa
from .runtime import RunConfig, RunStats

RUN_CSV_HEADER = [
    "command", "machine", "input", "seed", "trials", "max_steps",
    "accepts", "rejects", "timeouts", "accept_rate", "accept_ci_lo", "accept_ci_hi",
    "steps_mean", "total_steps", "total_iterations",
]

SWEEP_CSV_HEADER = [
    "row_type", "l", "n", "input", "trials",
    "accepts", "rejects", "timeouts",
    "accept_rate", "accept_ci_lo", "accept_ci_hi",
    "steps_mean", "steps_ci_lo", "steps_ci_hi", "slope",
]


class UsageError(ValueError):
    pass


def load_schema() -> dict:
    text = (importlib.resources.files("twowayfa") / "schemas" / "experiment_record.schema.json").read_text()
    return json.loads(text)


def parse_machine_spec(spec: str, epsilon: float | None, k: int | None):
    """Resolve a machine spec: qcfa-lm[:eps] | pfa-lm[:k] | file:path."""
    if spec.startswith("file:"):
        path = spec[len("file:"):]
        machine = load_machine(path)
        report = validate_pfa(machine) if isinstance(machine, Pfa2) else validate_qcfa(machine)
        errors = issue_errors(report)
        if errors:
            raise UsageError(f"machine file {path!r} is invalid: {errors[0]}")
        return machine, {"path": path}
    if spec.startswith("qcfa-lm"):
        rest = spec[len("qcfa-lm"):]
        if rest.startswith(":"):
            epsilon = float(rest[1:])
        elif rest:
            raise UsageError(f"bad machine spec {spec!r}")
        if epsilon is None and k is None:
            raise UsageError("qcfa-lm needs an error bound (qcfa-lm:EPS or --epsilon) or --k")
        if epsilon is not None and k is not None:
            raise UsageError("give qcfa-lm an epsilon or a k, not both")
        machine = lm.build_lm_qcfa(epsilon, k=k)
        params = {"epsilon": epsilon, "k": k if k is not None else lm.k_for_epsilon(epsilon)}
        return machine, params
    if spec.startswith("pfa-lm"):
        rest = spec[len("pfa-lm"):]
        if rest.startswith(":"):
            k = int(rest[1:])
        elif rest:
            raise UsageError(f"bad machine spec {spec!r}")
        if k is None:
            raise UsageError("pfa-lm needs a flip count (pfa-lm:K or --k)")
        return lm.build_lm_pfa(k), {"k": k}
    raise UsageError(f"unknown machine spec {spec!r} (expected qcfa-lm:EPS, pfa-lm:K or file:PATH)")


def check_input_word(machine, word: str) -> None:
    for ch in word:
        if ch not in machine.alphabet:
            raise UsageError(f"input symbol {ch!r} outside machine alphabet {machine.alphabet}")


def stats_to_json(stats: RunStats) -> dict:
    return {
        "trials": stats.trials,
        "accepts": stats.accepts,
        "rejects": stats.rejects,
        "timeouts": stats.timeouts,
        "accept_rate": stats.accept_rate,
        "accept_ci": list(stats.accept_ci),
        "reject_rate": stats.reject_rate,
        "reject_ci": list(stats.reject_ci),
        "steps_mean": stats.steps_mean,
        "steps_median": stats.steps_median,
        "steps_p90": stats.steps_p90,
        "steps_max": stats.steps_max,
        "total_steps": stats.total_steps,
        "total_iterations": stats.total_iterations,
    }


def base_record(command: str, spec: str, machine, params: dict) -> dict:
    kind = "pfa2" if isinstance(machine, Pfa2) else "qcfa2"
    return {
        "tool": "twowayfa",
        "version": __version__,
        "command": command,
        "machine": {"spec": spec, "kind": kind, "params": params},
    }


def emit(record: dict, summary: str, elapsed: float) -> None:
    json.dump(record, sys.stdout, indent=1)
    sys.stdout.write("\n")
    sys.stderr.write(f"{summary} [{elapsed:.2f}s]\n")


def append_csv(path: str, header: list[str], rows: list[list]) -> None:
    fresh = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if fresh:
            writer.writerow(header)
        writer.writerows(rows)


def cmd_run(args) -> int:
    t0 = time.monotonic()
    machine, params = parse_machine_spec(args.machine, args.epsilon, args.k)
    check_input_word(machine, args.input)
    cfg = RunConfig(seed=args.seed, trials=args.trials, max_steps=args.max_steps,
                    machine_id=args.machine, input=args.input)
    stats = runtime.run_trials(machine, args.input, cfg, engine=args.engine)
    record = base_record("run", args.machine, machine, params)
    record.update({
        "input": args.input,
        "seed": args.seed,
        "trials": args.trials,
        "max_steps": args.max_steps,
        "engine": args.engine,
        "stats": stats_to_json(stats),
    })
    if args.out:
        append_csv(args.out, RUN_CSV_HEADER, [[
            "run", args.machine, args.input, args.seed, args.trials, args.max_steps,
            stats.accepts, stats.rejects, stats.timeouts,
            stats.accept_rate, stats.accept_ci[0], stats.accept_ci[1],
            stats.steps_mean, stats.total_steps, stats.total_iterations,
        ]])
    emit(record, f"{args.machine} on {args.input!r}: "
                 f"accept {stats.accepts}/{stats.trials}, reject {stats.rejects}, timeout {stats.timeouts}",
         time.monotonic() - t0)
    return 0


def cmd_analyze(args) -> int:
    t0 = time.monotonic()
    machine, params = parse_machine_spec(args.machine, args.epsilon, args.k)
    check_input_word(machine, args.input)
    record = base_record("analyze", args.machine, machine, params)
    record.update({"input": args.input, "max_steps": args.max_steps, "tail_tol": args.tail_tol})
    if isinstance(machine, Pfa2):
        res = exact.absorption_probs(exact.build_config_chain(machine, args.input))
        record["exact"] = {
            "p_accept": res.p_accept,
            "p_reject": res.p_reject,
            "p_diverge": res.p_diverge,
            "expected_steps": res.expected_steps,
        }
        summary = (f"{args.machine} on {args.input!r}: p_accept={res.p_accept:.9f} "
                   f"p_reject={res.p_reject:.9f} p_diverge={res.p_diverge:.3g} "
                   f"E[steps]={res.expected_steps}")
    else:
        res = exact.qcfa_forward(machine, args.input, tail_tol=args.tail_tol, max_steps=args.max_steps)
        record["exact"] = {
            "p_accept": res.accept,
            "p_reject": res.reject,
            "residual": res.residual,
            "steps": res.steps,
        }
        summary = (f"{args.machine} on {args.input!r}: accept={res.accept:.9f} "
                   f"reject={res.reject:.9f} residual={res.residual:.3g} after {res.steps} steps")
    emit(record, summary, time.monotonic() - t0)
    return 0


def _sweep_inputs(family: str, sizes: list[int], delta: int) -> list[tuple[int, str]]:
    out = []
    for n in sizes:
        if family == "member":
            word = "a" * n + "c" + "a" * n
        else:
            word = "a" * n + "c" + "a" * (n + delta)
        out.append((n, word))
    return out


def cmd_sweep(args) -> int:
    t0 = time.monotonic()
    if args.trials < 1:
        raise UsageError("sweep needs trials >= 1")
    machine, params = parse_machine_spec(args.machine, args.epsilon, args.k)
    sizes = parse_sizes(args.sizes)
    rows_json = []
    csv_rows = []
    xs, ys = [], []
    for n, word in _sweep_inputs(args.family, sizes, args.delta):
        check_input_word(machine, word)
        cfg = RunConfig(seed=args.seed, trials=args.trials, max_steps=args.max_steps)
        results = runtime.collect_trajectories(machine, word, cfg, engine=args.engine)
        stats = runtime.aggregate(results)
        l = len(word)
        ci = mean_steps_ci(results)
        rows_json.append({
            "l": l, "n": n, "input": word, "trials": stats.trials,
            "accepts": stats.accepts, "rejects": stats.rejects, "timeouts": stats.timeouts,
            "accept_rate": stats.accept_rate, "accept_ci": list(stats.accept_ci),
            "steps_mean": stats.steps_mean,
            "steps_ci": list(ci) if ci[0] is not None else None,
        })
        csv_rows.append(["size", l, n, word, stats.trials,
                         stats.accepts, stats.rejects, stats.timeouts,
                         stats.accept_rate, stats.accept_ci[0], stats.accept_ci[1],
                         stats.steps_mean, ci[0], ci[1], ""])
        if stats.steps_mean:
            xs.append(l)
            ys.append(stats.steps_mean)
    if isinstance(machine, Pfa2):
        slope_kind = "log2steps-vs-l"
        slope = fit_slope(xs, [math.log2(y) for y in ys]) if len(xs) >= 2 else None
    else:
        slope_kind = "loglog-steps-vs-l"
        slope = fit_slope([math.log(x) for x in xs], [math.log(y) for y in ys]) if len(xs) >= 2 else None
    csv_rows.append(["fit", "", "", "", "", "", "", "", "", "", "", "", "", "", slope])
    record = base_record("sweep", args.machine, machine, params)
    record.update({
        "seed": args.seed,
        "trials": args.trials,
        "max_steps": args.max_steps,
        "engine": args.engine,
        "sweep": {
            "family": args.family,
            "sizes": sizes,
            "delta": args.delta,
            "rows": rows_json,
            "slope": slope,
            "slope_kind": slope_kind,
        },
    })
    if args.out:
        append_csv(args.out, SWEEP_CSV_HEADER, csv_rows)
    emit(record, f"sweep {args.family} sizes {sizes}: {slope_kind} slope = {slope}",
         time.monotonic() - t0)
    return 0


def mean_steps_ci(results, z: float = 1.959963984540054):
    """Normal-approximation CI on the mean halting-step count."""
    steps = np.array([r.steps for r in results if r.outcome != "timeout"], dtype=np.float64)
    if steps.size < 2:
        return (None, None)
    half = z * float(steps.std(ddof=1)) / math.sqrt(steps.size)
    mean = float(steps.mean())
    return (mean - half, mean + half)


def fit_slope(xs: list[float], ys: list[float]) -> float:
    return float(np.polyfit(np.asarray(xs), np.asarray(ys), 1)[0])


def parse_sizes(text: str) -> list[int]:
    """Sizes as 'lo:hi' (inclusive) or a comma list."""
    if ":" in text:
        lo, hi = text.split(":", 1)
        sizes = list(range(int(lo), int(hi) + 1))
    else:
        sizes = [int(t) for t in text.split(",") if t]
    if not sizes or any(s < 0 for s in sizes):
        raise UsageError(f"bad sizes {text!r}")
    return sizes


def cmd_verify(args) -> int:
    t0 = time.monotonic()
    results = verify.run_checks(args.only)
    for r in results:
        marker = "PASS" if r.passed else "FAIL"
        known = " (known defect)" if r.name in verify.KNOWN_DEFECT_CHECKS and not r.passed else ""
        sys.stderr.write(f"[{marker}] {r.name}: {r.value}{known}\n")
    record = {
        "tool": "twowayfa",
        "version": __version__,
        "command": "verify",
        "machine": {"spec": "builtin-suite", "kind": "none", "params": {}},
        "checks": [{"name": r.name, "passed": r.passed, "value": r.value} for r in results],
    }
    failed = [r for r in results if not r.passed]
    json.dump(record, sys.stdout, indent=1)
    sys.stdout.write("\n")
    sys.stderr.write(f"{len(results) - len(failed)}/{len(results)} checks passed "
                     f"[{time.monotonic() - t0:.2f}s]\n")
    return 1 if failed else 0


def cmd_formulas(args) -> int:
    t0 = time.monotonic()
    try:
        report = lm.formula_report(d=args.d, n=args.n, m=args.m, k=args.k, epsilon=args.epsilon)
    except ValueError as e:
        raise UsageError(str(e)) from e
    record = {
        "tool": "twowayfa",
        "version": __version__,
        "command": "formulas",
        "machine": {"spec": "formulas", "kind": "none", "params": {}},
        "formulas": report,
    }
    emit(record, f"{len(report)} formulas evaluated", time.monotonic() - t0)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twowayfa",
        description="Simulate, exactly analyze, and verify two-way probabilistic "
                    "and quantum-classical finite automata.",
    )
    parser.add_argument("--version", action="version", version=f"twowayfa {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_machine_flags(p):
        p.add_argument("--machine", required=True,
                       help="qcfa-lm:EPS, pfa-lm:K, qcfa-lm/pfa-lm with --epsilon/--k, or file:PATH")
        p.add_argument("--epsilon", type=float, default=None, help="error bound for qcfa-lm")
        p.add_argument("--k", type=int, default=None, help="flip count for pfa-lm (or qcfa-lm override)")
        p.add_argument("--schema", action="store_true",
                       help="print the JSON schema for output records and exit")

    p_run = sub.add_parser(
        "run",
        help="Monte Carlo trials of a machine on one input",
        description="Runs seeded trials and prints one experiment record as JSON.  "
                    "With --out, appends one CSV row with columns: "
                    + ",".join(RUN_CSV_HEADER) + ".")
    add_machine_flags(p_run)
    p_run.add_argument("--input", required=True, help="input word over the machine alphabet")
    p_run.add_argument("--trials", type=int, default=1000)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--max-steps", type=int, default=10**6)
    p_run.add_argument("--engine", choices=("auto", "python", "compiled"), default="auto")
    p_run.add_argument("--out", default=None, help="append one CSV row to this file")
    p_run.set_defaults(fn=cmd_run)

    p_an = sub.add_parser("analyze", help="exact accept/reject probabilities on one input")
    add_machine_flags(p_an)
    p_an.add_argument("--input", required=True)
    p_an.add_argument("--tail-tol", type=float, default=1e-9,
                      help="stop the quantum forward analysis at this residual mass")
    p_an.add_argument("--max-steps", type=int, default=10**7)
    p_an.set_defaults(fn=cmd_analyze)

    p_sw = sub.add_parser(
        "sweep",
        help="scaling sweep over input sizes, with a growth-fit summary",
        description="Member inputs are a^n c a^n (length l = 2n+1); nonmember inputs are "
                    "a^n c a^(n+delta) (length l = 2n+delta+1); --sizes gives the flank "
                    "lengths n.  CSV columns: " + ",".join(SWEEP_CSV_HEADER) + ".  The final "
                    "'fit' row carries the growth slope: log(mean steps) vs log(l) for a "
                    "2QCFA, log2(mean steps) vs l for a 2PFA.")
    add_machine_flags(p_sw)
    p_sw.add_argument("--family", choices=("member", "nonmember"), required=True)
    p_sw.add_argument("--sizes", required=True, help="flank lengths n, as 'lo:hi' or comma list")
    p_sw.add_argument("--delta", type=int, default=1, help="flank-length gap for the nonmember family")
    p_sw.add_argument("--trials", type=int, default=200)
    p_sw.add_argument("--seed", type=int, default=0)
    p_sw.add_argument("--max-steps", type=int, default=10**6)
    p_sw.add_argument("--engine", choices=("auto", "python", "compiled"), default="auto")
    p_sw.add_argument("--out", default=None, help="write the sweep CSV here")
    p_sw.set_defaults(fn=cmd_sweep)

    p_ver = sub.add_parser("verify", help="run the named invariant suite")
    p_ver.add_argument("--only", nargs="*", default=None, help="run only these checks")
    p_ver.set_defaults(fn=cmd_verify)

    p_f = sub.add_parser("formulas", help="evaluate the closed-form probability formulas")
    p_f.add_argument("--d", type=int, default=None, help="flank gap n-m")
    p_f.add_argument("--n", type=int, default=None)
    p_f.add_argument("--m", type=int, default=None)
    p_f.add_argument("--k", type=int, default=None)
    p_f.add_argument("--epsilon", type=float, default=None)
    p_f.add_argument("--schema", action="store_true",
                     help="print the JSON schema for output records and exit")
    p_f.set_defaults(fn=cmd_formulas)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "schema", False):
        json.dump(load_schema(), sys.stdout, indent=1)
        sys.stdout.write("\n")
        return 0
    try:
        return args.fn(args)
    except UsageError as e:
        sys.stderr.write(f"usage error: {e}\n")
        return 2
    except (ValueError, KeyError) as e:
        sys.stderr.write(f"usage error: {e}\n")
        return 2
    except OSError as e:
        sys.stderr.write(f"I/O error: {e}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
