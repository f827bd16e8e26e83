"""Command-line entry point: ``fcfl <command> ...``.

Exit codes: 0 success, 1 invalid arguments, 2 experiment failure (runs
that did not converge, a failed property check).  Diagnostics go to
standard error; results go to ``--out`` (standard output by default).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import bounds, experiments, rfid
from .engine import Engine, InvariantViolation, make_config
from .experiments import ExperimentFailure
from .graph import build, parse_graph_spec

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


@dataclass
class Outcome:
    rows: list
    summary: dict = field(default_factory=dict)
    failed: Optional[str] = None


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.generic):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


# -- commands -----------------------------------------------------------------------------

def cmd_sim(a) -> Outcome:
    g = build(parse_graph_spec(a.graph, a.seed))
    D = a.D if a.D is not None else g.max_degree + 1
    variant = a.variant
    if variant == "fcfl" and a.M is None:
        raise UsageError("--M is required for the fcfl variant")
    cfg = make_config(variant, g, D, a.seed, M=a.M, b=a.b)
    eng = Engine(g, cfg, check=not a.no_check, keep_sets=False)
    try:
        res, trace = eng.run_until_proper(a.max_slots)
    except InvariantViolation as exc:
        return Outcome([], {}, f"invariant violated: {exc}")
    rows = list(trace.records())
    summary = {"n": g.n, "edges": g.n_edges, "max_degree": g.max_degree, "D": D,
               "R": res.R, "tau_star": res.tau_star, "slots_run": res.slots_run,
               "converged": res.converged, "colours": eng.colours.tolist()}
    return Outcome(rows, summary, None if res.converged else f"no proper colouring within {res.slots_run} slots")


def cmd_bounds(a) -> Outcome:
    rep = bounds.eval_formula(a.formula, N=a.N, delta=a.delta, b=a.b, eps=a.eps, tau=a.tau, Z=a.Z,
                              M=a.M, D=a.D)
    d = rep.to_dict()
    row = {"formula": d["formula_id"], "value": d["value"], "log_value": d.get("log_value"),
           "valid": d["valid"]}
    return Outcome([row], d)


def cmd_drift(a) -> Outcome:
    rows = []
    for N in a.N:
        for p in experiments.drift_curve(N, a.trials, a.seed):
            rows.append({"N": N, "Z": p.Z, "drift": p.drift, "stderr": p.stderr, "trials": p.trials,
                         "exact": p.exact})
    return Outcome(rows)


def cmd_ratio(a) -> Outcome:
    rows = experiments.ratio_experiment(a.kinds.split(","), a.N, a.runs, a.seed, jobs=a.jobs, eps=a.eps)
    return Outcome(rows)


def cmd_perturb(a) -> Outcome:
    res = experiments.perturbation_experiment(
        a.runs, a.seed, n=a.n, thin=a.thin, fraction=a.fraction,
        reset_permanence=a.reset_permanence, beb_runs=a.beb_runs, cap=a.max_slots, jobs=a.jobs)
    rows = [{"run": i, "cold_slots": c, "recovery_slots": r}
            for i, (c, r) in enumerate(zip(res["cold_slots"], res["recovery_slots"]))]
    summary = {k: v for k, v in res.items() if not isinstance(v, list)}
    return Outcome(rows, summary)


def cmd_rfid(a) -> Outcome:
    res = rfid.inventory_batch(a.protocol, a.graph, a.tags, a.runs, a.seed, D=a.D, S_low=a.S_low,
                               jobs=a.jobs)
    rows = [{"run": i, "slots_first": s} for i, s in enumerate(res.pop("slots_first"))]
    failed = None if res["completed"] == res["runs"] else f"{res['runs'] - res['completed']} runs did not finish"
    return Outcome(rows, res, failed)


def cmd_selftest(a) -> Outcome:
    rows = []

    def record(name, ok, detail=""):
        rows.append({"check": name, "ok": bool(ok), "detail": detail})

    for b in (0.1, 0.25, 0.5, 0.75, 1.0):
        failed = bounds.lemma5_checks(b)["failed"]
        record(f"dt identities b={b}", not failed, ";".join(map(str, failed)))
    a_star = bounds.alpha_star()
    record("alpha_star in (0.5, 1)", 0.5 < a_star < 1, repr(a_star))
    mono = all(bounds.lemma6_monotone(N, d, b, a_star) for N in (10, 50, 200) for d in (1, 5, 9, N - 1)
               for b in (0.5, 1.0))
    record("Z-map monotone up to alpha_star*N", mono)
    r = bounds.lemma7_check(range(1, 201), range(1, 51), [0.1, 0.25, 0.5, 0.75, 1.0])
    record("one-epoch clean bound", not r["violations"] and not r["aux_failures"],
           f"points={r['points']} max_ratio={r['max_ratio']!r}")
    cases = [("complete:12", "simplified_fcfl", None, None), ("kpartite:4:24", "cfl", None, 0.5),
             ("er:30:0.2", "fcfl", 7, 0.3), ("bipartite:20", "learning_beb", None, None),
             ("complete:8", "motskin", None, None)]
    for spec, variant, M, b in cases:
        g = build(parse_graph_spec(spec, 3))
        ok, detail = True, ""
        for seed in range(5):
            eng = Engine(g, make_config(variant, g, g.max_degree + 1, seed, M=M, b=b))
            try:
                eng.run(300)
            except InvariantViolation as exc:
                ok, detail = False, str(exc)
                break
        record(f"engine invariants {variant} on {spec}", ok, detail)
    bad = [r["check"] for r in rows if not r["ok"]]
    return Outcome(rows, {"checks": len(rows), "failed": len(bad)},
                   f"failed checks: {', '.join(bad)}" if bad else None)


# -- output ----------------------------------------------------------------------------------

def render(outcome: Outcome, fmt: str, command: str, inputs: dict) -> str:
    if fmt == "json":
        doc = {"command": command, "inputs": inputs, "summary": outcome.summary, "rows": outcome.rows}
        return json.dumps(_clean(doc), indent=2) + "\n"
    if fmt == "jsonl":
        return "".join(json.dumps(_clean(r), separators=(",", ":")) + "\n" for r in outcome.rows)
    buf = io.StringIO()
    rows = outcome.rows or [outcome.summary]
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys and not isinstance(r[k], (list, dict))]
    w = csv.DictWriter(buf, keys, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in keys})
    return buf.getvalue()


# -- parser ----------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--out", help="output file (default: standard output)")
    common.add_argument("--format", choices=("csv", "jsonl", "json"), default="json")
    common.add_argument("--jobs", type=int, default=1, help="worker processes (results do not depend on it)")

    def stochastic(p, **kw):
        p.add_argument("--seed", type=int, required=True)

    p = _Parser(prog="fcfl", description="Decentralised colouring with resets: simulation, bounds, experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("sim", parents=[common], help="run one network until its colouring is proper")
    s.add_argument("--graph", required=True, help="complete:N, kpartite:K:N, bipartite:N, er:N:P, "
                                                  "multipartite:a,b,..., thinned:F:<graph>")
    s.add_argument("--D", type=int, help="number of colours (default max degree + 1)")
    s.add_argument("--b", type=float, help="learning rate")
    s.add_argument("--M", type=int, help="reset period in slots")
    s.add_argument("--variant", default="fcfl",
                   choices=("fcfl", "simplified_fcfl", "cfl", "learning_beb", "motskin"))
    s.add_argument("--max-slots", type=int)
    s.add_argument("--no-check", action="store_true", help="skip per-slot invariant checks")
    stochastic(s)
    s.set_defaults(func=cmd_sim)

    bp = sub.add_parser("bounds", help="evaluate analytic bounds")
    bsub = bp.add_subparsers(dest="action", required=True, parser_class=_Parser)
    be = bsub.add_parser("eval", parents=[common], help="evaluate one named formula")
    be.add_argument("--formula", required=True, choices=bounds.FORMULAS)
    for name, typ in (("N", int), ("delta", int), ("eps", float), ("tau", int), ("Z", float),
                      ("M", int), ("D", int)):
        be.add_argument(f"--{name}", type=typ)
    be.add_argument("--b", type=float, default=1.0)
    be.set_defaults(func=cmd_bounds)

    d = sub.add_parser("drift", parents=[common], help="drift of the non-permanent count on complete graphs")
    d.add_argument("--N", type=_int_list, default=[2, 3, 4, 5, 6, 10, 20])
    d.add_argument("--trials", type=int, default=20000)
    stochastic(d)
    d.set_defaults(func=cmd_drift)

    r = sub.add_parser("ratio", parents=[common], help="measured convergence over the slot bound")
    r.add_argument("--kinds", default="complete,bipartite,12-partite")
    r.add_argument("--N", type=_int_list, default=[96, 192, 384, 768])
    r.add_argument("--runs", type=int, default=1000)
    r.add_argument("--eps", type=float, default=0.5)
    stochastic(r)
    r.set_defaults(func=cmd_ratio)

    q = sub.add_parser("perturb", parents=[common], help="recovery after recolouring a few vertices")
    q.add_argument("--runs", type=int, default=1000)
    q.add_argument("--n", type=int, default=60)
    q.add_argument("--thin", type=float, default=0.2)
    q.add_argument("--fraction", type=float, default=0.02)
    q.add_argument("--beb-runs", type=int, default=50)
    q.add_argument("--max-slots", type=int, help="slot cap per run (default 10^4 * n)")
    q.add_argument("--reset-permanence", action="store_true",
                   help="perturbed vertices also lose their permanent status")
    stochastic(q)
    q.set_defaults(func=cmd_perturb)

    f = sub.add_parser("rfid", parents=[common], help="tag inventory with FCFL tags or framed Aloha")
    f.add_argument("--protocol", choices=("fcfl", "bfsa", "dfsa"), required=True)
    f.add_argument("--tags", type=int, required=True)
    f.add_argument("--graph", default="complete", help="complete or multipartite:K")
    f.add_argument("--D", type=int, help="superframe size (default: max degree + 1 for fcfl, 256 otherwise)")
    f.add_argument("--S-low", dest="S_low", type=int,
                   help="superframes between QueryAdjust commands (default max degree + 1)")
    f.add_argument("--runs", type=int, default=100)
    stochastic(f)
    f.set_defaults(func=cmd_rfid)

    t = sub.add_parser("selftest", parents=[common], help="analytic checks and engine invariant suite")
    t.set_defaults(func=cmd_selftest)
    return p


def _inputs(a) -> dict:
    skip = {"func", "out", "format", "jobs"}
    return {k: v for k, v in sorted(vars(a).items()) if k not in skip}


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    for name in ("runs", "trials", "tags", "jobs"):
        if getattr(a, name, 1) is not None and getattr(a, name, 1) < 1:
            parser.error(f"--{name} must be >= 1")
    command = a.command + (f" {a.action}" if getattr(a, "action", None) else "")
    try:
        outcome = a.func(a)
    except (UsageError, ValueError) as exc:
        sys.stderr.write(f"fcfl: error: {exc}\n")
        return EXIT_USAGE
    except ExperimentFailure as exc:
        sys.stderr.write(f"fcfl: experiment failed: {exc}\n")
        return EXIT_FAILED
    text = render(outcome, a.format, command, _inputs(a))
    if a.out:
        with open(a.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if outcome.failed:
        sys.stderr.write(f"fcfl: experiment failed: {outcome.failed}\n")
        return EXIT_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
