"""Command-line front end.

Subcommands: convert, simulate, lqr, objectives (alias evaluate), optimize,
reproduce.  Structured results go to stdout as JSON; plot data goes to CSV
files under the output directory (``--output-dir``, else ``$FOLQR_OUTPUT_DIR``,
else ``./folqr_out``).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import EXAMPLES, RunConfig
from .design import FreqConfig, LqrDesignProblem, evaluate
from .lqr import LqrError, design, fractional_stability
from .model import ModelError, SingularResolventError, parse_fractional_tf, to_pseudo_state_space
from .pesa2 import PesaConfig
from .reproduce import (
    CI_PESA,
    format_table,
    phase_a,
    phase_a_verdict,
    phase_b,
    rows_to_csv,
    run_optimization,
)
from .simulate import PerturbationSpec, SimConfig, SimulationError, simulate_closed_loop, step_metrics

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_MODULE = 3


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(f"cannot serialize {type(v).__name__}")


# -- configuration -----------------------------------------------------------

def _add_run_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run configuration (overrides --config)")
    g.add_argument("--config", help="JSON run configuration")
    g.add_argument("--system", help="preset name or fractional TF text")
    g.add_argument("--form", choices=["bottom_row", "top_row"])
    g.add_argument("--objectives", help="J1-J2, J2-J3, J1-J3 or J1-J2-J3")
    g.add_argument("--h", type=float, help="simulation step (s)")
    g.add_argument("--horizon", type=float, help="simulation horizon (s)")
    g.add_argument("--memory", type=int, help="GL memory length in steps")
    g.add_argument("--band", type=float, help="settling band fraction")
    g.add_argument("--s1", type=float)
    g.add_argument("--s2", type=float)
    g.add_argument("--iae", action="store_true", help="drop the time weight from the J1 error term")
    g.add_argument("--stepping", choices=["fractional", "integer"])
    g.add_argument("--perturbation-tf", help="block L(s) inserted in series during simulation")
    g.add_argument("--perturbation-side", choices=["input", "output"])
    g.add_argument("--freq-lo", type=float)
    g.add_argument("--freq-hi", type=float)
    g.add_argument("--freq-points", type=int)
    g.add_argument("--mode", choices=["fractional", "literal"], help="resolvent mode")
    g.add_argument("--l-source", help="'return_ratio' or a TF text for the J3 loop")
    g.add_argument("--population", type=int)
    g.add_argument("--generations", type=int)
    g.add_argument("--capacity", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--search-h", type=float, help="simulation step used while optimizing")
    g.add_argument("--report-horizon", type=float, help="horizon for reported settling times")
    g.add_argument("--output-dir")


def build_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    sim_kw = {k: v for k, v in {
        "h": args.h, "horizon": args.horizon, "memory": args.memory, "band": args.band,
        "s1": args.s1, "s2": args.s2, "stepping": args.stepping,
        "perturbation_side": args.perturbation_side,
    }.items() if v is not None}
    if args.iae:
        sim_kw["use_time_weight"] = False
    if args.perturbation_tf:
        sim_kw["perturbed"] = True
        sim_kw["perturbation"] = PerturbationSpec("external_tf", args.perturbation_tf)
    freq = cfg.freq
    freq_kw = {k: v for k, v in {"lo": args.freq_lo, "hi": args.freq_hi,
                                 "points": args.freq_points, "mode": args.mode}.items() if v is not None}
    if args.l_source:
        freq_kw["perturbation"] = (PerturbationSpec() if args.l_source == "return_ratio"
                                   else PerturbationSpec("external_tf", args.l_source))
    pesa_kw = {k: v for k, v in {"population": args.population, "generations": args.generations,
                                 "capacity": args.capacity, "seed": args.seed}.items() if v is not None}
    top = {k: v for k, v in {"system": args.system, "form": args.form, "objectives": args.objectives,
                             "search_h": args.search_h, "report_horizon": args.report_horizon,
                             "output_dir": args.output_dir}.items() if v is not None}
    return cfg.replace(
        sim=cfg.sim.replace(**sim_kw),
        freq=FreqConfig(**{**freq.__dict__, **freq_kw}),
        pesa=PesaConfig.from_dict({**cfg.pesa.to_dict(), **pesa_kw}),
        **top,
    )


def _weights(args, n_states: int):
    q = np.ones(n_states) if args.q is None else np.array(args.q, dtype=float)
    if q.size != n_states:
        raise ValueError(f"--q needs {n_states} values, got {q.size}")
    return q, args.r


# -- commands ----------------------------------------------------------------

def cmd_convert(args) -> int:
    ss = to_pseudo_state_space(parse_fractional_tf(args.tf), args.form)
    print(_dump(ss.to_dict()))
    return EXIT_OK


def cmd_lqr(args) -> int:
    cfg = build_config(args)
    ss = cfg.model()
    q, r = _weights(args, ss.n_states)
    sol = design(ss, q, r)
    A_cl = ss.A - ss.B @ sol.k
    integer = cfg.sim.stepping == "integer"
    verdict = fractional_stability(A_cl, 1.0 if integer else ss.base_order,
                                   np.ones(ss.n_states) if integer else ss.orders)
    print(_dump({**sol.to_dict(), "stability": verdict.to_dict()}))
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = build_config(args)
    ss = cfg.model()
    q, r = _weights(args, ss.n_states)
    sol = design(ss, q, r)
    sim = cfg.report_sim()
    rec = simulate_closed_loop(ss, sol.k, sol.nbar, sim)
    m = step_metrics(rec, sim.band, sim.s1, sim.s2, sim.use_time_weight)
    out = cfg.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    path = out / (args.csv or "step_response.csv")
    rec.to_csv(path)
    print(_dump({"metrics": m.to_dict(), "K": sol.k.ravel(), "nbar": sol.nbar, "csv": str(path)}))
    return EXIT_OK


def cmd_objectives(args) -> int:
    cfg = build_config(args)
    ss = cfg.model()
    q, r = _weights(args, ss.n_states)
    ev = evaluate(ss, q, r, cfg.report_sim(), cfg.freq)
    if ev.error and ev.lqr is None:
        raise LqrError(ev.error)
    out = cfg.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    doc = ev.to_dict()
    if ev.record is not None:
        path = out / (args.csv or "step_response.csv")
        ev.record.to_csv(path)
        doc["csv"] = str(path)
    doc["grid"] = {"lo": cfg.freq.lo, "hi": cfg.freq.hi, "points": cfg.freq.points,
                   "mode": cfg.freq.mode}
    print(_dump(doc))
    return EXIT_OK


def _front_doc(problem, archive) -> dict:
    members = []
    for m in archive.members:
        q, r = problem.decode(m.genes)
        members.append({
            "genes": [float(g) for g in m.genes],
            "q_diag": q.tolist(),
            "r": r,
            "objectives": problem.to_raw(m.objectives),
        })
    return {
        "objective_names": list(problem.objectives),
        "orientation": problem.orientation,
        "gene_names": problem.gene_names,
        "members": members,
    }


def write_front(out: Path, problem, archive, best_doc: Optional[dict] = None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    doc = _front_doc(problem, archive)
    (out / "front.json").write_text(_dump(doc) + "\n")
    names = list(problem.objectives)
    raw = np.array([[m["objectives"][n] for n in names] for m in doc["members"]], dtype=float)
    with open(out / "front.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(problem.gene_names + [f"Q{i + 1}" for i in range(problem.n_genes - 1)] + ["R"] + names)
        for m, f in zip(doc["members"], raw):
            w.writerow([repr(float(v)) for v in m["genes"] + m["q_diag"] + [m["r"]] + list(f)])
    lo, hi = raw.min(axis=0), raw.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    best_genes = None if best_doc is None else best_doc["genes"]
    with open(out / "front_plot.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + [f"{n}_norm" for n in names] + ["best"])
        for m, f in zip(doc["members"], raw):
            norm = np.where(hi > lo, (f - lo) / span, 0.0)
            w.writerow([repr(float(v)) for v in f] + [repr(float(v)) for v in norm]
                       + [int(m["genes"] == best_genes)])
    if best_doc is not None:
        (out / "best.json").write_text(_dump(best_doc) + "\n")


def cmd_optimize(args) -> int:
    cfg = build_config(args)
    out = cfg.out_dir()
    latest = {}

    def progress(gen, archive):
        latest["archive"] = archive
        if args.verbose:
            print(f"generation {gen}: archive {len(archive)}", file=sys.stderr)

    t0 = time.perf_counter()
    ss = cfg.model()

    problem = LqrDesignProblem(ss, cfg.objective_names, cfg.search_sim(), cfg.freq)
    try:
        res = run_optimization(cfg, on_generation=progress)
    except KeyboardInterrupt:
        if "archive" in latest:
            write_front(out, problem, latest["archive"])
            print(f"interrupted; partial front written to {out}", file=sys.stderr)
        return EXIT_FAIL
    q, r = res.problem.decode(res.best.genes)
    best_doc = {
        "genes": [float(g) for g in res.best.genes],
        "q_diag": q.tolist(),
        "r": r,
        "objectives": res.problem.to_raw(res.best.objectives),
        "evaluation": res.evaluation.to_dict(),
        "settling_time": res.settling_time,
        "config": cfg.to_dict(),
    }
    write_front(out, res.problem, res.archive, best_doc)
    if res.evaluation.record is not None:
        res.evaluation.record.to_csv(out / "best_step_response.csv")
    summary = {"output_dir": str(out), "archive_size": len(res.archive),
               "best": {k: best_doc[k] for k in ("q_diag", "r", "objectives", "settling_time")},
               "elapsed_s": round(time.perf_counter() - t0, 3)}
    print(_dump(summary))
    return EXIT_OK


def cmd_reproduce(args) -> int:
    setup = EXAMPLES[args.example]
    out = Path(args.output_dir) if args.output_dir else RunConfig().out_dir()
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    ok = True
    baseline = None
    if args.phase in ("A", "both"):
        a = phase_a(setup)
        rows += a
        baseline = a[0].settling
        ok &= a[0].passed and phase_a_verdict(a)
    if args.phase in ("B", "both"):
        pesa = PesaConfig(**CI_PESA) if args.ci else PesaConfig()
        if args.population:
            pesa = PesaConfig.from_dict({**pesa.to_dict(), "population": args.population})
        if args.generations is not None:
            pesa = PesaConfig.from_dict({**pesa.to_dict(), "generations": args.generations})
        b = phase_b(setup, args.seeds, args.subsets or list(setup.columns), pesa, baseline)
        rows += b
        # a subset passes when a majority of its seeds pass
        for subset in {r.column for r in b}:
            runs = [r for r in b if r.column == subset]
            ok &= 2 * sum(r.passed for r in runs) > len(runs)
    table = format_table(rows)
    print(table)
    print(f"\noverall: {'PASS' if ok else 'FAIL'}")
    stem = f"reproduce_example{args.example}"
    (out / f"{stem}.txt").write_text(table + "\n")
    rows_to_csv(rows, out / f"{stem}.csv")
    return EXIT_OK if ok else EXIT_FAIL


# -- entry point -------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="folqr", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("convert", help="fractional TF -> pseudo state space (JSON)")
    c.add_argument("tf")
    c.add_argument("--form", default="bottom_row", choices=["bottom_row", "top_row"])
    c.set_defaults(func=cmd_convert)

    for name, func, helptext in [
        ("lqr", cmd_lqr, "Riccati solution, gain, feedforward and stability (JSON)"),
        ("simulate", cmd_simulate, "closed-loop step response to CSV plus metrics"),
        ("objectives", cmd_objectives, "J1, J2, J3, settling and overshoot for given weights"),
        ("evaluate", cmd_objectives, "alias of objectives"),
    ]:
        s = sub.add_parser(name, help=helptext)
        _add_run_flags(s)
        s.add_argument("--q", type=float, nargs="+", help="Q diagonal (default ones)")
        s.add_argument("--r", type=float, default=1.0)
        if name != "lqr":
            s.add_argument("--csv", help="step-response CSV file name")
        s.set_defaults(func=func)

    o = sub.add_parser("optimize", help="PESA-II run; writes front.json, front.csv, best.json")
    _add_run_flags(o)
    o.add_argument("-v", "--verbose", action="store_true")
    o.set_defaults(func=cmd_optimize)

    r = sub.add_parser("reproduce", help="compare against the tabled designs")
    r.add_argument("--example", type=int, choices=sorted(EXAMPLES), required=True)
    r.add_argument("--phase", choices=["A", "B", "both"], default="A")
    r.add_argument("--ci", action="store_true", help=f"phase B at CI scale {CI_PESA}")
    r.add_argument("--population", type=int)
    r.add_argument("--generations", type=int)
    r.add_argument("--seeds", type=int, nargs="+", default=[0])
    r.add_argument("--subsets", nargs="+", choices=["J1-J2", "J2-J3", "J1-J3", "J1-J2-J3"])
    r.add_argument("--output-dir")
    r.set_defaults(func=cmd_reproduce)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ModelError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LqrError, SimulationError, SingularResolventError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODULE


if __name__ == "__main__":
    sys.exit(main())
