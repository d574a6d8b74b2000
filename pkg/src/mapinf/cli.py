"""Command line front end: analyze, simulate, compare.

Human-readable tables go to stdout; machine-readable artifacts (JSON
report, one CSV per curve, run manifest) go to the --out directory.
The two never mix, and every artifact except manifest.json is a pure
function of the model document and the resolved parameters, so reports
are byte-reproducible.

Exit codes: 0 success, 1 model or argument validation, 2 numerical
failure or insufficient simulation data (also a failed comparison),
3 file system trouble.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
import time

import numpy as np

from .catastrophe import stationary_with_catastrophes
from .errors import (MapinfError, ModelValidationError, NumericalFailure,
                     UnsupportedFeatureError)
from .metrics import compute_report
from .model import choose_grid
from .modelio import canonical_test_models, load_model
from .poisson import stationary_count_table
from .simulate import simulate_transient
from .version import __version__

PASS_SE_MULT = 3.0


def _points(text):
    try:
        vals = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("expected at least one number")
    return vals


def _add_common(sub):
    sub.add_argument("--model", required=True,
                     help="path to a model document, or a canonical model name")
    sub.add_argument("--out", metavar="DIR",
                     help="directory for machine-readable artifacts")
    sub.add_argument("--strict", dest="strict", action="store_true", default=True,
                     help="reject unknown document keys (default)")
    sub.add_argument("--lenient", dest="strict", action="store_false",
                     help="warn about unknown document keys instead of failing")


def _add_analysis(sub):
    sub.add_argument("--grid-step", type=float, metavar="H",
                     help="integration step (default: smallest mean / 100)")
    sub.add_argument("--horizon", type=float, metavar="T",
                     help="integration horizon (default: tail-driven)")
    sub.add_argument("--t-points", type=_points, metavar="T1,T2,...",
                     help="report times (snapped to the grid)")
    sub.add_argument("--z-points", type=_points, metavar="Z1,Z2,...",
                     help="stationary transform evaluation points in [0, 1]")
    sub.add_argument("--cutoff", type=int, metavar="N",
                     help="count truncation for distribution tables")


def _add_simulation(sub, with_horizon):
    sub.add_argument("--replications", type=int, metavar="R",
                     help="independent replications")
    sub.add_argument("--seed", type=int, metavar="N", help="root random seed")
    if with_horizon:
        sub.add_argument("--horizon", type=float, metavar="T",
                         help="replication length")
        sub.add_argument("--t-points", type=_points, metavar="T1,T2,...",
                         help="snapshot times")
    sub.add_argument("--trace", action="store_true",
                     help="record an event-trace digest of the first replication")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mapinf",
        description="analytic and simulated performance of infinite-server "
                    "queues with Markov arrivals in a random environment",
    )
    parser.add_argument("--version", action="version", version=f"mapinf {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="run the analytic engine")
    _add_common(pa)
    _add_analysis(pa)
    pa.set_defaults(func=cmd_analyze)

    ps = sub.add_parser("simulate", help="run the discrete-event simulator")
    _add_common(ps)
    _add_simulation(ps, with_horizon=True)
    ps.set_defaults(func=cmd_simulate)

    pc = sub.add_parser("compare", help="analytic engine vs simulation, with z-scores")
    _add_common(pc)
    _add_analysis(pc)
    _add_simulation(pc, with_horizon=False)
    pc.set_defaults(func=cmd_compare)
    return parser


def _resolve_model(ref, strict):
    """A model document from a path or a canonical name."""
    canon = canonical_test_models()
    if ref in canon and not os.path.exists(ref):
        return canon[ref], ref
    return load_model(ref, strict=strict), os.path.abspath(ref)


def _overrides(args, *names):
    out = {}
    for name in names:
        val = getattr(args, name, None)
        if val is not None:
            out[name] = val
    return out


def _snap_times(grid, t_points):
    """Nearest grid nodes to the requested times, deduplicated, sorted."""
    idx = sorted({min(max(int(round(t / grid.step)), 0), grid.n_cells) for t in t_points})
    return [float(grid.points[i]) for i in idx]


def _default_t_points(limit):
    return (0.25 * limit, 0.5 * limit, float(limit))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj]
    return obj


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path, times, values, stderrs=None):
    lines = ["t,value,stderr"] if stderrs is not None else ["t,value"]
    for i, t in enumerate(times):
        row = f"{float(t)!r},{float(values[i])!r}"
        if stderrs is not None:
            row += f",{float(stderrs[i])!r}"
        lines.append(row)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


class _OutDir:
    """Collects artifact writes so the manifest can list them, last."""

    def __init__(self, path):
        self.path = path
        self.written = []
        if path is not None:
            os.makedirs(path, exist_ok=True)

    @property
    def active(self):
        return self.path is not None

    def json(self, name, payload):
        if self.active:
            _write_json(os.path.join(self.path, name), payload)
            self.written.append(name)

    def csv(self, name, times, values, stderrs=None):
        if self.active:
            _write_csv(os.path.join(self.path, name), times, values, stderrs)
            self.written.append(name)

    def manifest(self, args, model_ref, parameters, started, t0):
        if not self.active:
            return
        payload = {
            "command": ["mapinf"] + list(args.argv),
            "model": model_ref,
            "parameters": _jsonable(parameters),
            "tool_version": __version__,
            "started_utc": started,
            "wall_clock_seconds": round(time.monotonic() - t0, 3),
            "outputs": sorted(self.written),
        }
        _write_json(os.path.join(self.path, "manifest.json"), payload)


def _metric_name(base, r):
    return f"{base}_type{r + 1}"


def cmd_analyze(args):
    t0 = time.monotonic()
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    doc, ref = _resolve_model(args.model, args.strict)
    doc = doc.with_overrides(**_overrides(args, "grid_step", "horizon", "cutoff",
                                          "t_points", "z_points"))
    cfg = doc.analysis
    model = doc.model
    at_least = max(cfg.t_points) if cfg.t_points else None
    grid = choose_grid(model, step=cfg.grid_step, horizon=cfg.horizon, at_least=at_least)
    report = compute_report(model, grid=grid)

    payload = report.to_dict()
    t_show = _snap_times(grid, cfg.t_points) if cfg.t_points else None
    if t_show:
        at = report.to_dict(t_points=t_show)
        payload["t_points"] = {"t": at["t"], "curves": at["curves"]}
    if cfg.z_points:
        vals = []
        for z in cfg.z_points:
            value, bound = stationary_with_catastrophes(model, z1=z, grid=grid)
            vals.append({"z": float(z), "value": float(np.real(value)),
                         "bound": float(bound)})
        payload["stationary_pgf"] = vals
    counts_note = ""
    try:
        table = stationary_count_table(model, cutoff=cfg.cutoff, grid=grid)
        payload["stationary_counts"] = {"cutoff": cfg.cutoff, "table": table.tolist()}
    except UnsupportedFeatureError as exc:
        counts_note = f"count table skipped: {exc}"

    print(f"model: {doc.name or ref}  "
          f"(states: {model.n_states}, types: {model.n_types}, "
          f"resource components: {model.resource_dim})")
    print(f"grid: step={grid.step:g}, horizon={grid.horizon:g}, cells={grid.n_cells}")
    if t_show:
        width = max(len(n) for n in report.curves) + 2
        header = "".join(f"{'t=' + format(t, 'g'):>14}" for t in t_show)
        print(f"\n{'curves':<{width}}{header}")
        for name in sorted(report.curves):
            row = "".join(f"{report.curve_at(name, t):>14.6f}" for t in t_show)
            print(f"{name:<{width}}{row}")
    print("\nlimits:")
    width = max(len(n) for n in report.limits) + 2
    for name in sorted(report.limits):
        print(f"{name:<{width}}{report.limits[name]:>14.6f}")
    if cfg.z_points:
        print("\nstationary transform:")
        for entry in payload["stationary_pgf"]:
            print(f"z={entry['z']:<8g}{entry['value']:>14.8f}")
    if counts_note:
        print(f"\n{counts_note}")

    out = _OutDir(args.out)
    out.json("report.json", payload)
    for name in sorted(report.curves):
        out.csv(f"{name}.csv", payload["t"], payload["curves"][name])
    out.manifest(args, ref, {
        "grid_step": grid.step, "horizon": grid.horizon,
        "cutoff": cfg.cutoff, "t_points": list(cfg.t_points),
        "z_points": list(cfg.z_points), "strict": args.strict,
    }, started, t0)
    return 0


def cmd_simulate(args):
    t0 = time.monotonic()
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    doc, ref = _resolve_model(args.model, args.strict)
    doc = doc.with_overrides(**_overrides(args, "replications", "seed"),
                             sim_horizon=args.horizon)
    if args.t_points is not None:
        doc = doc.with_overrides(t_points=args.t_points)
    cfg = doc.simulation
    t_points = doc.analysis.t_points or _default_t_points(cfg.horizon)
    sim = simulate_transient(doc.model, horizon=cfg.horizon, t_points=t_points,
                             replications=cfg.replications, seed=cfg.seed,
                             collect_trace=args.trace)

    print(f"model: {doc.name or ref}  replications: {sim.replications}  "
          f"horizon: {cfg.horizon:g}  seed: {cfg.seed}")
    print("conservation: arrivals == served + in service + destroyed "
          "in every replication")
    if sim.trace_digest:
        print(f"trace digest: {sim.trace_digest}")
    print(f"\n{'metric':<32}{'t':>8}{'estimate':>14}{'std err':>12}")
    for r in range(doc.model.n_types):
        for p, t in enumerate(sim.t_points):
            m = sim.mean_in_service(r, p)
            print(f"{_metric_name('mean_in_service', r):<32}{t:>8g}"
                  f"{m.value:>14.6f}{m.se:>12.2e}")
        for p, t in enumerate(sim.t_points):
            v = sim.variance_in_service(r, p)
            print(f"{_metric_name('variance_in_service', r):<32}{t:>8g}"
                  f"{v.value:>14.6f}{v.se:>12.2e}")

    out = _OutDir(args.out)
    out.json("simulation.json", sim.to_dict())
    times = [float(t) for t in sim.t_points]
    for r in range(doc.model.n_types):
        ests = [sim.mean_in_service(r, p) for p in range(len(times))]
        out.csv(f"sim_{_metric_name('mean_in_service', r)}.csv", times,
                [e.value for e in ests], [e.se for e in ests])
        ests = [sim.variance_in_service(r, p) for p in range(len(times))]
        out.csv(f"sim_{_metric_name('variance_in_service', r)}.csv", times,
                [e.value for e in ests], [e.se for e in ests])
    out.manifest(args, ref, {
        "replications": cfg.replications, "seed": cfg.seed,
        "horizon": cfg.horizon, "t_points": times,
        "trace": bool(args.trace), "strict": args.strict,
    }, started, t0)
    return 0


def cmd_compare(args):
    t0 = time.monotonic()
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    doc, ref = _resolve_model(args.model, args.strict)
    doc = doc.with_overrides(**_overrides(args, "grid_step", "horizon", "cutoff",
                                          "t_points", "replications", "seed"))
    model = doc.model
    acfg = doc.analysis
    scfg = doc.simulation
    raw_t = acfg.t_points or _default_t_points(min(scfg.horizon,
                                                   acfg.horizon or scfg.horizon))
    grid = choose_grid(model, step=acfg.grid_step, horizon=acfg.horizon,
                       at_least=max(raw_t))
    # Snap snapshot times to grid nodes so both sides evaluate the same t.
    t_points = _snap_times(grid, raw_t)
    sim = simulate_transient(model, horizon=scfg.horizon, t_points=t_points,
                             replications=scfg.replications, seed=scfg.seed,
                             collect_trace=args.trace)
    report = compute_report(model, grid=grid)
    t_idx = [grid.index_of(t) for t in t_points]

    rows = []
    for r in range(model.n_types):
        for p, t in enumerate(t_points):
            name = _metric_name("mean_in_service", r)
            rows.append((name, t, float(report.curves[name][t_idx[p]]),
                         sim.mean_in_service(r, p)))
            name = _metric_name("variance_in_service", r)
            rows.append((name, t, float(report.curves[name][t_idx[p]]),
                         sim.variance_in_service(r, p)))
            for c in range(model.resource_dim):
                name = f"mean_resource_in_service_type{r + 1}_component{c + 1}"
                rows.append((name, t, float(report.curves[name][t_idx[p]]),
                             sim.resource_in_service(r, c, p)))
        if len(t_points) >= 2 and t_points[0] >= scfg.warmup:
            name = _metric_name("loss_rate", r)
            rows.append((name, t_points[-1], report.limits[name],
                         sim.loss_rate(r, 0, len(t_points) - 1)))

    print(f"model: {doc.name or ref}  replications: {sim.replications}  seed: {scfg.seed}")
    print(f"grid: step={grid.step:g}, horizon={grid.horizon:g}; snapshot times: "
          f"{', '.join(format(t, 'g') for t in t_points)}")
    print(f"\n{'metric':<44}{'t':>7}{'analytic':>12}{'simulated':>12}{'z':>8}")
    failures = []
    table = []
    for name, t, analytic, est in rows:
        gap = est.value - analytic
        if est.se > 0.0:
            z = gap / est.se
        else:
            z = 0.0 if abs(gap) < 1e-12 else np.inf
        z_store = float(z) if np.isfinite(z) else 1e300
        table.append({"metric": name, "t": t, "analytic": analytic,
                      "simulated": est.value, "stderr": est.se, "z": z_store})
        flag = "" if abs(z) <= PASS_SE_MULT else "  FAIL"
        print(f"{name:<44}{t:>7g}{analytic:>12.5f}{est.value:>12.5f}{z:>8.2f}{flag}")
        if abs(z) > PASS_SE_MULT:
            failures.append((name, t, z))

    verdict = "pass" if not failures else "fail"
    print(f"\ncomparison: {verdict} ({len(rows)} checks, threshold "
          f"{PASS_SE_MULT:g} standard errors)")
    out = _OutDir(args.out)
    out.json("compare.json", {
        "verdict": verdict, "threshold_se": PASS_SE_MULT, "rows": table,
        "replications": sim.replications, "seed": scfg.seed,
        "grid": {"step": grid.step, "horizon": grid.horizon},
    })
    out.manifest(args, ref, {
        "grid_step": grid.step, "horizon": grid.horizon,
        "replications": scfg.replications, "seed": scfg.seed,
        "t_points": t_points, "strict": args.strict,
    }, started, t0)
    if failures:
        name, t, z = failures[0]
        print(f"compare failed: metric '{name}' at t={t:g} deviates by "
              f"{abs(z):.1f} standard errors", file=sys.stderr)
        return 2
    return 0


def main(argv=None):
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    try:
        return int(args.func(args))
    except (ModelValidationError, UnsupportedFeatureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except MapinfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
