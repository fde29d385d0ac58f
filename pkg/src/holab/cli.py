"""``holab`` command line: run one verification pipeline on one scenario.

    holab <command> --scenario <name|path> [--steps N] [--tol X] [--loops N]
          [--seed N] [--sign-convention paper|oracle] [--out DIR] [--format json|csv]

Exit status: 0 when every check passes, 2 when a check fails, 1 on error.
``HOLAB_THREADS`` caps the fan-out of independent lifts (default 1).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bundle import DomainError, horizontal_lift, horizontality_residual, sample_points
from .curvature import (
    affine_plot,
    ambrose_singer_verify,
    coordinate_field,
    curvature_at,
    plaques_identity_residual,
    reduced_algebra,
    reduction_check,
    sample_curvature_along_horizontal,
    small_loop_oracle,
)
from .holonomy import (
    AxiomCase,
    axiom_suite,
    group_law_residuals,
    holonomy_element,
    loops_equivalent,
    parallel_map,
)
from .liealg import bracket_closure, exp_matrix, rotation_angle_2d, so_basis
from .paths import reverse
from .plots import emit_plots, loglog_slope
from .scenarios import load_scenario, stokes_flux

COMMANDS = ("transport", "holonomy", "axioms", "curvature", "plaques", "asverify", "reduce")
DEFAULTS = {"steps": 1000, "tol": 1e-6, "loops": 100, "seed": 42, "sign_convention": "oracle"}
AXIOM_CASES = 20
GROUP_LAW_TRIPLES = 50
SIGN_TOL = 0.02
STOKES_TOL = 1e-4
PLAQUES_TOL = 1e-4
PLAQUES_ORDER = 1.8
ORDER_RANGE = (3.5, 4.5)
NOISE_FLOOR = 1e-11


@dataclass
class RunReport:
    scenario: str
    command: str
    params: dict
    tables: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    plots: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    timing: float = 0.0

    @property
    def passed(self):
        return all(c["pass"] for c in self.checks)

    def check(self, name, value, threshold, passed=None, note=""):
        ok = bool(value <= threshold) if passed is None else bool(passed)
        self.checks.append({"name": name, "value": value, "threshold": threshold, "pass": ok,
                            **({"note": note} if note else {})})
        return ok

    def to_dict(self):
        # wall-clock timing is left out so that reports are byte-reproducible
        return {"scenario": self.scenario, "command": self.command, "params": self.params,
                "passed": self.passed, "checks": self.checks, "tables": self.tables,
                "warnings": self.warnings, **self.extra}


# ---------------------------------------------------------------------------
# deterministic serialization


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    return x


def dumps(obj, indent=0):
    """JSON with floats at 17 significant digits, sorted keys, non-finite as null."""
    pad, pad1 = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad1}{json.dumps(k)}: {dumps(obj[k], indent + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad1 + dumps(v, indent + 1) for v in obj) + "\n" + pad + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return format(obj, ".17g") if math.isfinite(obj) else "null"
    return json.dumps(obj)


def report_json(report):
    return dumps(_jsonable(report.to_dict())) + "\n"


def table_csv(rows):
    buf = io.StringIO()
    cols = sorted({k for r in rows for k in r})
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([format(r[c], ".17g") if isinstance(r.get(c), float) else _cell(r.get(c))
                    for c in cols])
    return buf.getvalue()


def _cell(v):
    if isinstance(v, (list, tuple, dict, np.ndarray)):
        return dumps(_jsonable(v))
    return "" if v is None else v


# ---------------------------------------------------------------------------
# helpers


def _wrap(a):
    return float((a + np.pi) % (2 * np.pi) - np.pi)


def _is_so2(sc):
    return sc.matrix_size == 2 and sc.group_tag.upper().startswith("SO")


def _order(a, b):
    return math.log2(a / b) if a > NOISE_FLOOR and b > NOISE_FLOOR else float("nan")


def _axiom_cases(sc, count, seed):
    rng = np.random.default_rng(seed)
    loops = sc.random_loops((count + 1) // 2, seed)
    cases = []
    for k in range(count):
        starts = sc.random_starts(5, rng)
        if k % 2 == 0:
            p = loops[k // 2].path
        else:
            p = sc.random_open_path(sc.basepoint, rng, label=f"open{k}")
        q = sc.random_open_path(p.end, rng, label=f"follow{k}")
        cases.append(AxiomCase(p, q, starts))
    return cases


def _curvature_samples(sc, loops, steps, convention):
    d = sc.chart.dim
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    fam = loops[:10]
    out = []
    for i, j in pairs:
        out += sample_curvature_along_horizontal(
            sc.conn, lambda t: fam[int(t)].path, coordinate_field(d, i), coordinate_field(d, j),
            np.linspace(0.0, 1.0, 9), list(range(len(fam))), steps, convention=convention)
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_transport(sc, p, rep):
    steps = p["steps"]
    rng = np.random.default_rng(p["seed"])
    paths = [sc.loop(n).path for n in sc.loop_specs]
    paths += [lp.path for lp in sc.random_loops(min(p["loops"], 5), p["seed"])]
    paths.append(sc.random_open_path(sc.basepoint, rng, label="open"))
    rows, conv = [], []
    worst_group, worst_equi, worst_back, orders = 0.0, 0.0, 0.0, []
    h = sc.random_starts(2, rng)[1]
    for path in paths:
        lifts = {n: horizontal_lift(sc.conn, path, None, n) for n in (steps // 4, steps // 2, steps)}
        lift = lifts[steps]
        d1 = float(np.linalg.norm(lifts[steps // 4].end - lifts[steps // 2].end))
        d2 = float(np.linalg.norm(lifts[steps // 2].end - lift.end))
        order = _order(d1, d2)
        if order == order:
            orders.append(order)
        conv += [{"path": path.label, "steps": steps // 4, "increment": d1},
                 {"path": path.label, "steps": steps // 2, "increment": d2}]
        gres = lift.group_residual()
        shifted = horizontal_lift(sc.conn, path, h, steps).end
        equi = float(np.max(np.abs(shifted - lift.end @ h)))
        back = float(np.max(np.abs(horizontal_lift(sc.conn, reverse(path), lift.end, steps).end
                                   - np.eye(sc.matrix_size))))
        worst_group, worst_equi, worst_back = max(worst_group, gres), max(worst_equi, equi), max(worst_back, back)
        rows.append({"path": path.label, "end_fiber": lift.end, "group_residual": gres,
                     "horizontality": horizontality_residual(lift), "observed_order": order,
                     "equivariance": equi, "return_residual": back})
    rep.tables["transport"] = rows
    rep.tables["convergence"] = conv
    rep.plots.append({"name": "convergence", "table": "convergence", "x": "steps", "y": ["increment"],
                      "logx": True, "logy": True, "slope": True, "title": f"{sc.name}: lift increments"})
    rep.check("group_residual", worst_group, 1e-8)
    rep.check("equivariance", worst_equi, p["tol"])
    rep.check("reverse_returns_start", worst_back, p["tol"])
    if orders:
        rep.check("min_observed_order", min(orders), ORDER_RANGE[0],
                  passed=all(ORDER_RANGE[0] <= o <= ORDER_RANGE[1] for o in orders),
                  note=f"all orders in [{ORDER_RANGE[0]}, {ORDER_RANGE[1]}]")
    else:
        rep.warnings.append("all lift increments below the noise floor; order not measured")


def cmd_holonomy(sc, p, rep):
    steps, tol = p["steps"], p["tol"]
    so2 = _is_so2(sc)
    rows = []
    for e in sc.expected.get("holonomy_angles", []):
        lp = sc.loop(e["loop"], **e.get("params", {}))
        rec = holonomy_element(sc.conn, lp, None, steps)
        want = sc.expected_angle(e)
        got = rotation_angle_2d(rec.element)
        err = abs(_wrap(got - want))
        rows.append({"loop": lp.label, "angle": got, "expected": want, "error": err})
        rep.check(f"angle[{lp.label}]", err, tol)
    rep.tables["named"] = rows

    loops = sc.random_loops(p["loops"], p["seed"])
    recs = parallel_map(lambda lp: holonomy_element(sc.conn, lp, None, steps), loops)
    rows = []
    stokes = so2 and sc.chart.dim == 2
    worst_stokes = 0.0
    gen = sc.basis.elements[0]
    for lp, rec in zip(loops, recs):
        row = {"loop": lp.label, "log_ok": rec.log_ok, "distance_to_identity": rec.distance_to_identity()}
        if so2:
            row["angle"] = rotation_angle_2d(rec.element)
        if stokes:
            flux = stokes_flux(sc.conn, lp, gen)
            err = abs(rotation_angle_2d(rec.element @ exp_matrix(flux * gen)))
            row["flux"] = flux
            row["stokes_rel_error"] = err / abs(flux) if abs(flux) > 0 else err
            worst_stokes = max(worst_stokes, err - STOKES_TOL * abs(flux))
        rows.append(row)
    rep.tables["random"] = rows
    if stokes:
        rep.check("stokes_excess", worst_stokes, 1e-12,
                  note=f"max(|angle + flux| - {STOKES_TOL:g} |flux|)")

    laws = {"composition": 0.0, "inverse": 0.0, "associativity": 0.0}
    ntri = min(GROUP_LAW_TRIPLES, len(loops) // 3) if len(loops) >= 3 else 0
    trip = [(loops[3 * k], loops[3 * k + 1], loops[3 * k + 2]) for k in range(ntri)]
    for res in parallel_map(lambda t: group_law_residuals(sc.conn, *t, steps), trip):
        for k, v in res.items():
            laws[k] = max(laws[k], v)
    for k, v in laws.items():
        rep.check(f"group_law_{k}", v, 1e-5)

    rng = np.random.default_rng(p["seed"] + 1)
    g = sc.random_starts(2, rng)[1]
    conj = 0.0
    for lp, rec in list(zip(loops, recs))[:5]:
        hg = holonomy_element(sc.conn, lp, g, steps).element
        conj = max(conj, float(np.max(np.abs(hg - np.linalg.solve(g, rec.element @ g)))))
    if loops:
        rep.check("basepoint_conjugation", conj, tol)
        verdict, det = loops_equivalent(sc.conn, loops[0], loops[0], tol, steps)
        rep.check("reflexivity", det["concat_residual"], tol, passed=verdict and det["agree"])

    classes = sc.expected.get("winding_classes")
    if classes:
        hols = {}
        rows = []
        for n1, n2 in classes:
            hols[(n1, n2)] = holonomy_element(sc.conn, sc.loop("winding", n1=n1, n2=n2), None, steps).element
            rows.append({"n1": n1, "n2": n2, "angle": rotation_angle_2d(hols[(n1, n2)])})
        rep.tables["winding"] = rows
        prod_err, commute = 0.0, 0.0
        for a in hols:
            for b in hols:
                c = (a[0] + b[0], a[1] + b[1])
                if c in hols and a != (0, 0) and b != (0, 0):
                    prod_err = max(prod_err, float(np.max(np.abs(hols[c] - hols[a] @ hols[b]))))
                commute = max(commute, float(np.max(np.abs(hols[a] @ hols[b] - hols[b] @ hols[a]))))
        sep = min((float(np.linalg.norm(hols[a] - hols[b])) for a in hols for b in hols if a < b),
                  default=1.0)
        rep.check("winding_product", prod_err, tol)
        rep.check("winding_commute", commute, tol)
        rep.check("winding_classes_distinct", sep, 1e-3, passed=sep > 1e-3)

    sweep = sc.expected.get("sweep")
    if sweep:
        from .expr import parse_expr

        rows = []
        worst = 0.0
        for val in np.linspace(sweep["from"], sweep["to"], sweep["count"]):
            lp = sc.loop(sweep["loop"], **{sweep["param"]: float(val)})
            got = rotation_angle_2d(holonomy_element(sc.conn, lp, None, steps).element)
            want = float(parse_expr(sweep["angle"], [], {**sc.params, sweep["param"]: float(val)}).evalf())
            # unwrap onto the closed-form branch for display
            got_unwrapped = want + _wrap(got - want)
            worst = max(worst, abs(got_unwrapped - want))
            rows.append({sweep["param"]: float(val), "angle": got_unwrapped, "closed_form": want})
        rep.tables["sweep"] = rows
        rep.plots.append({"name": "sweep", "table": "sweep", "x": sweep["param"],
                          "y": ["angle", "closed_form"], "overlay": "closed_form",
                          "title": f"{sc.name}: holonomy angle vs {sweep['param']}"})
        rep.check("sweep_max_error", worst, tol)


def cmd_axioms(sc, p, rep):
    cases = _axiom_cases(sc, min(p["loops"], AXIOM_CASES), p["seed"])
    res = axiom_suite(sc.conn, cases, p["tol"], p["steps"])
    rep.tables["axioms"] = res.table()
    for row in res.table():
        rep.check(row["axiom"], row["max_residual"], p["tol"])
    consistent = all(len(set(v)) == 1 for v in res.triviality_verdicts)
    rep.check("vi_verdicts_consistent", 0.0 if consistent else 1.0, 0.0, passed=consistent)
    rep.extra["cases"] = len(cases)


def cmd_curvature(sc, p, rep):
    conv = p["sign_convention"]
    rng = np.random.default_rng(p["seed"])
    d = sc.chart.dim
    probes = []
    exp_c = sc.expected_curvature()
    if exp_c is not None:
        probes.append(exp_c[:3])
    pts = [x for x in sample_points(sc.chart, 200, rng, 0.8) if sc.chart.margin(x)[0] > 0.3][:3]
    for x in pts:
        probes.append((x, np.eye(d)[0], np.eye(d)[1]))
        v, w = rng.normal(size=(2, d))
        probes.append((x, v / np.linalg.norm(v), w / np.linalg.norm(w)))
    rows = []
    worst = 0.0
    for x, v, w in probes:
        F = curvature_at(sc.conn, x, v, w, convention=conv)
        lim = small_loop_oracle(sc.conn, x, v, w)
        scale = max(np.linalg.norm(lim), np.linalg.norm(F))
        err = float(np.linalg.norm(lim - F))
        rel = err / scale if scale > 1e-8 else err
        anti = float(np.max(np.abs(F + curvature_at(sc.conn, x, w, v, convention=conv))))
        worst = max(worst, rel)
        rows.append({"point": x, "v": v, "w": w, "curvature": F, "small_loop_limit": lim,
                     "relative_error": rel, "antisymmetry": anti})
    rep.tables["curvature"] = rows
    rep.check("sign_oracle_relative_error", worst, SIGN_TOL, note=f"convention={conv}")
    rep.check("antisymmetry", max(r["antisymmetry"] for r in rows), 1e-10)
    if exp_c is not None:
        x, v, w, want = exp_c
        got = curvature_at(sc.conn, x, v, w, convention=conv)
        rep.check("expected_value", float(np.max(np.abs(got - want))), 1e-8)


def _plaques_path(sc):
    m = sc.basepoint
    rho = min(1.0, 0.5 * float(sc.chart.margin(m)[0]))
    d = sc.chart.dim

    def c(s):
        out = np.zeros(d)
        out[0], out[1] = rho * np.cos(np.pi * s + 0.3), rho * np.sin(np.pi * s + 0.3)
        return out

    def dc(s):
        out = np.zeros(d)
        out[0], out[1] = -np.pi * rho * np.sin(np.pi * s + 0.3), np.pi * rho * np.cos(np.pi * s + 0.3)
        return out

    return c, dc


def cmd_plaques(sc, p, rep):
    c, dc = _plaques_path(sc)
    plot = affine_plot(sc.basepoint)
    rows = []
    for n in (p["steps"] // 2, p["steps"]):
        r = plaques_identity_residual(sc.conn, plot, c, dc, n, convention=p["sign_convention"])
        rows.append({"steps": n, "residual": r})
    rep.tables["plaques"] = rows
    rep.plots.append({"name": "plaques", "table": "plaques", "x": "steps", "y": ["residual"],
                      "logx": True, "logy": True, "slope": True, "title": f"{sc.name}: ray transport identity"})
    rep.check("residual", rows[-1]["residual"], PLAQUES_TOL)
    order = _order(rows[0]["residual"], rows[1]["residual"])
    rep.extra["observed_order"] = order
    if order == order:
        rep.check("observed_order", order, PLAQUES_ORDER, passed=order >= PLAQUES_ORDER)
    else:
        rep.warnings.append("residuals below the noise floor; order not measured")


def cmd_asverify(sc, p, rep):
    loops = sc.random_loops(p["loops"], p["seed"])
    samples = _curvature_samples(sc, loops, p["steps"], p["sign_convention"])
    res = ambrose_singer_verify(sc.conn, loops, samples, p["tol"], p["steps"])
    rep.extra["reduction"] = res.to_dict()
    rep.tables["loops"] = [{"loop": lp.label, "span_residual": r, "distance_to_identity": dist}
                           for lp, r, dist in zip(loops, res.loop_residuals,
                                                  res.extra["holonomy_distance_to_identity"])]
    rep.check("verdict", 0.0 if res.verdict else 1.0, 0.0, passed=res.verdict)
    good = [r for r in res.loop_residuals if r == r]
    rep.check("max_loop_residual", max(good, default=0.0), p["tol"])
    want = sc.expected.get("reduced_rank")
    if want is not None:
        rep.check("reduced_rank", abs(res.span.rank - want), 0, note=f"rank {res.span.rank}, expected {want}")
    if res.span.rank == 0:
        dist = max(res.extra["holonomy_distance_to_identity"], default=0.0)
        rep.check("trivial_holonomy", dist, 1e-8)


def _block_span(sc, indices):
    k = len(indices)
    emb = sc.embedding()
    return bracket_closure([emb.embed_algebra(b) for b in so_basis(k)]), emb


def cmd_reduce(sc, p, rep):
    loops = sc.random_loops(p["loops"], p["seed"])
    # the declared loops may be non-contractible; reduction must hold for them too
    named = [sc.loop(n) for n in sc.loop_specs]
    red = sc.properties.get("reducible_to")
    samples = _curvature_samples(sc, loops, p["steps"], p["sign_convention"])
    if red:
        span, emb = _block_span(sc, red["indices"])
        inside = max(float(span.distance(s.value)) for s in samples)
        rep.check("curvature_samples_in_block", inside, 1e-8)
    else:
        span, emb = reduced_algebra(samples), None
    res = reduction_check(sc.conn, span, emb, named + loops, p["tol"], p["steps"])
    rep.extra["simply_connected"] = bool(sc.properties.get("simply_connected", True))
    rep.extra["reduction"] = res.to_dict()
    rep.check("verdict", 0.0 if res.verdict else 1.0, 0.0, passed=res.verdict)
    simply = rep.extra["simply_connected"]
    rep.check("max_loop_residual", max([r for r in res.loop_residuals if r == r], default=0.0), p["tol"],
              note="" if simply else "base not simply connected; non-contractible loops included")
    rep.check("max_connection_residual", max(res.curvature_residuals, default=0.0), p["tol"])
    if res.extra.get("group_distance"):
        rep.check("max_group_distance", max(res.extra["group_distance"]), p["tol"])


HANDLERS = {
    "transport": cmd_transport,
    "holonomy": cmd_holonomy,
    "axioms": cmd_axioms,
    "curvature": cmd_curvature,
    "plaques": cmd_plaques,
    "asverify": cmd_asverify,
    "reduce": cmd_reduce,
}


class CommandError(RuntimeError):
    pass


def run_command(command, scenario, **params):
    """Run ``command`` on a scenario (object, name or path) and return a :class:`RunReport`."""
    if command not in HANDLERS:
        raise CommandError(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}")
    p = {**DEFAULTS, **{k: v for k, v in params.items() if v is not None}}
    if p["steps"] < 32:
        raise CommandError("--steps must be at least 32")
    if p["loops"] < 1:
        raise CommandError("--loops must be at least 1")
    if p["sign_convention"] not in ("oracle", "paper"):
        raise CommandError("--sign-convention must be 'oracle' or 'paper'")
    sc = scenario if hasattr(scenario, "conn") else load_scenario(scenario)
    rep = RunReport(sc.name, command, dict(p))
    t0 = time.perf_counter()
    try:
        HANDLERS[command](sc, p, rep)
    except (DomainError, ArithmeticError, ValueError) as exc:
        raise CommandError(f"{command} on {sc.name}: {exc}") from exc
    rep.timing = time.perf_counter() - t0
    return rep


def write_outputs(rep, out_dir, fmt):
    """Write the report (and CSV tables and SVG plots) into ``out_dir``; returns file list."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{rep.scenario}-{rep.command}"
    files = []
    if fmt == "csv":
        for name, rows in sorted(rep.tables.items()):
            if rows:
                f = out / f"{stem}-{name}.csv"
                f.write_text(table_csv(rows))
                files.append(str(f))
    files += emit_plots(rep, out)
    f = out / f"{stem}.json"
    f.write_text(report_json(rep))
    files.insert(0, str(f))
    return files


def build_parser():
    ap = argparse.ArgumentParser(prog="holab", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--scenario", required=True, help="built-in name or path to a scenario JSON")
    ap.add_argument("--steps", type=int, default=DEFAULTS["steps"])
    ap.add_argument("--tol", type=float, default=DEFAULTS["tol"])
    ap.add_argument("--loops", type=int, default=DEFAULTS["loops"])
    ap.add_argument("--seed", type=int, default=DEFAULTS["seed"])
    ap.add_argument("--sign-convention", choices=("oracle", "paper"), default="oracle")
    ap.add_argument("--out", default=None, help="directory for the JSON report, CSV tables and SVG plots")
    ap.add_argument("--format", choices=("json", "csv"), default="json")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        rep = run_command(args.command, args.scenario, steps=args.steps, tol=args.tol,
                          loops=args.loops, seed=args.seed, sign_convention=args.sign_convention)
        if args.out:
            for f in write_outputs(rep, args.out, args.format):
                print(f)
        elif args.format == "csv":
            for name, rows in sorted(rep.tables.items()):
                if rows:
                    sys.stdout.write(f"# {name}\n{table_csv(rows)}")
        else:
            sys.stdout.write(report_json(rep))
    except Exception as exc:  # noqa: BLE001 - the exit-code contract covers every failure
        print(f"holab: error: {exc}", file=sys.stderr)
        return 1
    status = "PASS" if rep.passed else "FAIL"
    failed = [c["name"] for c in rep.checks if not c["pass"]]
    print(f"{status} {args.command} {rep.scenario} ({rep.timing:.2f} s)"
          + (f" failed: {', '.join(failed)}" if failed else ""), file=sys.stderr)
    return 0 if rep.passed else 2


if __name__ == "__main__":
    sys.exit(main())
