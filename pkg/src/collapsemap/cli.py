"""Command-line interface.

Reports go to stdout (JSON with ``--json``, otherwise a plain table);
diagnostics go to stderr.  ``classify`` signals its verdict through the exit
status: 0 acceptable, 10 refuted, 11 unsatisfactory, 12 both.  Usage errors
exit with 2 and failures inside the library with 3.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import catalog, classify, csl_sim, grw_sim, render
from .core import CODATA2018, Ontology, ParamPoint, Theory
from .pur import DEFAULT_GEOMETRY, DEFAULT_THRESHOLDS, AdequacyThresholds, InkGeometry

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FAILURE = 3
STATUS_EXIT = {
    classify.Status.ACCEPTABLE: 0,
    classify.Status.REFUTED: 10,
    classify.Status.UNSATISFACTORY: 11,
    classify.Status.BOTH: 12,
}
TABLE_FACTOR = 3.0
MASSES = {"proton": CODATA2018.m_p, "electron": CODATA2018.m_e}
LAYER_NAMES = {k.value.lower(): k for k in catalog.SourceKind}


class UsageError(Exception):
    pass


def fmt(x) -> str:
    if x is None:
        return "NA"
    return f"{x:.5e}"


_FLOAT_TAG = "\x00f:"
_FLOAT_RE = re.compile(r'"\\u0000f:([^"]+)"')


def _tag_floats(x):
    if isinstance(x, float):
        return _FLOAT_TAG + fmt(x) if math.isfinite(x) else None
    if isinstance(x, dict):
        return {k: _tag_floats(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_tag_floats(v) for v in x]
    return x


def json_text(obj) -> str:
    """JSON with every float written in scientific notation, 6 significant digits."""
    text = json.dumps(_tag_floats(obj), indent=2, sort_keys=True)
    return _FLOAT_RE.sub(lambda m: m.group(1), text)


def emit_json(obj):
    print(json_text(obj))


def emit_rows(header, rows):
    table = [list(header)] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    for r in table:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())


# --- argument types ---------------------------------------------------------


def positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be a positive finite number: {text!r}")
    return v


def nonneg_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (v >= 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be non-negative: {text!r}")
    return v


def positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {text!r}")
    return v


def seed_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2^64)")
    return v


def mass_value(text: str) -> float:
    if text.lower() in MASSES:
        return MASSES[text.lower()]
    return positive_float(text)


def layer_set(text: str) -> frozenset:
    if text == "default":
        return classify.DEFAULT_LAYERS
    if text == "all":
        return classify.ALL_EMPIRICAL_LAYERS
    out = set()
    for part in filter(None, (p.strip().lower() for p in text.split(","))):
        if part not in LAYER_NAMES:
            raise argparse.ArgumentTypeError(
                f"unknown layer {part!r}; use I, II, III, IV, V, sound, all or default"
            )
        out.add(LAYER_NAMES[part])
    return frozenset(out)


def log_range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(p) for p in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI in log10 units, got {text!r}") from None
    if not lo < hi:
        raise argparse.ArgumentTypeError("range must satisfy LO < HI")
    return lo, hi


# --- configuration file -----------------------------------------------------


def read_config(path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key] = value
    return out


def _apply(obj, prefix: str, cfg: dict[str, str]):
    names = {f.name for f in fields(obj)}
    updates = {}
    for key, value in cfg.items():
        if not key.startswith(prefix + "."):
            continue
        name = key[len(prefix) + 1:]
        if name not in names:
            raise UsageError(f"unknown configuration key {key!r}")
        current = getattr(obj, name)
        try:
            if isinstance(current, bool):
                updates[name] = value.lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                updates[name] = int(value)
            else:
                updates[name] = float(value)
        except ValueError:
            raise UsageError(f"bad value for {key!r}: {value!r}") from None
    try:
        return replace(obj, **updates)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


KNOWN_PREFIXES = ("thresholds", "geometry", "diagram")


def load_config(args) -> dict[str, str]:
    if not getattr(args, "config", None):
        return {}
    cfg = read_config(args.config)
    bad = [k for k in cfg if k.split(".", 1)[0] not in KNOWN_PREFIXES]
    if bad:
        raise UsageError(f"unknown configuration key {bad[0]!r}")
    return cfg


# --- shared model assembly ---------------------------------------------------


def load_data(args):
    if args.data:
        exps = catalog.load_experiments(Path(args.data).read_text(encoding="utf-8"))
    else:
        exps = catalog.load_shipped(include_proposed=False)
    if args.proposed_data:
        exps += catalog.load_experiments(Path(args.proposed_data).read_text(encoding="utf-8"))
    elif not args.data:
        exps += catalog.load_experiments(catalog.shipped_data_text("diffraction_proposed.tab"))
    return exps


def model_spec(args, cfg) -> classify.ModelSpec:
    theory = Theory[args.theory.upper()]
    ontology = {"flash": Ontology.FLASH, "matter": Ontology.MATTER_DENSITY,
                "matter-smeared": Ontology.MATTER_DENSITY_SMEARED}[args.ontology]
    if ontology is Ontology.FLASH and theory is not Theory.GRW:
        raise UsageError("flash ontology requires GRW")
    thresholds: AdequacyThresholds = _apply(DEFAULT_THRESHOLDS, "thresholds", cfg)
    geometry: InkGeometry = _apply(DEFAULT_GEOMETRY, "geometry", cfg)
    try:
        return classify.ModelSpec(
            theory=theory,
            ontology=ontology,
            layers=args.layers,
            year_max=getattr(args, "year_max", None),
            include_proposed=getattr(args, "proposed", False),
            thresholds=thresholds,
            geometry=geometry,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def window_from(args, cfg, base: classify.Window) -> classify.Window:
    ls = base.log_sigma
    ll = base.log_lambda
    if "diagram.log_sigma_min" in cfg or "diagram.log_sigma_max" in cfg:
        ls = (float(cfg.get("diagram.log_sigma_min", ls[0])),
              float(cfg.get("diagram.log_sigma_max", ls[1])))
    if "diagram.log_lambda_min" in cfg or "diagram.log_lambda_max" in cfg:
        ll = (float(cfg.get("diagram.log_lambda_min", ll[0])),
              float(cfg.get("diagram.log_lambda_max", ll[1])))
    if getattr(args, "log_sigma", None):
        ls = args.log_sigma
    if getattr(args, "log_lambda", None):
        ll = args.log_lambda
    try:
        return classify.Window(ls, ll)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# --- commands ---------------------------------------------------------------


def cmd_classify(args) -> int:
    cfg = load_config(args)
    spec = model_spec(args, cfg)
    exps = load_data(args)
    pt = ParamPoint(args.sigma, args.lam)
    c = classify.classify_point(spec, pt, exps)
    bounds = classify.active_bounds_at(spec, args.sigma, exps)
    report = {
        "sigma": args.sigma,
        "lambda": args.lam,
        "status": c.status.value,
        "refuted_by": [str(s) for s in c.refuted_by],
        "projected_by": [str(s) for s in c.projected_by],
        "unsatisfactory": c.unsatisfactory,
        "active_bounds_at_sigma": bounds,
    }
    if args.json:
        emit_json(report)
    else:
        print(f"sigma           {fmt(args.sigma)}")
        print(f"lambda          {fmt(args.lam)}")
        print(f"status          {c.status.value}")
        print(f"refuted_by      {', '.join(report['refuted_by']) or '-'}")
        if c.projected_by:
            print(f"projected_by    {', '.join(report['projected_by'])}")
        print(f"unsatisfactory  {'yes' if c.unsatisfactory else 'no'}")
        print("active bounds at sigma:")
        emit_rows(("source", "lambda_max"), [(k, fmt(v)) for k, v in bounds.items()])
    return STATUS_EXIT[c.status]


def cmd_table(args) -> int:
    theory = Theory[args.theory.upper()]
    if args.data:
        exps = catalog.load_experiments(Path(args.data).read_text(encoding="utf-8"))
    else:
        exps = catalog.load_shipped(include_proposed=args.proposed)
    rows = []
    for e in exps:
        lam, ratio = catalog.diffraction_bounds(e, theory)
        p_lam, p_ratio = e.printed(theory)
        if e.flight_time is None:
            check = "pass-through"
            r1 = r2 = None
        else:
            r1 = lam / p_lam if p_lam else None
            r2 = ratio / p_ratio if p_ratio else None
            ok = all(r is None or 1 / TABLE_FACTOR <= r <= TABLE_FACTOR for r in (r1, r2))
            check = "ok" if ok else "OUTSIDE"
        rows.append({
            "year": e.year, "label": e.label, "reference": e.reference,
            "lambda": lam, "lambda_printed": p_lam, "lambda_ratio": r1,
            "lambda_over_sigma2": ratio, "lambda_over_sigma2_printed": p_ratio,
            "lambda_over_sigma2_ratio": r2, "check": check, "proposed": e.proposed,
        })
    if args.json:
        emit_json({"theory": theory.value, "rows": rows})
    else:
        emit_rows(
            ("year", "experiment", "lambda", "printed", "ratio",
             "lambda/sigma2", "printed", "ratio", "check"),
            [(r["year"] if r["year"] is not None else "proposed", r["label"],
              fmt(r["lambda"]), fmt(r["lambda_printed"]), fmt(r["lambda_ratio"]),
              fmt(r["lambda_over_sigma2"]), fmt(r["lambda_over_sigma2_printed"]),
              fmt(r["lambda_over_sigma2_ratio"]), r["check"]) for r in rows],
        )
    return EXIT_OK


def diagram_config(args, cfg, mode: str) -> render.DiagramConfig:
    dc = _apply(render.DiagramConfig(mode=mode), "diagram", {
        k: v for k, v in cfg.items() if not k.startswith("diagram.log_")
    })
    if getattr(args, "resolution", None):
        dc = replace(dc, grid_resolution=args.resolution)
    return replace(dc, window=window_from(args, cfg, dc.effective_window))


def cmd_diagram(args) -> int:
    cfg = load_config(args)
    mode = "growth" if args.fig3 else args.mode
    if mode == "growth":
        year_max = args.year_max
        args.year_max = None
    spec = model_spec(args, cfg)
    exps = load_data(args)
    try:
        dc = diagram_config(args, cfg, mode)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if mode == "growth":
        years = [y for y in render.DEFAULT_YEARS if y != "proposed"]
        if year_max is not None:
            years = [y for y in years if y < year_max] + [year_max]
        if args.proposed or year_max is None:
            years.append("proposed")
        dc = replace(dc, years=tuple(years))
    diagram = render.build_diagram(spec, dc, exps)
    svg = render.render_svg(diagram, dc)
    Path(args.out).write_text(svg, encoding="utf-8")
    markers = [{"label": m.label, "sigma": m.point.sigma, "lambda": m.point.lam,
                "refuted": m.refuted, "unsatisfactory": m.unsatisfactory}
               for m in diagram.markers]
    report = {"out": str(args.out), "mode": mode, "fills": [f.gid for f in diagram.fills],
              "curves": [c.gid for c in diagram.curves], "markers": markers}
    if args.json:
        emit_json(report)
    else:
        print(f"wrote {args.out}")
        emit_rows(("marker", "sigma", "lambda", "refuted", "unsatisfactory"),
                  [(m["label"], fmt(m["sigma"]), fmt(m["lambda"]), m["refuted"],
                    m["unsatisfactory"]) for m in markers])
    return EXIT_OK


def cmd_envelope(args) -> int:
    cfg = load_config(args)
    spec = model_spec(args, cfg)
    exps = load_data(args)
    window = window_from(args, cfg, classify.DEFAULT_WINDOW)
    constraints = classify.build_constraints(spec, exps)
    if not args.proposed:
        constraints = classify.empirical(constraints)
    if not constraints:
        raise UsageError("no constraints selected")
    poly = classify.envelope_polyline(
        constraints, (10.0 ** window.log_sigma[0], 10.0 ** window.log_sigma[1]))
    if args.plot:
        Path(args.plot).write_text(render.render_polyline(poly, window), encoding="utf-8")
    if args.json:
        emit_json({
            "vertices": [{"log10_sigma": float(x), "log10_lambda": float(y)} for x, y in poly.vertices],
            "spans": [{"log10_sigma_lo": s.log_sigma_lo, "log10_sigma_hi": s.log_sigma_hi,
                       "kind": s.source.kind.value, "source": str(s.source)} for s in poly.spans],
            "plot": args.plot,
        })
    else:
        sys.stdout.write(poly.to_text(f"lower envelope, {spec.theory.value}"))
        if args.plot:
            print(f"# wrote {args.plot}", file=sys.stderr)
    return EXIT_OK


def cmd_coverage(args) -> int:
    cfg = load_config(args)
    spec = model_spec(args, cfg)
    exps = load_data(args)
    window = window_from(args, cfg, classify.DEFAULT_WINDOW)
    cov = classify.coverage_check(spec, exps, window, args.resolution)
    report = {
        "covered": cov.covered,
        "resolution": cov.resolution,
        "acceptable_points": cov.n_acceptable,
        "witness": None if cov.witness is None else
        {"sigma": cov.witness.sigma, "lambda": cov.witness.lam},
    }
    if args.json:
        emit_json(report)
    else:
        print(f"covered            {'yes' if cov.covered else 'no'}")
        print(f"lattice            {cov.resolution + 1} x {cov.resolution + 1}")
        print(f"acceptable points  {cov.n_acceptable}")
        if cov.witness is not None:
            print(f"witness            sigma={fmt(cov.witness.sigma)} lambda={fmt(cov.witness.lam)}")
    return EXIT_OK


def _flatten(d: dict, prefix: str = ""):
    for k in sorted(d):
        v = d[k]
        if isinstance(v, dict):
            yield from _flatten(v, f"{prefix}{k}.")
        else:
            yield f"{prefix}{k}", v


def _report(args, d: dict, title: str):
    if args.json:
        emit_json(d)
        return
    print(title)
    for k, v in _flatten(d):
        print(f"  {k} = {fmt(v) if isinstance(v, float) else v}")


def cmd_simulate_grw(args) -> int:
    horizon = args.horizon or (5.0 / args.lambda_eff if args.lambda_eff > 0 else 1.0)
    ham = grw_sim.FreeParticle(args.mass) if args.mass else None
    config = grw_sim.SimConfig(args.sigma, args.lambda_eff, horizon, args.trials, args.seed, ham)
    width = args.width or args.sigma
    state = grw_sim.PacketState.single(0.0, width)
    print(f"# seed {args.seed}", file=sys.stderr)
    stats = grw_sim.run_ensemble(config, state, keep_flashes=bool(args.flash_log))
    if args.flash_log:
        Path(args.flash_log).write_text(stats.flash_log(), encoding="utf-8")
    d = stats.to_dict()
    d["seed"] = args.seed
    if args.mass:
        d["oracle_gain_per_collapse"] = grw_sim.energy_gain_per_collapse_oracle(args.mass, args.sigma)
    _report(args, d, "GRW ensemble")
    return EXIT_OK


def cmd_simulate_csl(args) -> int:
    lam = args.lambda_eff
    dt = args.dt or (csl_sim.MAX_RATE_STEP / lam if lam > 0 else 1e-3)
    horizon = args.horizon or (2.0 / lam if lam > 0 else 100 * dt)
    config = csl_sim.CSLConfig(
        args.sigma, lam, dt, horizon, args.trials, args.seed,
        csl_sim.Scheme(args.scheme), args.mass,
    )
    h = args.sigma * grw_sim.MAX_SPACING_PER_SIGMA
    width = args.width or args.sigma
    state = grw_sim.GridState.from_function(
        lambda x: np.exp(-x**2 / (4 * width**2)), args.grid, h)
    print(f"# seed {args.seed}", file=sys.stderr)
    stats = csl_sim.run_csl(config, state)
    d = stats.to_dict()
    d["seed"] = args.seed
    if args.mass:
        d["oracle_energy_rate"] = csl_sim.energy_rate_oracle(args.mass, args.sigma, lam)
    _report(args, d, "CSL ensemble")
    return EXIT_OK


# --- parser -----------------------------------------------------------------


def _model_flags(p, ontology=True, proposed_help="include proposed experiments"):
    p.add_argument("--theory", choices=("grw", "csl"), default="grw")
    if ontology:
        p.add_argument("--ontology", choices=("matter", "flash", "matter-smeared"),
                       default="matter")
    p.add_argument("--layers", type=layer_set, default=classify.DEFAULT_LAYERS,
                   help="comma list of I,II,III,IV,V,sound, or 'all' / 'default'")
    p.add_argument("--year-max", type=int, dest="year_max")
    p.add_argument("--proposed", action="store_true", help=proposed_help)
    _data_flags(p)


def _data_flags(p):
    p.add_argument("--data", help="experiment table replacing the shipped one")
    p.add_argument("--proposed-data", dest="proposed_data",
                   help="table of proposed experiments")
    p.add_argument("--config", help="key = value file overriding thresholds, geometry, diagram")


def _window_flags(p):
    p.add_argument("--log-sigma", type=log_range, dest="log_sigma", metavar="LO:HI")
    p.add_argument("--log-lambda", type=log_range, dest="log_lambda", metavar="LO:HI")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="collapsemap",
        description="GRW/CSL parameter-plane classification, diagrams and simulation.",
    )
    parser.add_argument("--json", action="store_true", help="JSON report on stdout")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS,
                        help="JSON report on stdout")
    sub = parser.add_subparsers(dest="command", required=True)
    _add = sub.add_parser

    def add_parser(name, **kw):
        return _add(name, parents=[common], **kw)

    sub.add_parser = add_parser

    p = sub.add_parser("classify", help="classify one (sigma, lambda) point")
    _model_flags(p)
    p.add_argument("--sigma", type=positive_float, required=True)
    p.add_argument("--lambda", type=positive_float, required=True, dest="lam")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("diagram", help="render a parameter diagram to SVG")
    _model_flags(p)
    _window_flags(p)
    p.add_argument("--mode", choices=render.MODES, default="regions")
    p.add_argument("--fig3", action="store_true", help="year sweep of the diffraction region")
    p.add_argument("--resolution", type=positive_int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diagram)

    p = sub.add_parser("envelope", help="print the ERR boundary polyline")
    _model_flags(p, ontology=False, proposed_help="include proposed experiments in the envelope")
    _window_flags(p)
    p.add_argument("--plot", metavar="SVG", help="also draw the envelope to this file")
    p.set_defaults(func=cmd_envelope, ontology="matter")

    p = sub.add_parser("table", help="recompute the diffraction bounds table")
    p.add_argument("--theory", choices=("grw", "csl"), default="grw")
    p.add_argument("--data", help="experiment table replacing the shipped one")
    p.add_argument("--proposed", action="store_true", help="append the proposed rows")
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("coverage", help="check whether ERR and PUR cover the window")
    _model_flags(p)
    _window_flags(p)
    p.add_argument("--resolution", type=positive_int, default=200)
    p.set_defaults(func=cmd_coverage, layers=classify.ALL_EMPIRICAL_LAYERS)

    p = sub.add_parser("simulate-grw", help="GRW jump-process ensemble on a free packet")
    p.add_argument("--sigma", type=positive_float, required=True)
    p.add_argument("--lambda-eff", type=nonneg_float, required=True, dest="lambda_eff")
    p.add_argument("--mass", type=mass_value, help="proton, electron or kg; omit for H = 0")
    p.add_argument("--horizon", type=positive_float, help="seconds (default 5/lambda_eff)")
    p.add_argument("--width", type=positive_float, help="initial packet width (default sigma)")
    p.add_argument("--trials", type=positive_int, default=1000)
    p.add_argument("--seed", type=seed_int, default=0)
    p.add_argument("--flash-log", dest="flash_log", help="write 'trial time center' rows here")
    p.set_defaults(func=cmd_simulate_grw)

    p = sub.add_parser("simulate-csl", help="CSL Euler-Maruyama ensemble on a 1-D grid")
    p.add_argument("--sigma", type=positive_float, required=True)
    p.add_argument("--lambda-eff", type=nonneg_float, required=True, dest="lambda_eff")
    p.add_argument("--mass", type=mass_value, help="proton, electron or kg; omit for H = 0")
    p.add_argument("--dt", type=positive_float, help="default 1e-2/lambda_eff")
    p.add_argument("--horizon", type=positive_float, help="default 2/lambda_eff")
    p.add_argument("--width", type=positive_float, help="initial packet width (default sigma)")
    p.add_argument("--grid", type=positive_int, default=256, help="grid points (spacing sigma/8)")
    p.add_argument("--scheme", choices=[s.value for s in csl_sim.Scheme], default="nonlinear")
    p.add_argument("--trials", type=positive_int, default=1000)
    p.add_argument("--seed", type=seed_int, default=0)
    p.set_defaults(func=cmd_simulate_csl)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"collapsemap: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, ArithmeticError, OSError) as exc:
        print(f"collapsemap: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
