"""Scenario-driven command line front end.

Every run reads one JSON scenario, validates it, executes a single task and
writes one report (JSON or CSV) into the output directory.  Reports embed the
resolved scenario and seed and contain no timestamps, so identical inputs give
byte-identical files.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import algebra as alg_mod
from . import analysis, engine
from .engine import DeformationError, DeformationParam
from .geometry import GeometryError, GroupBackend, SphereBackend, SpherePoint

log = logging.getLogger("cheeger")

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_VERIFY = 3

TASKS = ("sweep", "zeros", "scan", "verify", "census")

_vector = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_matrix = {"type": "array", "items": _vector, "minItems": 1}
_level = {"oneOf": [{"type": "string"}, _matrix]}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["backend"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "task": {"enum": list(TASKS)},
        "seed": {"type": "integer", "minimum": 0},
        "backend": {
            "oneOf": [
                {
                    "type": "object",
                    "required": ["kind", "algebra"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"const": "group"},
                        "algebra": {"type": "string"},
                        "k": _level,
                        "metric": _matrix,
                        "chain": {
                            "type": "object",
                            "required": ["levels", "ts"],
                            "additionalProperties": False,
                            "properties": {
                                "levels": {"type": "array", "items": _level, "minItems": 1},
                                "ts": _vector,
                                "largest_first": {"type": "boolean"},
                            },
                        },
                    },
                },
                {
                    "type": "object",
                    "required": ["kind"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"const": "sphere"},
                        "points": {
                            "type": "array",
                            "items": {"type": "array", "items": {"type": "number"},
                                      "minItems": 6, "maxItems": 6},
                        },
                        "random_points": {"type": "integer", "minimum": 0},
                    },
                },
            ]
        },
        "t_grid": _vector,
        "s_grid": _vector,
        "s_range": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "planes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["V", "W"],
                "additionalProperties": False,
                "properties": {"id": {"type": "string"}, "V": _vector, "W": _vector},
            },
        },
        "search": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "multistarts": {"type": "integer", "minimum": 1},
                "descent_tol": {"type": "number", "exclusiveMinimum": 0},
                "dedup_angle": {"type": "number", "exclusiveMinimum": 0},
                "zero_threshold": {"type": "number", "exclusiveMinimum": 0},
                "grid_per_axis": {"type": "integer", "minimum": 1},
                "trace_step": {"type": "number", "exclusiveMinimum": 0},
                "hessian_rank_tol": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "census": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "resolution": {"type": "integer", "minimum": 1},
                "cross_check": {"type": "boolean"},
            },
        },
        "scan": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_samples": {"type": "integer", "minimum": 1},
                "n_descent": {"type": "integer", "minimum": 0},
                "width": {"type": "number", "exclusiveMinimum": 0},
                "frontier_samples": {"type": "integer", "minimum": 1},
            },
        },
        "verify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "cases": {"type": "integer", "minimum": 1},
                "algebras": {"type": "array", "items": {"enum": ["so3", "so4", "su3"]}},
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
                "fd_tolerance": {"type": "number", "exclusiveMinimum": 0},
                "fd_cases": {"type": "integer", "minimum": 0},
                "flip_final_sign": {"type": "boolean"},
                "z_cases": {"type": "integer", "minimum": 0},
                "z_samples": {"type": "integer", "minimum": 1},
            },
        },
    },
}


class ScenarioError(ValueError):
    """Scenario document failed validation or names an unsupported combination."""


def load_scenario(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    return validate_scenario(doc)


def validate_scenario(doc: dict) -> dict:
    try:
        jsonschema.validate(doc, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(map(str, exc.absolute_path)) or "<root>"
        raise ScenarioError(f"{where}: {exc.message}") from None
    return doc


def resolve(doc: dict, task: str, seed: int | None) -> dict:
    """Fill defaults so the report records every parameter that was used."""
    if doc.get("task", task) != task:
        raise ScenarioError(f"scenario is for task {doc['task']!r}, not {task!r}")
    cfg = copy.deepcopy(doc)
    cfg["task"] = task
    cfg["seed"] = int(seed if seed is not None else doc.get("seed", 0))
    search = analysis.SearchConfig(seed=cfg["seed"], **cfg.get("search", {}))
    cfg["search"] = {k: getattr(search, k) for k in
                     ("multistarts", "descent_tol", "dedup_angle", "zero_threshold",
                      "grid_per_axis", "trace_step", "hessian_rank_tol")}
    if task == "census":
        cfg["census"] = {"resolution": 24, "cross_check": True, **cfg.get("census", {})}
    if task == "scan":
        cfg["scan"] = {"n_samples": 10_000, "n_descent": 10, "width": 1e-3,
                       "frontier_samples": 2000, **cfg.get("scan", {})}
    if task == "verify":
        cfg["verify"] = {"cases": 20, "algebras": ["so3", "so4", "su3"], "tolerance": 1e-9,
                         "fd_tolerance": 5e-5, "fd_cases": 4, "flip_final_sign": False,
                         "z_cases": 0, "z_samples": 20_000,
                         **cfg.get("verify", {})}
    return cfg


# --- backends ---------------------------------------------------------------------

def _subalgebra(alg, spec):
    if isinstance(spec, str):
        return alg_mod.named_subalgebra(alg, spec)
    return alg_mod.subalgebra(alg, np.asarray(spec, float))


def group_metric(spec: dict):
    """Metric operator of a group scenario (None for the bi-invariant metric)."""
    alg = alg_mod.builtin(spec["algebra"])
    phi = np.asarray(spec["metric"], float) if "metric" in spec else None
    if "chain" not in spec:
        return None if phi is None else alg_mod.MetricOperator(phi)
    ch = spec["chain"]
    chain = alg_mod.make_chain(alg, [_subalgebra(alg, lv).basis.T for lv in ch["levels"]])
    return engine.chain_metric(alg, chain, ch["ts"], largest_first=ch.get("largest_first", True),
                               phi=phi)


def build_group(spec: dict):
    alg = alg_mod.builtin(spec["algebra"])
    k = _subalgebra(alg, spec.get("k", "all"))
    return GroupBackend(alg, k, group_metric(spec))


def sphere_points(spec: dict, rng) -> list[SpherePoint]:
    pts = [SpherePoint.normalized(p[:3], p[3:]) for p in spec.get("points", [])]
    backend = SphereBackend()
    pts += [backend.random_point(rng) for _ in range(spec.get("random_points", 0))]
    if not pts:
        raise ScenarioError("sphere scenario lists no points")
    return pts


def _backend_and_points(cfg):
    spec = cfg["backend"]
    rng = np.random.default_rng(cfg["seed"])
    if spec["kind"] == "group":
        return build_group(spec), ["e"]
    return SphereBackend(), sphere_points(spec, rng)


def _point_label(p):
    return p.to_list() if isinstance(p, SpherePoint) else p


# --- tasks ------------------------------------------------------------------------

def run_sweep(cfg: dict) -> dict:
    backend, points = _backend_and_points(cfg)
    planes = cfg.get("planes")
    if not planes:
        raise ScenarioError("sweep needs at least one plane")
    rows = []
    for p in points:
        frame = backend.frame(p)
        for i, pl in enumerate(planes):
            pid = pl.get("id", f"plane{i}")
            if len(pl["V"]) != frame.tangent_dim or len(pl["W"]) != frame.tangent_dim:
                raise ScenarioError(f"{pid}: vectors must have length {frame.tangent_dim}")
            for t in cfg.get("t_grid", [0.0, 1.0]):
                row = {"point": _point_label(p), "plane_id": pid, "t": float(t), "flag": "ok"}
                try:
                    row.update(engine.kappa_c(backend, frame, pl["V"], pl["W"], t,
                                              plane_id=pid).to_dict())
                except DeformationError as exc:
                    row["flag"] = "outside-validity"
                    log.warning("%s", exc)
                rows.append(row)
    report = {"rows": rows}
    if cfg["backend"].get("chain"):
        metric = group_metric(cfg["backend"])
        report["chain"] = {"block_coefficients": list(metric.block_coefficients),
                           "eigenvalues": metric.eigenvalues.tolist()}
    return report


def _zero_records(backend, p, t, search):
    recs = analysis.find_zero_planes(backend, p, t, search)
    out = []
    for r in recs:
        analysis.classify_record(backend, r, t)
        A, B = analysis.deformed_plane(backend.frame(p), r, t)
        d = r.to_dict()
        d["fd_sec"] = analysis.fd_curvature(backend, t, p, A, B)
        out.append(d)
    return recs, out


def run_zeros(cfg: dict) -> dict:
    backend, points = _backend_and_points(cfg)
    search = analysis.SearchConfig(seed=cfg["seed"], **cfg["search"])
    results = []
    for p in points:
        for t in cfg.get("t_grid", [1.0]):
            recs, out = _zero_records(backend, p, t, search)
            frame = backend.frame(p)
            fams = sorted({r.family for r in recs if r.family >= 0})
            closed = [analysis.is_closed_chain(frame, [(r.V, r.W) for r in recs if r.family == f],
                                               2 * search.trace_step) for f in fams]
            results.append({"point": _point_label(p), "t": float(t),
                            "count": analysis.count_distinct(recs),
                            "families": len(fams), "closed_chains": closed,
                            "records": out})
    return {"results": results}


def run_census(cfg: dict) -> dict:
    backend, points = _backend_and_points(cfg)
    if not isinstance(backend, SphereBackend):
        raise ScenarioError("census runs on the sphere backend only")
    search = analysis.SearchConfig(seed=cfg["seed"], **cfg["search"])
    opts = cfg["census"]
    results = []
    for p in points:
        for t in cfg.get("t_grid", [1.0]):
            c = analysis.grid_census(backend, p, t, opts["resolution"], config=search)
            entry = {"point": _point_label(p), "t": float(t), "count": c["count"],
                     "threshold": c["threshold"],
                     "components": [{k: v for k, v in comp.items() if k != "plane"}
                                    for comp in c["components"]]}
            if opts["cross_check"]:
                recs = analysis.find_zero_planes(backend, p, t, search)
                entry["search_count"] = analysis.count_distinct(recs)
                entry["search_family_dims"] = sorted({r.family_dim for r in recs})
                entry["agree"] = entry["search_count"] == c["count"]
            results.append(entry)
    return {"results": results}


def run_scan(cfg: dict) -> dict:
    spec = cfg["backend"]
    if spec["kind"] != "group":
        raise ScenarioError("scan runs on the group backend only")
    alg = alg_mod.builtin(spec["algebra"])
    k = _subalgebra(alg, spec.get("k", "all"))
    opts = cfg["scan"]
    scans = []
    for i, s in enumerate(cfg.get("s_grid", [])):
        r = engine.nonneg_scan(alg, k, s, opts["n_samples"], rng=[cfg["seed"], i],
                               n_descent=opts["n_descent"])
        scans.append({"s": r.s, "min_sec": r.min_sec, "negative": r.negative})
    report = {"scans": scans}
    if "s_range" in cfg:
        lo, hi = cfg["s_range"]
        bracket, _ = engine.nonneg_frontier(alg, k, lo, hi, width=opts["width"],
                                            n_samples=opts["frontier_samples"], rng=cfg["seed"],
                                            n_descent=opts["n_descent"])
        report["frontier"] = None if bracket is None else list(bracket)
    return report


def _verify_group_cases(cfg, rng):
    opts = cfg["verify"]
    checks = {"engine_vs_milnor": 0.0, "base_vs_milnor": 0.0, "closed_form_vs_milnor": 0.0,
              "closed_form_vs_kappa": 0.0, "closed_form_at_s1": 0.0}
    for name in opts["algebras"]:
        alg = alg_mod.builtin(name)
        subs = [n for (b, n) in alg_mod.NAMED_SUBALGEBRAS if b == name] + ["all"]
        for _ in range(opts["cases"]):
            k = alg_mod.named_subalgebra(alg, subs[rng.integers(len(subs))])
            metric = alg_mod.random_invariant_metric(alg, k, rng)
            backend = GroupBackend(alg, k, metric)
            frame = backend.frame()
            t = float(rng.uniform(max(frame.t_min, -0.5) * 0.5, 3.0))
            V, W = engine.gram_schmidt(frame, rng.normal(size=alg.dim), rng.normal(size=alg.dim))
            kc = engine.kappa_c(backend, frame, V, W, t, orthonormalize=False).total
            phi_t = analysis.submersion_metric(backend.phi, k.basis, t)
            A = analysis.moving_plane_oracle(backend.phi, phi_t, V)
            B = analysis.moving_plane_oracle(backend.phi, phi_t, W)
            ref = analysis.milnor_curvature(alg, phi_t, A, B)
            checks["engine_vs_milnor"] = max(checks["engine_vs_milnor"], _rel(kc, ref))
            c0 = float(backend.curvature0(frame, V, W))
            checks["base_vs_milnor"] = max(checks["base_vs_milnor"],
                                           _rel(c0, analysis.milnor_curvature(alg, backend.phi, V, W)))
        # closed form for g_s = sQ|_k + Q|_m against the Milnor oracle and the moving-plane route
        sign = -1.0 if opts["flip_final_sign"] else 1.0
        for _ in range(opts["cases"]):
            k = alg_mod.named_subalgebra(alg, subs[rng.integers(len(subs))])
            s = float(rng.uniform(0.2, 2.0))
            A, B = rng.normal(size=alg.dim), rng.normal(size=alg.dim)
            gs = engine.gs_curvature(alg, k, A, B, s, final_sign=sign)
            t = 1.0 / s - 1.0
            phi_t = analysis.submersion_metric(np.eye(alg.dim), k.basis, t)
            checks["closed_form_vs_milnor"] = max(checks["closed_form_vs_milnor"],
                                                  _rel(gs, analysis.milnor_curvature(alg, phi_t, A, B)))
            backend = GroupBackend(alg, k)
            V, W = engine.apply_Ct(backend.frame(), A, t), engine.apply_Ct(backend.frame(), B, t)
            route = engine.kappa_c(backend, backend.frame(), V, W, t, orthonormalize=False).total
            checks["closed_form_vs_kappa"] = max(checks["closed_form_vs_kappa"], _rel(gs, route))
            g1 = engine.gs_curvature(alg, k, A, B, 1.0, final_sign=sign)
            br = alg.bracket(A, B)
            checks["closed_form_at_s1"] = max(checks["closed_form_at_s1"], _rel(g1, 0.25 * br @ br))
    return checks


def _rel(a, b):
    return float(abs(a - b) / max(1.0, abs(b)))


def run_verify(cfg: dict) -> dict:
    opts = cfg["verify"]
    rng = np.random.default_rng(cfg["seed"])
    errs = _verify_group_cases(cfg, rng)
    checks = [{"check": k, "max_rel_error": v, "tolerance": opts["tolerance"],
               "pass": v <= opts["tolerance"]} for k, v in errs.items()]
    sb = SphereBackend()
    fd_err = 0.0
    for _ in range(opts["fd_cases"]):
        p = sb.random_point(rng)
        frame = sb.frame(p)
        t = float(rng.uniform(0.1, 2.0))
        V, W = engine.gram_schmidt(frame, rng.normal(size=4), rng.normal(size=4))
        sec = engine.kappa_c(sb, frame, V, W, t).sec
        A, B = engine.apply_Ct_inv(frame, V, t), engine.apply_Ct_inv(frame, W, t)
        fd_err = max(fd_err, abs(sec - analysis.fd_curvature(sb, t, p, A, B)))
    if opts["fd_cases"]:
        checks.append({"check": "sphere_engine_vs_fd", "max_abs_error": fd_err,
                       "tolerance": opts["fd_tolerance"], "pass": fd_err <= opts["fd_tolerance"]})
    if opts["z_cases"]:
        dom, gap = _verify_z_term(opts, rng)
        checks.append({"check": "z_closed_form_dominates_samples", "max_excess": dom,
                       "tolerance": 1e-9, "pass": dom <= 1e-9})
        checks.append({"check": "z_closed_form_vs_refined", "max_rel_error": gap,
                       "tolerance": 1e-6, "pass": gap <= 1e-6})
    return {"checks": checks, "all_pass": all(c["pass"] for c in checks)}


def z_case(rng, i: int):
    """Random (backend, frame, V, W, t) for the z-term comparison; alternates backends."""
    if i % 2:
        backend = SphereBackend()
        frame = backend.frame(backend.random_point(rng))
    else:
        alg = alg_mod.builtin(["so3", "so4", "su3"][(i // 2) % 3])
        subs = [n for (b, n) in alg_mod.NAMED_SUBALGEBRAS if b == alg.name] + ["all"]
        k = alg_mod.named_subalgebra(alg, subs[rng.integers(len(subs))])
        backend = GroupBackend(alg, k, alg_mod.random_invariant_metric(alg, k, rng))
        frame = backend.frame()
    n = frame.tangent_dim
    V, W = engine.gram_schmidt(frame, rng.normal(size=n), rng.normal(size=n))
    return backend, frame, V, W, float(rng.uniform(0.05, 5.0))


def _verify_z_term(opts, rng):
    """Largest excess of a sampled quotient over the closed form, and refined gap."""
    excess, gap = 0.0, 0.0
    for i in range(opts["z_cases"]):
        backend, frame, V, W, t = z_case(rng, i)
        z = float(engine.kappa_terms(backend, frame, V, W, t)[2])
        best, vals = engine.z_term_sampled(backend, frame, V, W, t, opts["z_samples"],
                                           rng=rng, refine=True)
        excess = max(excess, float(vals.max()) - z)
        gap = max(gap, abs(z - best) / max(abs(z), 1e-300))
    return excess, gap


RUNNERS = {"sweep": run_sweep, "zeros": run_zeros, "scan": run_scan,
           "verify": run_verify, "census": run_census}


# --- output -------------------------------------------------------------------------

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def to_json(report: dict) -> str:
    return json.dumps(_clean(report), indent=2, sort_keys=True) + "\n"


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, (list, tuple)):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def _flat_rows(task: str, result: dict) -> list[dict]:
    if task == "sweep":
        return result["rows"]
    if task == "scan":
        return result["scans"]
    if task == "verify":
        return result["checks"]
    rows = []
    for r in result["results"]:
        rows.append({k: v for k, v in r.items() if k not in ("records", "components")})
    return rows


def to_csv(task: str, result: dict) -> str:
    rows = _flat_rows(task, result)
    fields = []
    for r in rows:
        for k in r:
            if k not in fields:
                fields.append(k)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(_clean(r.get(k, ""))) for k in fields})
    return buf.getvalue()


def execute(task: str, doc: dict, seed: int | None = None) -> dict:
    cfg = resolve(doc, task, seed)
    result = RUNNERS[task](cfg)
    return {"config": cfg, "seed": cfg["seed"], "task": task, "result": result}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cheeger", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="task", required=True)
    for task in TASKS:
        sp = sub.add_parser(task)
        sp.add_argument("--scenario", required=True, help="JSON scenario document")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        if task == "verify":
            sp.add_argument("--flip-final-sign", action="store_true",
                            help="debug: negate the last term of the g_s closed form")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        doc = load_scenario(args.scenario)
        if getattr(args, "flip_final_sign", False):
            doc = {**doc, "verify": {**doc.get("verify", {}), "flip_final_sign": True}}
        if args.seed is not None and args.seed < 0:
            raise ScenarioError("seed must be non-negative")
        report = execute(args.task, doc, args.seed)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (GeometryError, alg_mod.AlgebraError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.scenario).stem
    if args.format == "json":
        path = out / f"{stem}.{args.task}.json"
        path.write_text(to_json(report))
    else:
        path = out / f"{stem}.{args.task}.csv"
        path.write_text(to_csv(args.task, report["result"]))
    print(path)
    if args.task == "verify":
        for c in report["result"]["checks"]:
            print(f"{'PASS' if c['pass'] else 'FAIL'} {c['check']}")
        if not report["result"]["all_pass"]:
            return EXIT_VERIFY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
