"""Command line runner: strict JSON configs, run directories, replay, plot data.

    fibermetric run CONFIG [--workers N] [--out DIR]
    fibermetric replay DIR [--workers N]
    fibermetric plotdata DIR

Exit codes: 0 pass, 2 fail verdict or replay mismatch, 1 error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, family_geometry, fld1
from . import analysis_lab as lab
from .family_geometry import (
    BaseGrid,
    ConsistencyError,
    DensityRecipe,
    FamilyConfig,
    FamilyError,
    OmegaRecipe,
    TauMap,
    config_to_dict,
    geodesic_curvature,
    solve_family,
)
from .ma_solver import SolverError, metric_density, solve, verify_solution

MANIFEST = "manifest.json"
TIMINGS = "timings.json"  # wall-clock only; never compared on replay
SEED_ENV = "FIBERMETRIC_SEED"


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- schema

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_INT = {"type": "integer"}
_CPLX = {"oneOf": [_NUM, {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}]}
_T = {"oneOf": [{"type": "null"}, _CPLX]}  # base point; null means the disk center


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_MODE = _obj({"k": _INT, "l": _INT, "amp": _NUM, "phase": _NUM, "beta": _CPLX, "gamma": _NUM}, ("k", "l", "amp"))
_POINT = _obj({"x": _NUM, "y": _NUM, "exponent": _NUM, "motion": _CPLX}, ("x", "y", "exponent"))
_FAMILY = _obj(
    {
        "base": _obj({"center": _CPLX, "radius": _POS, "m_side": {"type": "integer", "minimum": 9}}),
        "tau_map": _obj({"kind": {"enum": list(family_geometry.TAU_KINDS)}, "tau0": _CPLX, "kappa": _CPLX}),
        "omega": _obj(
            {
                "kind": {"enum": list(family_geometry.OMEGA_KINDS)},
                "modes": {"type": "array", "items": _MODE},
                "shear": _NUM,
                "a_tt": _NUM,
                "chi2": _NUM,
                "chi4": _NUM,
            }
        ),
        "density": _obj(
            {
                "points_E": {"type": "array", "items": _POINT},
                "points_B": {"type": "array", "items": _POINT},
                "epsilon": {"type": "number", "minimum": 0},
                "q": {"oneOf": [{"type": "null"}, {"type": "array", "items": _NUM}]},
                "modes": {"type": "array", "items": _MODE},
                "reg_modes": {"type": "array", "items": _MODE},
            }
        ),
        "n_side": {"type": "integer", "minimum": 8},
        "lam": {"type": "number", "minimum": 0},
        "epsilon_twist": {"type": "number", "minimum": 0},
        "normalization": {"enum": ["omega-mean-zero", "density-mean-zero"]},
    }
)
_SCHEDULE = _obj(
    {
        "values": {"type": "array", "items": _POS, "minItems": 1},
        "start": _POS,
        "count": {"type": "integer", "minimum": 1},
        "ratio": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
    }
)


def _fam(cfg: FamilyConfig) -> dict:
    return config_to_dict(cfg)


def _geo(start: float, count: int) -> dict:
    return {"start": start, "count": count, "ratio": 0.5}


# name -> (parameter schema properties, defaults); every default is echoed into the manifest
REGISTRY: dict[str, tuple[dict, dict]] = {
    "solve-fiber": ({"family": _FAMILY, "t": _T, "tol": _POS}, {"family": _fam(FamilyConfig()), "t": None, "tol": 1e-8}),
    "solve-family": ({"family": _FAMILY}, {"family": _fam(FamilyConfig())}),
    "identity-129": (
        {"family": _FAMILY, "levels": {"type": "integer", "minimum": 2}, "tol": _POS},
        {"family": _fam(lab.curvature_identity_config()), "levels": 2, "tol": 1e-6},
    ),
    "identity-248": (
        {"family": _FAMILY, "levels": {"type": "integer", "minimum": 2}, "tol": _POS, "lift": {"enum": ["coordinate", "log-tangent"]}, "lam_shift": _POS},
        {"family": _fam(lab.lift_identity_config()), "levels": 2, "tol": 1e-6, "lift": "log-tangent", "lam_shift": 0.1},
    ),
    "lemma14": ({"family": _FAMILY, "t": _T, "schedule": _SCHEDULE}, {"family": _fam(lab.twist_limit_config()), "t": None, "schedule": _geo(0.1, 6)}),
    "smoothing": ({"family": _FAMILY, "schedule": _SCHEDULE}, {"family": _fam(lab.smoothing_config()), "schedule": _geo(0.05, 6)}),
    "centering": ({"family": _FAMILY, "schedule": _SCHEDULE}, {"family": _fam(lab.centering_config()), "schedule": _geo(0.2, 6)}),
    "sobolev": (
        {"family": _FAMILY, "t": _T, "p": {"type": "number", "minimum": 1, "exclusiveMaximum": 2}, "schedule": _SCHEDULE, "n_samples": {"type": "integer", "minimum": 1}, "n_seeds": {"type": "integer", "minimum": 1}},
        {"family": _fam(lab.gradient_config("B", 128)), "t": None, "p": 1.0, "schedule": {"values": [1e-1, 1e-2, 1e-3, 1e-4]}, "n_samples": 200, "n_seeds": 2},
    ),
    "sequences": ({"n_max": {"type": "integer", "minimum": 1}}, {"n_max": 6}),
    "transverse": (
        {"family": _FAMILY, "schedule": _SCHEDULE, "n_multiplier": {"oneOf": [{"type": "null"}, _POS]}},
        {"family": _fam(lab.transverse_config()), "schedule": {"values": [1e-1, 1e-2, 1e-3]}, "n_multiplier": None},
    ),
    "gradient": (
        {"family": _FAMILY, "t": _T, "schedule": _SCHEDULE, "factor": {"type": "number", "minimum": 1}},
        {"family": _fam(lab.gradient_config()), "t": None, "schedule": {"values": [1e-1, 1e-2, 1e-3, 1e-4]}, "factor": 1.5},
    ),
    "counterexample": (
        {"family": _FAMILY, "levels": {"type": "integer", "minimum": 2}, "schedule": _SCHEDULE, "expect": {"enum": ["negative", "nonnegative"]}, "tol": _POS},
        {"family": _fam(lab.counterexample_config()), "levels": 3, "schedule": _geo(0.1, 6), "expect": "negative", "tol": 1e-8},
    ),
    "degeneration": (
        {"family": _FAMILY, "targets": {"type": "array", "items": _POS, "minItems": 2}},
        {"family": _fam(lab.neck_config()), "targets": [2, 4, 8, 16, 32]},
    ),
}
REGISTRY["poincare"] = REGISTRY["sobolev"]

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "experiment": {"enum": sorted(REGISTRY)},
        "parameters": {"type": "object"},
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
    },
    "required": ["experiment"],
    "additionalProperties": False,
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    parameters: dict
    seed: int = 0
    output_dir: str | None = None

    def to_dict(self) -> dict:
        d = {"experiment": self.experiment, "parameters": self.parameters, "seed": self.seed}
        if self.output_dir is not None:
            d["output_dir"] = self.output_dir
        return d


def _where(err: jsonschema.ValidationError) -> str:
    path = ".".join(str(p) for p in err.absolute_path)
    return path or "<root>"


def _validate(doc, schema, prefix: str = "") -> None:
    v = jsonschema.Draft202012Validator(schema)
    errs = sorted(v.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errs:
        e = jsonschema.exceptions.best_match(errs)
        where = _where(e)
        raise ConfigError(f"{prefix}{where}: {e.message}" if prefix else f"{where}: {e.message}")


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a raw document (strict: unknown keys are errors)."""
    _validate(doc, CONFIG_SCHEMA)
    props, _ = REGISTRY[doc["experiment"]]
    params = doc.get("parameters", {})
    _validate(params, _obj(props), "parameters.")
    return ExperimentConfig(doc["experiment"], params, doc.get("seed", 0), doc.get("output_dir"))


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e
    return parse_config(doc)


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"


def _merge(default, given):
    if isinstance(default, dict) and isinstance(given, dict):
        out = copy.deepcopy(default)
        for k, v in given.items():
            out[k] = _merge(default.get(k), v)
        return out
    return copy.deepcopy(given)


def resolve(cfg: ExperimentConfig) -> ExperimentConfig:
    """Fill every default explicitly; the result is what gets recorded and replayed."""
    _, defaults = REGISTRY[cfg.experiment]
    params = _merge(defaults, cfg.parameters)
    fam = params.get("family")
    if fam is not None:
        # family defaults come from the dataclasses, so echo them too
        params["family"] = config_to_dict(family_from_dict(fam))
    return ExperimentConfig(cfg.experiment, params, cfg.seed, cfg.output_dir)


# ---------------------------------------------------------------- family decoding


def _c(v) -> complex:
    if v is None:
        return None
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1])
    return complex(v)


def _mode(d: dict) -> dict:
    d = dict(d)
    if "beta" in d:
        d["beta"] = _c(d["beta"])
    return d


def _point(d: dict) -> dict:
    d = dict(d)
    if "motion" in d:
        d["motion"] = _c(d["motion"])
    return d


def family_from_dict(d: dict) -> FamilyConfig:
    b = dict(d.get("base", {}))
    if "center" in b:
        b["center"] = _c(b["center"])
    tm = dict(d.get("tau_map", {}))
    for k in ("tau0", "kappa"):
        if k in tm:
            tm[k] = _c(tm[k])
    om = dict(d.get("omega", {}))
    om["modes"] = tuple(_mode(m) for m in om.get("modes", ()))
    de = dict(d.get("density", {}))
    for k in ("points_E", "points_B"):
        de[k] = tuple(_point(p) for p in de.get(k, ()))
    for k in ("modes", "reg_modes"):
        de[k] = tuple(_mode(m) for m in de.get(k, ()))
    if de.get("q") is not None:
        de["q"] = tuple(de["q"])
    rest = {k: d[k] for k in ("n_side", "lam", "epsilon_twist", "normalization") if k in d}
    return FamilyConfig(base=BaseGrid(**b), tau_map=TauMap(**tm), omega=OmegaRecipe(**om), density=DensityRecipe(**de), **rest)


def _schedule(parameter: str, d: dict) -> lab.Schedule:
    if "values" in d:
        return lab.Schedule(parameter, tuple(d["values"]))
    return lab.Schedule.geometric(parameter, d.get("start", 0.1), d.get("count", 6), d.get("ratio", 0.5))


def _fiber(params: dict):
    cfg = family_from_dict(params["family"])
    t = cfg.base.center if params.get("t") is None else _c(params["t"])
    return cfg, cfg.problem(t)


# ---------------------------------------------------------------- experiments
# each returns (passed, summary, tables {name: ConvergenceTable}, extra writer or None)


class _Out:
    """Single writer for a run directory; records emitted files in order."""

    def __init__(self, root: Path):
        self.root = root
        self.files: list[str] = []
        self.timings: dict = {}

    def text(self, name: str, s: str) -> None:
        (self.root / name).write_bytes(s.encode())
        self.files.append(name)

    def json(self, name: str, obj) -> None:
        self.text(name, lab.to_json(obj))

    def field(self, name: str, arr, kind: str = "generic") -> None:
        fld1.write_array(self.root / name, np.asarray(arr), kind)
        self.files.append(name)

    def table(self, name: str, tab: lab.ConvergenceTable) -> None:
        self.text(f"{name}.csv", tab.to_csv())
        self.timings[name] = tab.timings()


def _tab_summary(tab: lab.ConvergenceTable) -> dict:
    s = tab.summary()
    s["rows"] = [{k: v for k, v in r.items() if k != "wall"} for r in tab.rows]
    return s


def _run_table(out: _Out, tab: lab.ConvergenceTable, name: str = "table"):
    out.table(name, tab)
    return tab.verdict, _tab_summary(tab)


def exp_solve_fiber(p, seed, out: _Out):
    _, prob = _fiber(p)
    t0 = time.perf_counter()
    s = solve(prob)
    out.timings["solve"] = time.perf_counter() - t0
    res = verify_solution(prob, s)
    out.field("phi.fld1", s.phi.values, "potential")
    out.field("metric_density.fld1", metric_density(prob, np.asarray(s.phi.values)), "density")
    summ = {"verify_residual": res, "solver_residual": s.residual_inf, "newton_iters": s.newton_iters, "sup_phi": float(np.max(s.phi.values)), "inf_phi": float(np.min(s.phi.values))}
    return res <= p["tol"], summ


def _report(out: _Out, rep, prefix: str = "curvature"):
    for k, (i, j) in enumerate(rep.indices):
        out.field(f"{prefix}_c_{i:03d}_{j:03d}.fld1", rep.c[k])
        out.field(f"{prefix}_v_{i:03d}_{j:03d}.fld1", rep.v[k])
    return rep.summary()


def exp_solve_family(p, seed, out: _Out):
    cfg = family_from_dict(p["family"])
    t0 = time.perf_counter()
    sol = solve_family(cfg)
    try:
        rep = geodesic_curvature(sol, check=True)
        consistent = True
    except ConsistencyError as e:
        rep = geodesic_curvature(sol, check=False)
        rep.flags["consistency_error"] = str(e)
        consistent = False
    out.timings["solve"] = time.perf_counter() - t0
    summ = _report(out, rep)
    summ["max_residual"] = sol.max_residual()
    summ["c_spread"] = rep.max_c - rep.min_c
    return consistent and rep.min_g > 0, summ


def exp_identity(which: str):
    def run(p, seed, out: _Out):
        cfg = family_from_dict(p["family"])
        kw = dict(levels=p["levels"], tol=p["tol"])
        if which == "lift-derivative":
            kw.update(lift_choice=p["lift"], lam_shift=p["lam_shift"])
        return _run_table(out, lab.identity_refinement(cfg, which, **kw))

    return run


def exp_twist_limit(p, seed, out):
    _, prob = _fiber(p)
    return _run_table(out, lab.twist_limit_experiment(prob, _schedule("epsilon", p["schedule"])))


def exp_smoothing(p, seed, out):
    return _run_table(out, lab.smoothing_convergence(family_from_dict(p["family"]), _schedule("delta", p["schedule"])))


def exp_centering(p, seed, out):
    return _run_table(out, lab.curvature_centering(family_from_dict(p["family"]), _schedule("delta", p["schedule"])))


def exp_inequality(kind: str):
    def run(p, seed, out: _Out):
        _, prob = _fiber(p)
        sched = _schedule("epsilon", p["schedule"])
        ok, per = True, {}
        for s in range(seed, seed + p["n_seeds"]):
            tab = lab.inequality_uniformity(kind, prob.grid, prob.density.divisor, p["p"], sched, p["n_samples"], s)
            out.table(f"table_seed{s}", tab)
            per[str(s)] = _tab_summary(tab)
            ok &= tab.verdict
        return ok, {"verdict": "pass" if ok else "fail", "seeds": per}

    return run


def exp_sequences(p, seed, out: _Out):
    chk = lab.sequences_check(p["n_max"])
    lines = ["n,k,p,p_closed,q,q_closed\r\n"]
    for n in range(1, p["n_max"] + 1):
        for r in lab.iteration_sequences(n):
            lines.append(",".join(str(x) for x in (n, r["k"], r["p"], r["p_closed"], r["q"], r["q_closed"])) + "\r\n")
    out.text("sequences.csv", "".join(lines))
    ok = chk["p_closed_form"] and chk["q_general_closed_form"] and chk["q_top_stated_formula"]
    return ok, chk


def exp_transverse(p, seed, out):
    cfg = family_from_dict(p["family"])
    return _run_table(out, lab.transverse_diagnostics(cfg, _schedule("epsilon", p["schedule"]), n_multiplier=p["n_multiplier"]))


def exp_gradient(p, seed, out):
    _, prob = _fiber(p)
    return _run_table(out, lab.gradient_diagnostic(prob, _schedule("epsilon", p["schedule"]), p["factor"]))


def exp_counterexample(p, seed, out: _Out):
    cfg = family_from_dict(p["family"])
    rep, tab = lab.counterexample_experiment(cfg, _schedule("epsilon_A", p["schedule"]), p["levels"])
    out.table("perturbation", tab)
    summ = _report(out, rep)
    summ["perturbation"] = _tab_summary(tab)
    stable = rep.flags["sign_stable"] and rep.flags["relative_change"] <= 0.1
    if p["expect"] == "negative":
        sign_ok = rep.min_c < 0
    else:
        sign_ok = rep.min_c >= -p["tol"]
    return bool(sign_ok and stable and tab.verdict), summ


def exp_degeneration(p, seed, out):
    return _run_table(out, lab.degeneration_experiment(family_from_dict(p["family"]), tuple(p["targets"])))


RUNNERS = {
    "solve-fiber": exp_solve_fiber,
    "solve-family": exp_solve_family,
    "identity-129": exp_identity("curvature-laplacian"),
    "identity-248": exp_identity("lift-derivative"),
    "lemma14": exp_twist_limit,
    "smoothing": exp_smoothing,
    "centering": exp_centering,
    "sobolev": exp_inequality("sobolev"),
    "poincare": exp_inequality("poincare"),
    "sequences": exp_sequences,
    "transverse": exp_transverse,
    "gradient": exp_gradient,
    "counterexample": exp_counterexample,
    "degeneration": exp_degeneration,
}


# ---------------------------------------------------------------- run / replay / plotdata


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    with os.fdopen(fd, "w") as f:
        f.write(text)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


def execute(cfg: ExperimentConfig, out_dir, workers: int = 1, seed_source: str = "config") -> tuple[bool, dict]:
    """Run a resolved config into out_dir; the manifest is written last."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    (root / MANIFEST).unlink(missing_ok=True)
    started = _now()
    prev = family_geometry.DEFAULT_WORKERS
    family_geometry.DEFAULT_WORKERS = max(1, int(workers))
    out = _Out(root)
    try:
        passed, summary = RUNNERS[cfg.experiment](cfg.parameters, cfg.seed, out)
    finally:
        family_geometry.DEFAULT_WORKERS = prev
    summary = {"experiment": cfg.experiment, "verdict": "pass" if passed else "fail", "summary": summary}
    out.json("summary.json", summary)
    (root / TIMINGS).write_text(json.dumps(out.timings, indent=2, sort_keys=True) + "\n")
    manifest = {
        "artifact_version": __version__,
        "config": cfg.to_dict(),
        "config_hash": hashlib.sha256(_canonical(cfg.to_dict())).hexdigest(),
        "seed": cfg.seed,
        "seed_source": seed_source,
        "workers": int(workers),
        "started": started,
        "finished": _now(),
        "verdict": summary["verdict"],
        "files": {name: sha256_file(root / name) for name in out.files},
        "volatile": [TIMINGS],
    }
    _atomic_write(root / MANIFEST, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return passed, summary


def cmd_run(args) -> int:
    cfg = resolve(load_config(args.config))
    source = "config"
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            seed = int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV}: expected an integer, got {env!r}")
        cfg = ExperimentConfig(cfg.experiment, cfg.parameters, seed, cfg.output_dir)
        source = "env"
    out = args.out or cfg.output_dir or os.path.join("runs", cfg.experiment)
    passed, summary = execute(cfg, out, args.workers, source)
    print(f"{cfg.experiment}: {summary['verdict']} -> {out}")
    return 0 if passed else 2


def cmd_replay(args) -> int:
    root = Path(args.dir)
    mpath = root / MANIFEST
    if not mpath.exists():
        raise ConfigError(f"{root}: no {MANIFEST} (incomplete or not a run directory)")
    manifest = json.loads(mpath.read_text())
    files = manifest["files"]
    for name in sorted(files):
        p = root / name
        if not p.exists() or sha256_file(p) != files[name]:
            print(f"replay: stored file differs from manifest: {name}")
            return 2
    cfg = parse_config(manifest["config"])
    with tempfile.TemporaryDirectory() as tmp:
        execute(cfg, tmp, args.workers, manifest.get("seed_source", "config"))
        fresh = json.loads((Path(tmp) / MANIFEST).read_text())["files"]
    if sorted(fresh) != sorted(files):
        extra = sorted(set(fresh) ^ set(files))
        print(f"replay: file set differs: {extra[0]}")
        return 2
    for name in sorted(files):
        if fresh[name] != files[name]:
            print(f"replay: mismatch in {name}")
            return 2
    print(f"replay: {len(files)} files identical")
    return 0


def _fmt(x: float) -> str:
    return repr(float(x))


def cmd_plotdata(args) -> int:
    root = Path(args.dir)
    fields = sorted(root.glob("*.fld1"))
    tables = sorted(root.glob("*.csv"))
    if not fields and not tables:
        print(f"plotdata: nothing to convert in {root}")
        return 0
    dest = root / "plotdata"
    dest.mkdir(exist_ok=True)
    for f in fields:
        vals, _ = fld1.read_array(f)
        n = vals.shape[0]
        x = np.arange(n) / n
        lines = []
        for i in range(n):
            for j in range(n):
                v = vals[i, j]
                if np.iscomplexobj(vals):
                    lines.append(f"{_fmt(x[i])} {_fmt(x[j])} {_fmt(v.real)} {_fmt(v.imag)}\n")
                else:
                    lines.append(f"{_fmt(x[i])} {_fmt(x[j])} {_fmt(v)}\n")
        (dest / (f.stem + ".xyz")).write_text("".join(lines))
    summ = {}
    if (root / "summary.json").exists():
        summ = json.loads((root / "summary.json").read_text()).get("summary", {})
    for t in tables:
        with open(t, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or "param" not in rows[0] or "primary" not in rows[0]:
            continue
        lines = ["# log10(param) log10(primary)\n"]
        for r in rows:
            a, b = float(r["param"]), float(r["primary"])
            if a > 0 and b > 0:
                lines.append(f"{_fmt(math.log10(a))} {_fmt(math.log10(b))}\n")
        order = summ.get("fitted_order")
        if order is None and isinstance(summ.get("perturbation"), dict):
            order = summ["perturbation"].get("fitted_order")
        lines.append(f"# fitted order: {order if order is not None else 'n/a'}\n")
        (dest / (t.stem + ".loglog.txt")).write_text("".join(lines))
    print(f"plotdata: {len(fields)} fields, {len(tables)} tables -> {dest}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fibermetric", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    r.add_argument("--out", default=None)
    r.set_defaults(fn=cmd_run)
    p = sub.add_parser("replay", help="re-run a run directory and compare checksums")
    p.add_argument("dir")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.set_defaults(fn=cmd_replay)
    d = sub.add_parser("plotdata", help="convert fields and tables to plain text")
    d.add_argument("dir")
    d.set_defaults(fn=cmd_plotdata)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
    except (FamilyError, SolverError) as e:
        print(f"solver error: {e}", file=sys.stderr)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
