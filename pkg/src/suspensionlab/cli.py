"""Configuration-driven experiment runner.

    suspensionlab run ctrw --t 25,100,400 --seed 7
    suspensionlab run eig --system doubling-pm-half --t-grid 0:1:0.05 --seed 1
    suspensionlab list-systems --json

Exit status is 0 iff every criterion of the run passes, 1 if any fails and
2 on configuration errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from fractions import Fraction
from pathlib import Path
from typing import Callable

from . import ctrw as ctrw_mod
from .cocycle import CocycleSystem, GroupSpec
from .dynamics import (
    build_interval_map_from_markov,
    cylinder_measure_error,
    map_from_config,
    markov_shift_from_config,
)
from .experiments import (
    LLTExperiment,
    deviation_bound_check,
    estimate_con_llt,
    estimate_int_llt,
    extended_llt_ratio,
    fit_split_eps,
    order2_rwm,
    rwm_cesaro,
    split_I_II,
)
from .report import Criterion, Report, close, flag, upper
from .systems import CATALOG, get_system, list_systems
from .transfer import discretize, eigen_curve, nagaev_fit

KINDS = ("ctrw", "eig", "llt-int", "llt-con", "split", "deviation", "extended", "rwm", "rwm2", "build-map")

DEFAULT_SYSTEM = {
    "eig": "doubling-pm-half",
    "llt-int": "doubling-digit",
    "llt-con": "doubling-digit",
    "split": "roof-two-level",
    "deviation": "roof-two-level",
    "extended": "roof-two-level",
    "rwm": "roof-const",
    "rwm2": "zcover-sft",
}

DEFAULT_PARAMS = {
    "ctrw": {"times": [25, 100, 400], "intensity": "1", "jumps": {"-1": "0.5", "1": "0.5"}, "z": "0",
             "U": [0], "tolerances": {"100": "0.08", "400": "0.02"}, "realization_samples": 0,
             "realization_t": "20"},
    "eig": {"t_grid": "0:1:0.05", "nbins": 64, "tol": "1e-3", "fit_radius": "0.1"},
    "llt-int": {"times": [200], "mode": "exact", "samples": 100000, "tol": "0.1"},
    "llt-con": {"times": [256], "tol": "0.1", "spread_tol": "0.1"},
    "split": {"t_train": 50, "t_test": [80], "M": [1, 2, 3, 4], "tol": "0.1"},
    "deviation": {"t_train": [20, 40, 60, 80, 100], "t_test": [30, 50, 70, 90], "M": "1", "y": "0.5"},
    "extended": {"n_train": [8, 16, 32, 64], "n_test": [12, 24, 48, 96]},
    "rwm": {"N_grid": [16, 64, 256, 1024], "tau": "1", "ratio": "0.15", "max_loss": "1e-6"},
    "rwm2": {"N_grid": [16, 64, 256], "tau": 1, "krickeberg_t": 128, "tol": "0.15"},
    "build-map": {"map": {"type": "markov_shift", "symbols": [1, 2], "adjacency": [[1, 1], [1, 0]],
                          "name": "golden-mean"}, "depth": 4, "tol": "1e-12"},
}

# closed-form dominant eigenvalues used as column-wise references
CLOSED_FORMS: dict[str, Callable[[float], float]] = {
    "doubling-pm-half": lambda t: math.cos(t / 2),
}
CLOSED_CURVATURE = {"doubling-pm-half": (0.125, 0.002)}

T_FLAG_TARGET = {"ctrw": "times", "llt-int": "times", "llt-con": "times", "split": "t_test",
                 "deviation": "t_test", "extended": "n_test"}


class ConfigError(ValueError):
    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


def num(v, path: str = "value") -> float:
    try:
        if isinstance(v, str):
            return float(Fraction(v.strip()))
        if isinstance(v, bool):
            raise TypeError
        return float(v)
    except (TypeError, ValueError, ZeroDivisionError):
        raise ConfigError(path, f"not a number: {v!r}") from None


def num_list(v, path: str) -> list[float]:
    if isinstance(v, str):
        v = [x for x in v.split(",") if x.strip()]
    if not isinstance(v, (list, tuple)) or len(v) == 0:
        raise ConfigError(path, "expected a nonempty list")
    return [num(x, f"{path}[{i}]") for i, x in enumerate(v)]


def parse_grid(spec: str, path: str = "t_grid") -> list[float]:
    """'a:b:h' -> a, a + h, ..., b (inclusive, exact decimal stepping)."""
    try:
        a, b, h = (Fraction(x.strip()) for x in spec.split(":"))
    except ValueError:
        raise ConfigError(path, f"expected start:stop:step, got {spec!r}") from None
    if h <= 0 or b < a:
        raise ConfigError(path, "need step > 0 and stop >= start")
    n = int((b - a) / h)
    return [float(a + i * h) for i in range(n + 1)]


# ---------------------------------------------------------------------------
# config


def resolve_config(raw: dict) -> dict:
    """Fill defaults and validate; returns the canonical config that gets hashed."""
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigError("kind", f"expected one of {', '.join(KINDS)}, got {kind!r}")
    seed = raw.get("seed")
    if seed is None:
        raise ConfigError("seed", "required (no wall-clock default)")
    if isinstance(seed, bool) or not isinstance(seed, (int, str)) or not str(seed).strip().lstrip("-").isdigit():
        raise ConfigError("seed", f"expected an integer, got {seed!r}")
    workers = raw.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError("workers", "expected a positive integer")
    params = dict(DEFAULT_PARAMS[kind])
    extra = raw.get("params", {})
    if not isinstance(extra, dict):
        raise ConfigError("params", "expected an object")
    for key in extra:
        if key not in params:
            raise ConfigError(f"params.{key}", f"unknown parameter for {kind}")
    params.update(extra)
    system = raw.get("system", DEFAULT_SYSTEM.get(kind))
    if isinstance(system, str) and system not in CATALOG:
        raise ConfigError("system", f"unknown system {system!r}")
    if isinstance(system, dict):
        for key in ("map", "roof", "phi"):
            if key not in system:
                raise ConfigError(f"system.{key}", "required for an inline system")
    return {"kind": kind, "seed": int(seed), "workers": workers, "system": system, "params": params}


def inline_system(spec: dict) -> CocycleSystem:
    mcfg = spec["map"]
    imap = map_from_config(mcfg)
    lattice = bool(spec.get("lattice", True))

    def table(key):
        vals = spec[key]
        out = {}
        for s in imap.alphabet:
            if str(s) not in vals:
                raise ConfigError(f"system.{key}.{s}", "missing value for symbol")
            v = vals[str(s)]
            out[(s,)] = (int(num(v)) if lattice and key == "phi" else num(v, f"system.{key}.{s}"))
        return out

    return CocycleSystem.build(imap, table("roof"), table("phi"), GroupSpec(1, lattice),
                               name=spec.get("name", "inline"))


def system_of(cfg: dict) -> CocycleSystem:
    s = cfg["system"]
    return inline_system(s) if isinstance(s, dict) else get_system(s)


# ---------------------------------------------------------------------------
# experiment handlers


def _ctrw(cfg, rep: Report):
    p = cfg["params"]
    jumps = {int(k): num(v, f"params.jumps.{k}") for k, v in p["jumps"].items()}
    lam = num(p["intensity"], "params.intensity")
    model = ctrw_mod.CTRWModel(lam, jumps)
    z = num(p["z"], "params.z")
    U = tuple(int(u) for u in p["U"])
    times = num_list(p["times"], "params.times")
    tols = {num(k): num(v) for k, v in p["tolerances"].items()}
    rep.header = ("t", "value", "target", "rel_error")
    errs = []
    for t in times:
        c = ctrw_mod.ctrw_llt_check(model, t, z=z, U=U)
        rep.rows.append(c.as_row())
        errs.append(abs(c.rel_error))
        if t in tols:
            rep.criteria.append(Criterion(f"ctrw_llt_t{t:g}", abs(c.rel_error), 0.0, tols[t],
                                          abs(c.rel_error) < tols[t]))
    if len(errs) > 1:
        rep.criteria.append(flag("ctrw_llt_error_decreasing", all(a > b for a, b in zip(errs, errs[1:]))))
    if jumps == {-1: 0.5, 1: 0.5} and lam == 1.0:
        rep.criteria.append(close("bessel_identity_t1", ctrw_mod.exact_dist(model, 1.0, 0),
                                  ctrw_mod.bessel_series(1.0), 1e-10))
    n_real = int(p["realization_samples"])
    if n_real > 0:
        r = ctrw_mod.build_suspension_realization(model, num(p["realization_t"]) / lam, n_real, cfg["seed"])
        rep.criteria.append(upper("realization_tv", r.tv_distance, 0.01))


def _eig(cfg, rep: Report):
    p = cfg["params"]
    sysm = system_of(cfg)
    grid = parse_grid(p["t_grid"], "params.t_grid") if isinstance(p["t_grid"], str) \
        else num_list(p["t_grid"], "params.t_grid")
    base = discretize(sysm, int(p["nbins"]))
    rows = eigen_curve(base, grid)
    ref = CLOSED_FORMS.get(cfg["system"]) if isinstance(cfg["system"], str) else None
    rep.header = ("t", "re_lambda", "im_lambda", "abs_lambda", "reference", "abs_error")
    worst = 0.0
    for t, re, im, ab in rows:
        if ref is None:
            rep.rows.append((t, re, im, ab, "", ""))
        else:
            err = abs(complex(re, im) - ref(t))
            worst = max(worst, err)
            rep.rows.append((t, re, im, ab, ref(t), err))
    if ref is not None:
        rep.criteria.append(upper("eig_closed_form_max_error", worst, num(p["tol"])))
    fit = nagaev_fit(base, radius=num(p["fit_radius"]))
    rep.extra["nagaev"] = {"gamma": fit.gamma.tolist(), "coords": list(fit.coords), "a": fit.a,
                           "residual": fit.residual, "nbins": base.nbins}
    if isinstance(cfg["system"], str) and cfg["system"] in CLOSED_CURVATURE:
        a0, tol = CLOSED_CURVATURE[cfg["system"]]
        rep.criteria.append(close("nagaev_curvature", fit.a, a0, tol))


def _llt_int(cfg, rep: Report):
    p = cfg["params"]
    times = tuple(num_list(p["times"], "params.times"))
    exp = LLTExperiment(system_of(cfg), times=times, samples=int(p["samples"]))
    pts = estimate_int_llt(exp, p["mode"], seed=cfg["seed"], workers=cfg["workers"])
    tol = num(p["tol"])
    rep.header = ("t", "estimate", "stderr", "target", "rel_error", "b", "drift", "mode")
    for q in pts:
        rep.rows.append((q.t, q.estimate, q.stderr, q.target, q.rel_error, q.b, q.drift, q.mode))
        slack = 3 * q.stderr / q.target if q.target else 0.0
        rep.criteria.append(Criterion(f"int_llt_t{q.t:g}", abs(q.rel_error), 0.0, tol + slack,
                                      abs(q.rel_error) < tol + slack))


def _llt_con(cfg, rep: Report):
    p = cfg["params"]
    times = tuple(num_list(p["times"], "params.times"))
    exp = LLTExperiment(system_of(cfg), times=times)
    rep.header = ("t", "point", "value", "target")
    for q in estimate_con_llt(exp):
        for i, v in enumerate(q.values):
            rep.rows.append((q.t, i, v, q.target))
        rep.criteria.append(upper(f"con_llt_t{q.t:g}_max_rel_error", q.max_rel_error, num(p["tol"])))
        rep.criteria.append(upper(f"con_llt_t{q.t:g}_spread", q.spread, num(p["spread_tol"])))


def _split(cfg, rep: Report):
    p = cfg["params"]
    exp = LLTExperiment(system_of(cfg), times=(num(p["t_train"]),))
    fit = fit_split_eps(exp, num(p["t_train"]))
    Ms = num_list(p["M"], "params.M")
    rep.header = ("t", "M", "b_I", "b_II", "eps", "target")
    rep.extra["fit"] = {"zeta": fit.zeta, "K": fit.K, "C": fit.C, "t_train": fit.t_train}
    for t in num_list(p["t_test"], "params.t_test"):
        for M in Ms:
            r = split_I_II(exp, M, t)
            eps = fit.eps(M)
            rep.rows.append((t, M, r.I_value, r.II_value, eps, r.target))
            rep.criteria.append(upper(f"split_II_t{t:g}_M{M:g}", r.II_value, eps))
        r = split_I_II(exp, max(Ms), t)
        rep.criteria.append(close(f"split_I_t{t:g}_M{max(Ms):g}", r.I_value, r.target, num(p["tol"]),
                                  relative=True))


def _bound_rows(rep: Report, name: str, br, cols):
    rep.header = ("set",) + cols + ("ratio",)
    for row in br.train:
        rep.rows.append(("train",) + tuple(row))
    for row in br.test:
        rep.rows.append(("test",) + tuple(row))
    rep.extra["constants"] = br.constants
    rep.criteria.append(upper(f"{name}_train_max_ratio", br.train_max_ratio, 1.0 + 1e-9))
    rep.criteria.append(upper(f"{name}_test_max_ratio", br.test_max_ratio, 1.0 + 1e-9))


def _deviation(cfg, rep: Report):
    p = cfg["params"]
    exp = LLTExperiment(system_of(cfg))
    br = deviation_bound_check(exp, num_list(p["t_train"], "params.t_train"),
                               num_list(p["t_test"], "params.t_test"), M=num(p["M"]), y=num(p["y"]))
    _bound_rows(rep, "deviation", br, ("n", "t", "value"))


def _extended(cfg, rep: Report):
    p = cfg["params"]
    br = extended_llt_ratio(system_of(cfg), [int(n) for n in num_list(p["n_train"], "params.n_train")],
                            [int(n) for n in num_list(p["n_test"], "params.n_test")])
    _bound_rows(rep, "extended", br, ("n", "x_phi", "x_roof", "value"))


def _rwm(cfg, rep: Report):
    p = cfg["params"]
    N = [int(n) for n in num_list(p["N_grid"], "params.N_grid")]
    r = rwm_cesaro(system_of(cfg), tau=num(p["tau"]), N_grid=N, max_loss=num(p["max_loss"]))
    rep.header = ("N", "D", "a")
    rep.rows = list(zip(r.N_grid, r.D, r.a))
    rep.extra.update({"L": r.L, **r.constants})
    rep.criteria.append(flag("rwm_D_strictly_decreasing", r.decreasing))
    rep.criteria.append(upper("rwm_D_last_over_first", r.ratio_last_first, num(p["ratio"])))
    rep.criteria.append(upper("rwm_mass_loss", r.mass_loss, num(p["max_loss"])))


def _rwm2(cfg, rep: Report):
    p = cfg["params"]
    N = [int(n) for n in num_list(p["N_grid"], "params.N_grid")]
    r = order2_rwm(system_of(cfg), tau=int(p["tau"]), N_grid=N, krickeberg_t=int(p["krickeberg_t"]))
    rep.header = ("N", "cesaro")
    rep.rows = list(zip(r.N_grid, r.cesaro))
    rep.extra["krickeberg"] = {"t": r.krickeberg_t, "value": r.krickeberg_value, "target": r.krickeberg_target}
    rep.criteria.append(close("krickeberg_order1", r.krickeberg_value, r.krickeberg_target, num(p["tol"]),
                              relative=True))
    rep.criteria.append(upper("order2_cesaro_last_vs_first", r.cesaro[-1], r.cesaro[0]))


def _build_map(cfg, rep: Report):
    p = cfg["params"]
    mcfg = p["map"]
    if mcfg.get("type") != "markov_shift":
        raise ConfigError("params.map.type", "build-map expects a markov_shift definition")
    shift = markov_shift_from_config(mcfg)
    imap = build_interval_map_from_markov(shift, name=mcfg.get("name", "markov"))
    rep.header = ("label", "lo", "hi", "slope", "offset")
    for (lo, hi), lab, br in zip(imap.partition.cells, imap.partition.labels, imap.branches):
        rep.rows.append((json.dumps(lab if not isinstance(lab, tuple) else list(lab)), lo, hi, br.slope, br.offset))
    err = cylinder_measure_error(imap, shift, int(p["depth"]))
    rep.extra["symbol_order"] = [str(s) for s in imap.meta.get("symbol_order", ())]
    rep.criteria.append(upper(f"cylinder_measure_error_depth{int(p['depth'])}", err, num(p["tol"])))


HANDLERS = {"ctrw": _ctrw, "eig": _eig, "llt-int": _llt_int, "llt-con": _llt_con, "split": _split,
            "deviation": _deviation, "extended": _extended, "rwm": _rwm, "rwm2": _rwm2, "build-map": _build_map}


def run_experiment(raw: dict) -> Report:
    cfg = resolve_config(raw)
    rep = Report(cfg["kind"], cfg, cfg["seed"])
    HANDLERS[cfg["kind"]](cfg, rep)
    return rep


# ---------------------------------------------------------------------------
# argparse front end


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="suspensionlab", description="Suspended semiflow experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("kind", choices=KINDS)
    run.add_argument("--config", type=Path, help="JSON config (decimal-string numerics)")
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--out", type=Path, default=None, help="output directory for CSV and JSON")
    run.add_argument("--json", action="store_true", help="print the JSON summary")
    run.add_argument("--system")
    run.add_argument("--t", help="comma-separated time list")
    run.add_argument("--t-grid", help="start:stop:step twist grid (eig)")
    ls = sub.add_parser("list-systems", help="print the built-in catalog")
    ls.add_argument("--json", action="store_true")
    return ap


def _raw_from_args(args) -> dict:
    raw: dict = {}
    if args.config:
        try:
            raw = json.loads(args.config.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", str(exc)) from None
        if not isinstance(raw, dict):
            raise ConfigError("config", "top level must be an object")
    raw_kind = raw.get("kind", args.kind)
    if raw_kind != args.kind:
        raise ConfigError("kind", f"config says {raw_kind!r} but command says {args.kind!r}")
    raw["kind"] = args.kind
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.workers is not None:
        raw["workers"] = args.workers
    if args.system is not None:
        raw["system"] = args.system
    params = dict(raw.get("params", {}))
    if args.t is not None:
        if args.kind not in T_FLAG_TARGET:
            raise ConfigError("--t", f"not used by {args.kind}")
        params[T_FLAG_TARGET[args.kind]] = [x.strip() for x in args.t.split(",") if x.strip()]
    if args.t_grid is not None:
        if args.kind != "eig":
            raise ConfigError("--t-grid", "only used by eig")
        params["t_grid"] = args.t_grid
    if params:
        raw["params"] = params
    return raw


def _print_catalog(as_json: bool):
    cat = list_systems()
    if as_json:
        print(json.dumps(cat, indent=2, sort_keys=True))
        return
    for e in cat:
        print(f"{e['name']:<20} kappa={e['kappa']} lattice={str(e['lattice']):<5} "
              f"afu={str(e['afu_ok']):<5} gm={str(e['gm_ok']):<5} E(r)={e['mean_roof']:.6g}  {e['description']}")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list-systems":
        _print_catalog(args.json)
        return 0
    try:
        rep = run_experiment(_raw_from_args(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.out is not None:
        rep.write(args.out)
    if args.json:
        sys.stdout.write(rep.to_json())
    else:
        if args.out is None:
            print(",".join(rep.header))
            for row in rep.rows:
                print(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
        for c in rep.criteria:
            print(f"{'PASS' if c.passed else 'FAIL'} {c.name} value={c.value:.6g}"
                  + (f" target={c.target:.6g}" if c.target is not None else "")
                  + (f" tol={c.tol:.3g}" if c.tol else ""), file=sys.stderr)
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
