"""Batch front end: validated JSON configs in, CSV / JSON-lines artifacts out.

    degenhyp <command> --config cfg.json [--out DIR] [--workers N] [--seed S]

Commands: analyze-system, analyze-operator, solve, loss-experiment,
check-symbol, sweep.  Exit codes: 0 success, 2 config/usage error,
3 numerical failure.  Identical config + seed produce byte-identical data
artifacts; wall time lives only in report.json.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from jsonschema import ValidationError, validate

from . import problems as problems_mod
from .errors import DegenhypError
from .reduction import ScalarOperator, cross_validate, delta_bound_scalar
from .solver import (PeriodicGrid, decay_exponent, empirical_loss, energy_ratio,
                     make_decay_data, solve_cauchy)
from .symbols import SymbolOrders, estimate_constants, make_symbol_grid, weight_power_symbol
from .systems import FirstOrderSystem, delta_bound_system, symmetrizer_from_roots
from .weights import DegeneracySpec, bracket, smooth_cutoff

COMMANDS = ("analyze-system", "analyze-operator", "solve", "loss-experiment",
            "check-symbol", "sweep")

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["command", "degeneracy"],
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "degeneracy": {
            "type": "object",
            "required": ["l_star"],
            "properties": {"l_star": {"type": "integer", "minimum": 1},
                           "T": {"type": "number", "exclusiveMinimum": 0}},
        },
        "problem": {
            "type": "object",
            "properties": {
                "builtin": {"type": "string"},
                "params": {"type": "object"},
                "operator": {
                    "type": "object",
                    "required": ["m", "coeffs"],
                    "properties": {
                        "m": {"type": "integer", "minimum": 1},
                        "coeffs": {"type": "array", "items": {
                            "type": "object",
                            "required": ["j", "alpha", "value"],
                            "properties": {"j": {"type": "integer", "minimum": 0},
                                           "alpha": {"type": "integer", "minimum": 0},
                                           "value": {}},
                        }},
                    },
                },
                "system": {
                    "type": "object",
                    "required": ["n", "a0", "roots"],
                    "properties": {"n": {"type": "integer", "minimum": 1},
                                   "a0": {"type": "array"},
                                   "a1": {"type": "array"},
                                   "a0_odd": {"type": "boolean"},
                                   "a1_odd": {"type": "boolean"},
                                   "roots": {"type": "array", "items": {
                                       "type": "object",
                                       "required": ["mu", "mult"],
                                   }}},
                },
            },
        },
        "grids": {
            "type": "object",
            "properties": {"x_points": {"type": "integer", "minimum": 1},
                           "x_range": {"type": "array", "minItems": 2, "maxItems": 2},
                           "xi_samples": {"type": "array", "minItems": 1},
                           "n_modes": {"type": "integer", "minimum": 16}},
        },
        "tolerances": {
            "type": "object",
            "properties": {"ode_tol": {"type": "number", "exclusiveMinimum": 0},
                           "gap_tol": {"type": "number", "exclusiveMinimum": 0}},
        },
        "experiment": {
            "type": "object",
            "properties": {"sigma_data": {"type": "number"},
                           "t_probe": {"type": "number", "exclusiveMinimum": 0},
                           "eps": {"type": "number", "minimum": 0},
                           "fit_band": {"type": "array", "minItems": 2, "maxItems": 2}},
        },
        "solve": {
            "type": "object",
            "properties": {"t_out": {"type": "array", "minItems": 1},
                           "eps": {"type": "number", "minimum": 0},
                           "data_sigma": {"type": "number"},
                           "band_limit": {"type": "integer", "minimum": 1}},
        },
        "symbol": {
            "type": "object",
            "properties": {"name": {"enum": ["weight-power", "lambda-bracket", "chi-minus"]},
                           "m": {"type": "number"}, "eta": {"type": "number"},
                           "max_orders": {"type": "array", "minItems": 3, "maxItems": 3},
                           "xi_max": {"type": "number", "exclusiveMinimum": 1}},
        },
        "sweep": {
            "type": "object",
            "required": ["path", "values"],
            "properties": {"path": {"type": "string"},
                           "values": {"type": "array", "minItems": 1},
                           "command": {"enum": [c for c in COMMANDS if c != "sweep"]}},
        },
        "seed": {"type": "integer", "minimum": 0},
        "out": {"type": "string"},
    },
}

_DEFAULTS = {
    "grids": {"x_points": 5, "x_range": [-3.0, 3.0], "xi_samples": [1.0, -1.0], "n_modes": 2048},
    "tolerances": {"ode_tol": 1e-8, "gap_tol": 1e-6},
    "experiment": {"sigma_data": 6.0, "t_probe": 1.0, "eps": 0.0},
    "solve": {"eps": 0.0, "data_sigma": 3.0},
    "seed": 0,
}


class ConfigError(ValueError):
    """Invalid run configuration (exit code 2)."""


@dataclass
class RunReport:
    status: str
    wall_time_s: float
    artifacts: list
    headline: dict
    config: dict

    def write(self, out_dir: Path):
        path = out_dir / "report.json"
        with open(path, "w") as fh:
            json.dump({"status": self.status, "wall_time_s": self.wall_time_s,
                       "artifacts": self.artifacts, "headline": self.headline,
                       "config": self.config}, fh, sort_keys=True, indent=1, default=_plain)
        return path


def _plain(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, default=_plain)


def _complex_of(value):
    if isinstance(value, (list, tuple)):
        return complex(value[0], value[1])
    return complex(value)


def resolve_config(config: dict) -> dict:
    """Schema-validate and fill defaults; raises ConfigError on violations."""
    try:
        validate(config, CONFIG_SCHEMA)
    except ValidationError as exc:
        raise ConfigError(f"config rejected by schema: {exc.message}") from exc
    resolved = copy.deepcopy(config)
    for key, defaults in _DEFAULTS.items():
        if isinstance(defaults, dict):
            block = dict(defaults)
            block.update(resolved.get(key, {}))
            resolved[key] = block
        else:
            resolved.setdefault(key, defaults)
    resolved["degeneracy"].setdefault("T", 1.0)
    return resolved


def _spec_of(config) -> DegeneracySpec:
    d = config["degeneracy"]
    return DegeneracySpec(l_star=int(d["l_star"]), T=float(d["T"]))


def _build_problem(config):
    spec = _spec_of(config)
    pb = config.get("problem", {})
    if "builtin" in pb:
        params = dict(pb.get("params", {}))
        name = pb["builtin"]
        try:
            if name in ("qi", "reduced-qi"):
                if spec.l_star != 1:
                    raise ConfigError(f"builtin {name!r} is the l_star = 1 family")
                params.setdefault("T", spec.T)
            elif name in ("wave", "transport", "differential"):
                params.setdefault("l_star", spec.l_star)
                params.setdefault("T", spec.T)
            return problems_mod.builtin(name, **params)
        except KeyError as exc:
            raise ConfigError(str(exc)) from exc
        except TypeError as exc:
            raise ConfigError(f"bad parameters for builtin {name!r}: {exc}") from exc
    if "operator" in pb:
        tab = pb["operator"]
        coeffs = {(int(c["j"]), int(c["alpha"])): _complex_of(c["value"]) for c in tab["coeffs"]}
        op = ScalarOperator(m=int(tab["m"]), spec=spec, coeffs=coeffs,
                            gap_tol=config["tolerances"]["gap_tol"])
        return op
    if "system" in pb:
        tab = pb["system"]
        n = int(tab["n"])
        a0 = np.array([[_complex_of(v) for v in row] for row in tab["a0"]])
        a1 = (np.array([[_complex_of(v) for v in row] for row in tab["a1"]])
              if "a1" in tab else np.zeros((n, n), dtype=complex))
        a0_odd = tab.get("a0_odd", True)
        a1_odd = tab.get("a1_odd", False)

        def root_fn(mu, odd=a0_odd):
            return lambda t, x, xi_hat: mu * (xi_hat if odd else 1.0)

        return FirstOrderSystem(
            N=n, spec=spec,
            A0=lambda t, x, xi_hat: a0 * (xi_hat if a0_odd else 1.0),
            A1=lambda x, xi_hat: a1 * (xi_hat if a1_odd else 1.0),
            roots=tuple((root_fn(float(r["mu"])), int(r["mult"])) for r in tab["roots"]),
        )
    raise ConfigError("problem must provide one of: builtin, operator, system")


def _x_grid(config):
    g = config["grids"]
    lo, hi = g["x_range"]
    return np.linspace(float(lo), float(hi), int(g["x_points"]))


def _headline_delta(db) -> dict:
    return {"delta_min": float(db.delta.min()), "delta_max": float(db.delta.max()),
            "loss_min": float(db.loss.min()), "loss_max": float(db.loss.max())}


def _write_delta_csv(db, out_dir: Path, config) -> Path:
    path = out_dir / "delta.csv"
    db.meta = dict(db.meta, config=config)
    db.to_csv(path)
    return path


def _run_analyze_operator(config, out_dir: Path) -> RunReport:
    obj = _build_problem(config)
    op = obj.operator if isinstance(obj, problems_mod.Problem) else obj
    if not isinstance(op, ScalarOperator):
        raise ConfigError("analyze-operator requires an operator table or a scalar builtin")
    x_grid = _x_grid(config)
    xi_samples = [float(v) for v in config["grids"]["xi_samples"]]
    db = delta_bound_scalar(op, x_grid, xi_samples)
    cv = cross_validate(op, x_grid, xi_samples)
    artifacts = [str(_write_delta_csv(db, out_dir, config))]
    headline = _headline_delta(db)
    headline["cross_validation_discrepancy"] = cv["max_discrepancy"]
    if isinstance(obj, problems_mod.Problem) and obj.predicted:
        headline["predicted"] = obj.predicted
    return RunReport("ok", 0.0, artifacts, headline, config)


def _run_analyze_system(config, out_dir: Path) -> RunReport:
    obj = _build_problem(config)
    fo = obj.first_order if isinstance(obj, problems_mod.Problem) else obj
    if not isinstance(fo, FirstOrderSystem):
        raise ConfigError("analyze-system requires a system table or a system builtin")
    x_grid = _x_grid(config)
    xi_samples = [float(v) for v in config["grids"]["xi_samples"]]
    gap_tol = config["tolerances"]["gap_tol"]
    samples = [(0.0, float(x), xi) for x in x_grid for xi in xi_samples]
    pair = symmetrizer_from_roots(fo, samples, gap_tol=gap_tol)
    db = delta_bound_system(fo, pair, x_grid, xi_samples, gap_tol=gap_tol)
    artifacts = [str(_write_delta_csv(db, out_dir, config))]
    headline = _headline_delta(db)
    if isinstance(obj, problems_mod.Problem) and obj.predicted:
        headline["predicted"] = obj.predicted
    return RunReport("ok", 0.0, artifacts, headline, config)


def _run_solve(config, out_dir: Path) -> RunReport:
    prob = _build_problem(config)
    if not isinstance(prob, problems_mod.Problem):
        raise ConfigError("solve requires a builtin problem")
    sv = config["solve"]
    grid = PeriodicGrid(int(config["grids"]["n_modes"]))
    phi = make_decay_data(grid, float(sv["data_sigma"]), int(config["seed"]),
                          band_limit=sv.get("band_limit"))
    U0 = prob.initial_state(phi, grid)
    t_out = np.asarray(sv.get("t_out", np.linspace(0.05, prob.spec.T, 20)), dtype=float)
    traj = solve_cauchy(prob.system, U0, None, float(sv["eps"]), t_out,
                        float(config["tolerances"]["ode_tol"]), grid,
                        meta={"problem": prob.name, "seed": config["seed"]})
    ratios = energy_ratio(traj, spec=prob.spec, cut=prob.cutoff)
    path = out_dir / "trajectory.csv"
    traj.meta["config"] = "embedded-in-report"
    traj.to_csv(path)
    headline = {"max_energy_ratio": ratios["max_ratio"],
                "max_energy_ratio_unconjugated": ratios["max_ratio_unconjugated"],
                "eps": float(sv["eps"]), "n_modes": grid.n_modes}
    return RunReport("ok", 0.0, [str(path)], headline, config)


def _run_loss_experiment(config, out_dir: Path) -> RunReport:
    prob = _build_problem(config)
    if not isinstance(prob, problems_mod.Problem):
        raise ConfigError("loss-experiment requires a builtin problem")
    ex = config["experiment"]
    fit_band = tuple(ex["fit_band"]) if "fit_band" in ex else None
    record = empirical_loss(prob, float(ex["sigma_data"]), float(ex["t_probe"]),
                            int(config["seed"]), n_modes=int(config["grids"]["n_modes"]),
                            tol=float(config["tolerances"]["ode_tol"]),
                            eps=float(ex["eps"]), fit_band=fit_band)
    if prob.predicted:
        record["predicted"] = {k: float(v) for k, v in prob.predicted.items()}
    path = out_dir / "experiment.jsonl"
    with open(path, "w") as fh:
        fh.write(_dumps({"type": "config", "config": config}) + "\n")
        fh.write(_dumps({"type": "result", **record}) + "\n")
    headline = {"loss": record["loss"], "sigma_hat": record["sigma_hat"], "r2": record["r2"]}
    if "predicted" in record:
        headline["predicted_loss"] = record["predicted"].get("loss")
    return RunReport("ok", 0.0, [str(path)], headline, config)


_SYMBOL_BUILDERS = {
    "weight-power": lambda spec, cut, m, eta: weight_power_symbol(spec, cut, m, eta)[0],
    "lambda-bracket": lambda spec, cut, m, eta: (lambda t, x, xi: spec.lam(t) * bracket(xi) + 0.0 * x),
    "chi-minus": lambda spec, cut, m, eta: (lambda t, x, xi: 1.0 - cut(spec.Lam(t) * bracket(xi)) + 0.0 * x),
}


def _run_check_symbol(config, out_dir: Path) -> RunReport:
    spec = _spec_of(config)
    cut = smooth_cutoff()
    sb = config.get("symbol", {})
    name = sb.get("name", "weight-power")
    m, eta = float(sb.get("m", 1.0)), float(sb.get("eta", 1.0))
    a = _SYMBOL_BUILDERS[name](spec, cut, m, eta)
    grid = make_symbol_grid(spec, xi_max=float(sb.get("xi_max", 256.0)))
    report = estimate_constants(a, SymbolOrders(m, eta), grid,
                                tuple(sb.get("max_orders", [2, 2, 2])), spec=spec)
    path = out_dir / "symbol.csv"
    with open(path, "w", newline="") as fh:
        fh.write("# " + _dumps(config) + "\n")
    with open(path, "a", newline="") as fh:
        import csv as _csv
        writer = _csv.writer(fh)
        writer.writerow(["j", "alpha", "beta", "C", "verdict"])
        for e in report.entries:
            writer.writerow([e.j, e.alpha, e.beta, repr(e.constant), "pass" if e.passed else "fail"])
    headline = {"symbol": name, "m": m, "eta": eta, "passed": report.passed, "grid": report.grid}
    return RunReport("ok", 0.0, [str(path)], headline, config)


def _set_path(config, dotted, value):
    node = config
    keys = dotted.split(".")
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    node[keys[-1]] = value


def _run_sweep(config, out_dir: Path, workers: int) -> RunReport:
    sw = config.get("sweep")
    if not sw:
        raise ConfigError("sweep command requires a 'sweep' block")
    values = sw["values"]
    if not values:
        raise ConfigError("sweep axis must be a nonempty list")
    sub_command = sw.get("command", "loss-experiment")

    def make_point(i, value):
        sub = copy.deepcopy(config)
        sub.pop("sweep", None)
        sub["command"] = sub_command
        _set_path(sub, sw["path"], value)
        return sub

    points = [make_point(i, v) for i, v in enumerate(values)]

    def run_point(item):
        i, sub = item
        sub_dir = out_dir / f"point_{i:03d}"
        sub_dir.mkdir(parents=True, exist_ok=True)
        try:
            rep = run(sub, sub_dir)
            return {"index": i, "value": values[i], "status": rep.status, "headline": rep.headline}
        except DegenhypError as exc:
            return {"index": i, "value": values[i], "status": "numerical-failure", "error": str(exc)}

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(run_point, enumerate(points)))

    merged = out_dir / "experiment.jsonl"
    with open(merged, "w") as fh:
        fh.write(_dumps({"type": "config", "config": config}) + "\n")
        for res in results:
            fh.write(_dumps({"type": "point", **res}) + "\n")
    summary = out_dir / "summary.csv"
    keys = ["loss", "sigma_hat", "r2", "predicted_loss", "delta_min", "delta_max",
            "loss_min", "loss_max", "max_energy_ratio"]
    with open(summary, "w") as fh:
        fh.write("# " + _dumps(config) + "\n")
        fh.write(",".join(["index", "value", "status"] + keys) + "\n")
        for res in results:
            head = res.get("headline", {})
            row = [str(res["index"]), repr(float(res["value"])) if isinstance(res["value"], (int, float)) else str(res["value"]), res["status"]]
            row += [repr(float(head[k])) if k in head and head[k] is not None else "" for k in keys]
            fh.write(",".join(row) + "\n")
    n_failed = sum(1 for r in results if r["status"] != "ok")
    headline = {"points": len(results), "failed": n_failed}
    status = "ok" if n_failed == 0 else "partial-failure"
    return RunReport(status, 0.0, [str(merged), str(summary)], headline, config)


def run(config: dict, out_dir, workers: int = 2) -> RunReport:
    """Dispatch a resolved or raw config; writes artifacts into out_dir."""
    config = resolve_config(config)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    command = config["command"]
    if command == "analyze-operator":
        report = _run_analyze_operator(config, out_dir)
    elif command == "analyze-system":
        report = _run_analyze_system(config, out_dir)
    elif command == "solve":
        report = _run_solve(config, out_dir)
    elif command == "loss-experiment":
        report = _run_loss_experiment(config, out_dir)
    elif command == "check-symbol":
        report = _run_check_symbol(config, out_dir)
    elif command == "sweep":
        report = _run_sweep(config, out_dir, workers)
    else:  # pragma: no cover - schema blocks this
        raise ConfigError(f"unknown command {command!r}")
    report.wall_time_s = time.perf_counter() - started
    report.write(out_dir)
    if report.status != "ok":
        raise DegenhypError(f"{report.headline.get('failed', '?')} sweep points failed")
    return report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="degenhyp", description=__doc__)
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default=None)
    parser.add_argument("--workers", type=int, default=2)
    parser.add_argument("--seed", type=int, default=None)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        with open(args.config) as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    config["command"] = args.command
    if args.seed is not None:
        config["seed"] = args.seed
    out_dir = args.out or config.get("out") or "."
    try:
        report = run(config, out_dir, workers=args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DegenhypError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    print(_dumps({"status": report.status, "headline": report.headline,
                  "artifacts": report.artifacts}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
