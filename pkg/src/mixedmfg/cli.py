"""Command-line front end: ``mixedmfg {solve,simulate,sweep,check}``.

Configuration is a JSON document (see README).  Outputs are CSV with 17
significant digits and JSON with sorted keys, so identical inputs give
byte-identical files.  Exit codes: 0 ok, 1 unexpected error, 2 invalid
input, 3 Riccati blow-up, 4 simulation failure, 5 every sweep value failed.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .conditions import check_mi_condition, check_mp_assumption
from .equilibrium import (FeedbackPolicy, solve_mi, solve_mp, verify_drift_identity_mi,
                          verify_drift_identity_mp)
from .params import (MIParams, MPParams, TimeGrid, ValidationError, build_mp_matrices, validate_mi,
                     validate_mp)
from .riccati import FBSDE, RiccatiBlowUpError, RiccatiSolutionMI, RiccatiSolutionMP, resolve_variant
from .simulation import (SimConfig, SimulationError, estimate_epsilon_nash,
                         evaluate_cost_deterministic, simulate_mi, simulate_mp)

EXIT_OK, EXIT_UNEXPECTED, EXIT_VALIDATION, EXIT_BLOWUP, EXIT_SIMULATION, EXIT_SWEEP = 0, 1, 2, 3, 4, 5
SWEEPABLE = {"mi": ("lambda", "N"), "mp": ("p", "N")}
_SIM_KEYS = {"N", "N_nc", "N_c", "n_runs", "n_steps", "scheme", "epsilon"}
_TOP_KEYS = {"model", "params", "grid", "variant", "sim", "sweep", "seed", "conditions"}

# the drift-identity stencil needs this many intervals
MIN_STEPS = 8

MI_SOLUTION_COLUMNS = ("t", "A", "B", "C", "Xbar")
MP_SOLUTION_COLUMNS = ("t", "A11", "A12", "A21", "A22", "B11", "B12", "B21", "B22", "C1", "C2",
                       "Xbar_NC", "Xbar_C")


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    model: str
    params: MIParams | MPParams
    n_steps: int
    variant: str = FBSDE
    seed: int = 0
    sim: dict | None = None
    sweep: dict | None = None
    candidates: list | None = None

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.params.T, self.n_steps)

    def sim_config(self) -> SimConfig:
        if self.sim is None:
            raise ValidationError("simulation settings missing", "sim")
        s = {k: v for k, v in self.sim.items() if k != "epsilon"}
        try:
            return SimConfig(seed=self.seed, **s)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"sim: {exc}", "sim") from None

    def resolved(self) -> dict:
        """Full configuration with every default made explicit."""
        d = {"model": self.model, "params": self.params.to_dict(), "grid": {"n_steps": self.n_steps},
             "variant": self.variant, "seed": self.seed}
        if self.sim is not None:
            sc = self.sim_config()
            d["sim"] = {"N": sc.N, "N_nc": sc.N_nc, "N_c": sc.N_c, "n_runs": sc.n_runs,
                        "n_steps": sc.n_steps or self.n_steps, "scheme": sc.scheme,
                        "epsilon": bool(self.sim.get("epsilon", True))}
        if self.sweep is not None:
            d["sweep"] = dict(self.sweep)
        if self.candidates is not None:
            d["conditions"] = {"candidates": self.candidates}
        return d


def _parse_seed(value) -> int:
    try:
        seed = int(value)
    except (TypeError, ValueError):
        raise ValidationError("seed must be an unsigned 64-bit integer", "seed") from None
    if isinstance(value, float) and value != seed or not 0 <= seed < 2**64:
        raise ValidationError("seed must be an unsigned 64-bit integer", "seed")
    return seed


def parse_config(doc: dict, seed=None, variant=None) -> RunConfig:
    """Validate a configuration document; ``seed``/``variant`` override it."""
    if not isinstance(doc, dict):
        raise ValidationError("configuration must be a JSON object", "config")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ValidationError(f"unknown key(s): {sorted(unknown)}", sorted(unknown)[0])
    model = str(doc.get("model", "")).lower()
    if model not in ("mi", "mp"):
        raise ValidationError("model must be 'mi' or 'mp'", "model")
    raw = doc.get("params", {})
    if not isinstance(raw, dict):
        raise ValidationError("params must be an object", "params")
    try:
        params = MIParams.from_dict(raw) if model == "mi" else MPParams.from_dict(raw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"params: {exc}", "params") from None
    (validate_mi if model == "mi" else validate_mp)(params)

    grid = doc.get("grid", {}) or {}
    n_steps = grid.get("n_steps")
    if n_steps is None:
        n_steps = TimeGrid.default(params.T).n_steps
    if not isinstance(n_steps, int) or isinstance(n_steps, bool) or n_steps < MIN_STEPS:
        raise ValidationError(f"grid.n_steps must be an integer >= {MIN_STEPS}", "grid.n_steps")

    try:
        var = resolve_variant(variant or doc.get("variant", FBSDE))
    except ValueError as exc:
        raise ValidationError(str(exc), "variant") from None

    seed_val = _parse_seed(seed if seed is not None else doc.get("seed", 0))

    sim = doc.get("sim")
    if sim is not None:
        if not isinstance(sim, dict):
            raise ValidationError("sim must be an object", "sim")
        bad = set(sim) - _SIM_KEYS
        if bad:
            raise ValidationError(f"unknown sim key(s): {sorted(bad)}", "sim." + sorted(bad)[0])

    sweep = doc.get("sweep")
    if sweep is not None:
        if not isinstance(sweep, dict) or "parameter" not in sweep or "values" not in sweep:
            raise ValidationError("sweep needs 'parameter' and 'values'", "sweep")
        if sweep["parameter"] not in SWEEPABLE[model]:
            raise ValidationError(f"sweep parameter {sweep['parameter']!r} not available for model "
                                  f"{model}", "sweep.parameter")
        if not isinstance(sweep["values"], list) or not sweep["values"]:
            raise ValidationError("sweep.values must be a non-empty list", "sweep.values")
        if sweep["parameter"] == "N" and sim is None:
            raise ValidationError("an N sweep needs simulation settings", "sim")

    cand = (doc.get("conditions") or {}).get("candidates")
    cfg = RunConfig(model=model, params=params, n_steps=n_steps, variant=var, seed=seed_val,
                    sim=sim, sweep=sweep, candidates=cand)
    if sim is not None:
        cfg.sim_config()
    return cfg


def load_config(path, seed=None, variant=None) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ValidationError(f"cannot read config: {exc.strerror}", "config") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config is not valid JSON: {exc.msg}", "config") from None
    return parse_config(doc, seed, variant)


# ---------------------------------------------------------------------------
# serialization


def _fmt(x) -> str:
    return "%.17g" % x


def write_csv(path: Path, header, columns) -> None:
    cols = [np.asarray(c, dtype=float) for c in columns]
    lines = [",".join(header)]
    for row in zip(*cols):
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _finite_or_null(obj):
    # strict JSON has no NaN/Infinity; undefined statistics become null
    if isinstance(obj, float):
        return obj if np.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite_or_null(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite_or_null(v) for v in obj]
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_finite_or_null(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")


def _solution_columns(solution):
    t = solution.grid.nodes
    if isinstance(solution, RiccatiSolutionMI):
        return MI_SOLUTION_COLUMNS, [t, solution.A, solution.B, solution.C, solution.Xbar]
    A, B = solution.A.reshape(-1, 4), solution.B.reshape(-1, 4)
    cols = [t, *A.T, *B.T, solution.C[:, 0], solution.C[:, 1], solution.Xbar[:, 0], solution.Xbar[:, 1]]
    return MP_SOLUTION_COLUMNS, cols


def read_solution_csv(path, variant: str = FBSDE):
    """Rebuild a solution object from ``solution.csv``."""
    path = Path(path)
    header = path.read_text().split("\n", 1)[0].split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t = data[:, 0]
    grid = TimeGrid(float(t[-1]), data.shape[0] - 1)
    if tuple(header) == MI_SOLUTION_COLUMNS:
        return RiccatiSolutionMI(grid=grid, A=data[:, 1], B=data[:, 2], C=data[:, 3], Xbar=data[:, 4],
                                 variant=resolve_variant(variant))
    if tuple(header) == MP_SOLUTION_COLUMNS:
        return RiccatiSolutionMP(grid=grid, A=data[:, 1:5].reshape(-1, 2, 2),
                                 B=data[:, 5:9].reshape(-1, 2, 2), C=data[:, 9:11],
                                 Xbar=data[:, 11:13], variant=resolve_variant(variant))
    raise ValueError(f"unrecognized solution header in {path}")


def _policy_columns(policy: FeedbackPolicy):
    t = policy.grid.nodes
    if policy.gain_self.ndim == 1:
        return ("t", "gain_self", "gain_mean", "intercept"), [t, policy.gain_self, policy.gain_mean,
                                                              policy.intercept]
    header = ["t"]
    cols = [t]
    for g, tag in enumerate(("NC", "C")):
        header += [f"gain_self_{tag}", f"gain_mean_{tag}_NC", f"gain_mean_{tag}_C", f"intercept_{tag}"]
        cols += [policy.gain_self[:, g], policy.gain_mean[:, g, 0], policy.gain_mean[:, g, 1],
                 policy.intercept[:, g]]
    return tuple(header), cols


# ---------------------------------------------------------------------------
# verbs


def _solve(cfg: RunConfig):
    if cfg.model == "mi":
        return solve_mi(cfg.params, cfg.grid, cfg.variant)
    return solve_mp(cfg.params, cfg.grid, cfg.variant)


def _conditions(cfg: RunConfig, solution) -> dict:
    if cfg.model == "mi":
        return {"mi_condition": check_mi_condition(cfg.params, cfg.grid).to_dict()}
    rep = check_mp_assumption(build_mp_matrices(cfg.params), solution, cfg.candidates)
    return {"mp_assumption": rep.to_dict()}


def _condition_summary(cond: dict):
    rep = next(iter(cond.values()))
    return rep["holds"], rep["min_margin"]


def run_solve(cfg: RunConfig, out: Path, verb: str = "solve") -> dict:
    solution, policy = _solve(cfg)
    header, cols = _solution_columns(solution)
    write_csv(out / "solution.csv", header, cols)
    header, cols = _policy_columns(policy)
    write_csv(out / "policy.csv", header, cols)
    conditions = _conditions(cfg, solution)
    verify = verify_drift_identity_mi if cfg.model == "mi" else verify_drift_identity_mp
    residual = verify(cfg.params, solution).to_dict()
    report = {"invocation": {"verb": verb, "variant": cfg.variant, "seed": cfg.seed},
              "config": cfg.resolved(), "variant": cfg.variant, "conditions": conditions,
              "residuals": residual}
    costs = evaluate_cost_deterministic(cfg.params, policy, solution)
    report["deterministic_cost"] = costs
    if cfg.model == "mp":
        A = solution.A
        report["A_diagonal_max_offdiag"] = float(np.abs(np.stack([A[:, 0, 1], A[:, 1, 0]])).max())
        m = build_mp_matrices(cfg.params)
        report["M5_norm"] = float(np.linalg.norm(m.M5))
        report["M6_norm"] = float(np.linalg.norm(m.M6))
    write_json(out / "report.json", report)
    return {"solution": solution, "policy": policy, "report": report}


def run_simulate(cfg: RunConfig, out: Path) -> dict:
    solved = run_solve(cfg, out, verb="simulate")
    solution, policy = solved["solution"], solved["policy"]
    sc = cfg.sim_config()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if cfg.model == "mi":
            res = simulate_mi(cfg.params, policy, sc)
        else:
            res = simulate_mp(cfg.params, policy, sc)
    for w in caught:
        print(json.dumps({"warning": str(w.message)}), file=sys.stderr)
    t = res.times
    if cfg.model == "mi":
        write_csv(out / "sim_means.csv", ("t", "empirical_mean", "xbar"),
                  [t, res.empirical_mean_path, res.xbar_reference])
    else:
        write_csv(out / "sim_means.csv", ("t", "empirical_mean_NC", "empirical_mean_C", "xbar_NC", "xbar_C"),
                  [t, *res.empirical_mean_path.T, *res.xbar_reference.T])
    roles = list(res.run_costs)
    write_csv(out / "costs.csv", ["run"] + [f"cost_{r}" if len(roles) > 1 else "cost" for r in roles],
              [np.arange(sc.n_runs)] + [res.run_costs[r] for r in roles])
    summary = {"mean_consistency_error": res.mean_consistency_error,
               "consistency_by_group": np.atleast_1d(res.consistency_by_group).tolist(),
               "cost_estimates": {r: {"mean": m, "stderr": s} for r, (m, s) in res.cost_estimates.items()}}
    if cfg.sim.get("epsilon", True):
        eps = estimate_epsilon_nash(cfg.params, policy, sc)
        summary["epsilon"] = eps.to_dict()
    else:
        summary["epsilon"] = None
    write_json(out / "epsilon.json", summary)
    return {**solved, "simulation": res, "summary": summary}


def run_check(cfg: RunConfig, out: Path) -> dict:
    solution, _ = _solve(cfg)
    conditions = _conditions(cfg, solution)
    write_json(out / "conditions.json", {"config": cfg.resolved(), "conditions": conditions,
                                         "invocation": {"verb": "check", "variant": cfg.variant,
                                                        "seed": cfg.seed}})
    return {"conditions": conditions}


def _sweep_variant(cfg: RunConfig, name: str, value) -> RunConfig:
    if name == "lambda":
        params = replace(cfg.params, lam=float(value))
        validate_mi(params)
        return replace(cfg, params=params, sweep=None)
    if name == "p":
        params = replace(cfg.params, p=float(value))
        validate_mp(params)
        return replace(cfg, params=params, sweep=None)
    n = int(value)
    if n != value or n < 1:
        raise ValidationError("N sweep values must be positive integers", "sweep.values")
    sim = dict(cfg.sim)
    if cfg.model == "mi":
        sim["N"] = n
    else:
        n_nc = int(round(cfg.params.p * n))
        if n_nc < 1 or n - n_nc < 1:
            raise ValidationError("N too small to populate both groups", "sweep.values")
        sim["N_nc"], sim["N_c"] = n_nc, n - n_nc
    return replace(cfg, sim=sim, sweep=None)


def _sweep_header(model: str):
    cols = ["index", "value", "exit_code", "condition_holds", "condition_margin", "max_residual"]
    cols += ["cost"] if model == "mi" else ["cost_NC", "cost_C", "M5_norm", "M6_norm"]
    cols += ["sim_cost"] if model == "mi" else ["sim_cost_NC", "sim_cost_C"]
    cols += ["consistency_error", "epsilon_hat", "epsilon_clipped", "epsilon_half_width", "error"]
    return cols


def run_sweep(cfg: RunConfig, out: Path) -> int:
    name, values = cfg.sweep["parameter"], cfg.sweep["values"]
    header = _sweep_header(cfg.model)
    rows = []
    for i, value in enumerate(values):
        row = dict.fromkeys(header, "")
        row.update(index=str(i), value=_fmt(float(value)) if _is_number(value) else str(value))
        sub = out / f"{name}_{i:03d}"
        sub.mkdir(parents=True, exist_ok=True)
        try:
            if not _is_number(value):
                raise ValidationError("sweep values must be numbers", "sweep.values")
            sub_cfg = _sweep_variant(cfg, name, value)
            result = run_simulate(sub_cfg, sub) if sub_cfg.sim is not None else run_solve(sub_cfg, sub, "sweep")
            rep = result["report"]
            holds, margin = _condition_summary(rep["conditions"])
            row.update(exit_code="0", condition_holds=holds, condition_margin=_fmt(margin),
                       max_residual=_fmt(rep["residuals"]["max_coefficient_residual"]))
            cost = rep["deterministic_cost"]
            if cfg.model == "mi":
                row["cost"] = _fmt(cost)
            else:
                row.update(cost_NC=_fmt(cost["NC"]), cost_C=_fmt(cost["C"]),
                           M5_norm=_fmt(rep["M5_norm"]), M6_norm=_fmt(rep["M6_norm"]))
            if "summary" in result:
                s = result["summary"]
                row["consistency_error"] = _fmt(s["mean_consistency_error"])
                for role, est in s["cost_estimates"].items():
                    key = "sim_cost" if cfg.model == "mi" else f"sim_cost_{role}"
                    row[key] = _fmt(est["mean"])
                if s["epsilon"] is not None:
                    e = s["epsilon"]
                    row.update(epsilon_hat=_fmt(e["epsilon_hat"]), epsilon_clipped=_fmt(e["epsilon_clipped"]),
                               epsilon_half_width=_fmt(e["half_width"]))
        except Exception as exc:  # recorded per value; the sweep carries on
            code, _ = _classify(exc)
            row.update(exit_code=str(code), error=str(exc).replace(",", ";").replace("\n", " "))
        rows.append(row)
    lines = [",".join(header)] + [",".join(r[c] for c in header) for r in rows]
    (out / "sweep_summary.csv").write_text("\n".join(lines) + "\n")
    return EXIT_OK if any(r["exit_code"] == "0" for r in rows) else EXIT_SWEEP


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _classify(exc: BaseException):
    if isinstance(exc, ValidationError):
        return EXIT_VALIDATION, {"error": "validation", "field": exc.field, "message": str(exc)}
    if isinstance(exc, RiccatiBlowUpError):
        return EXIT_BLOWUP, {"error": "riccati_blowup", "equation": exc.equation, "time": exc.time,
                             "message": str(exc)}
    if isinstance(exc, SimulationError):
        return EXIT_SIMULATION, {"error": "simulation", "run": exc.run, "agent": exc.agent,
                                 "step": exc.step, "message": str(exc)}
    return EXIT_UNEXPECTED, {"error": "unexpected", "type": type(exc).__name__, "message": str(exc)}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixedmfg",
                                     description="Mixed mean-field equilibria: solve, simulate, sweep, check.")
    parser.add_argument("verb", choices=("solve", "simulate", "sweep", "check"))
    parser.add_argument("--config", required=True, metavar="PATH", help="JSON configuration file")
    parser.add_argument("--out", default=".", metavar="DIR", help="output directory (created if missing)")
    parser.add_argument("--seed", default=None, metavar="U64", help="master seed, overrides the config")
    parser.add_argument("--variant", choices=("fbsde", "paper"), default=None,
                        help="coefficient equations to integrate (default: config, else fbsde)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed=args.seed, variant=args.variant)
        if args.verb == "sweep" and cfg.sweep is None:
            raise ValidationError("sweep verb needs a 'sweep' section", "sweep")
        if args.verb == "simulate" and cfg.sim is None:
            raise ValidationError("simulate verb needs a 'sim' section", "sim")
        out = Path(args.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ValidationError(f"output directory not writable: {exc.strerror}", "out") from None
        if args.verb == "solve":
            run_solve(cfg, out)
        elif args.verb == "simulate":
            run_simulate(cfg, out)
        elif args.verb == "check":
            run_check(cfg, out)
        else:
            return run_sweep(cfg, out)
    except Exception as exc:
        code, payload = _classify(exc)
        print(json.dumps(payload, sort_keys=True), file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
