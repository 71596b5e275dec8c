"""Command-line front end.

Exit codes: 0 when every check passes, 1 when a check fails, 2 for usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import corpus, identities, mc, rate
from . import conjugate as cj
from .laws import pinning_law
from .model import JumpLaw, ModelConfigError, lambda_minus, lambda_plus, load_law
from .regions import CLOSED, OPEN, Ball, Box, Exterior, HalfSpace, box_partition

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class ConfigError(ValueError):
    pass


# -- configs --------------------------------------------------------------

def _num(x) -> float:
    if isinstance(x, str):
        return float(x)  # accepts "inf" and "-inf"
    return float(x)


def _emit_num(x: float):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def region_from_dict(doc: dict):
    try:
        shape = doc["shape"].lower()
        closure = doc.get("closure", CLOSED)
        if shape == "box":
            return Box(tuple(map(_num, doc["lo"])), tuple(map(_num, doc["hi"])), closure)
        if shape == "ball":
            return Ball(tuple(map(_num, doc["center"])), _num(doc["radius"]), closure)
        if shape == "halfspace":
            return HalfSpace(tuple(map(_num, doc["normal"])), _num(doc["offset"]), closure)
        if shape == "exterior":
            return Exterior(tuple(map(_num, doc["center"])), _num(doc["radius"]), closure)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed region: {exc}") from None
    raise ConfigError(f"unknown region shape {doc.get('shape')!r}")


def region_to_dict(region) -> dict:
    if isinstance(region, Box):
        return {"shape": "box", "lo": [_emit_num(x) for x in region.lo],
                "hi": [_emit_num(x) for x in region.hi], "closure": region.closure}
    if isinstance(region, Ball):
        return {"shape": "ball", "center": list(region.center), "radius": region.radius,
                "closure": region.closure}
    if isinstance(region, HalfSpace):
        return {"shape": "halfspace", "normal": list(region.normal), "offset": region.offset,
                "closure": region.closure}
    return {"shape": "exterior", "center": list(region.center), "radius": region.radius,
            "closure": region.closure}


@dataclass
class RunConfig:
    model: JumpLaw
    region: Any
    t_grid: list[float]
    n_rep: int = 100_000
    seed: int = 0
    method: str = mc.TILTED
    lambda_star: float | None = None

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        try:
            model = JumpLaw.from_dict(doc["model"])
            region = region_from_dict(doc["region"])
            t_grid = [float(t) for t in doc["t_grid"]]
        except KeyError as exc:
            raise ConfigError(f"missing run field {exc.args[0]!r}") from None
        if region.dim != model.dim:
            raise ConfigError("region dimension differs from model dimension")
        method = doc.get("method", mc.TILTED)
        if method not in (mc.NAIVE, mc.TILTED):
            raise ConfigError(f"method must be 'naive' or 'tilted', got {method!r}")
        ls = doc.get("lambda_star")
        return cls(model, region, t_grid, int(doc.get("n_rep", 100_000)), int(doc.get("seed", 0)),
                   method, None if ls is None else float(ls))

    def to_dict(self) -> dict:
        out = {"model": self.model.to_dict(), "region": region_to_dict(self.region),
               "t_grid": list(self.t_grid), "n_rep": self.n_rep, "seed": self.seed,
               "method": self.method}
        if self.lambda_star is not None:
            out["lambda_star"] = self.lambda_star
        return out


def _read_json(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return doc


def load_run_config(path: str) -> RunConfig:
    return RunConfig.from_dict(_read_json(path))


def parse_grid(spec: str, dim: int) -> np.ndarray:
    """'lo:hi:n' per axis, comma separated; returns the product grid."""
    parts = [p for p in spec.split(",") if p.strip()]
    if not parts:
        raise ConfigError("empty grid")
    if len(parts) != dim:
        raise ConfigError(f"grid has {len(parts)} axes, model has {dim}")
    axes = []
    for p in parts:
        try:
            lo, hi, n = p.split(":")
            lo, hi, n = float(lo), float(hi), int(n)
        except ValueError:
            raise ConfigError(f"bad grid axis {p!r}; expected lo:hi:n") from None
        if n < 1:
            raise ConfigError("empty grid")
        axes.append(np.linspace(lo, hi, n))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


# -- reports --------------------------------------------------------------

@dataclass
class RunReport:
    config_echo: dict
    results: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    exit_status: int = EXIT_OK

    def add_check(self, check: identities.Check):
        self.checks.append(check.to_dict())
        if not check.passed:
            self.exit_status = EXIT_FAIL

    def to_json(self) -> str:
        return json.dumps({"config_echo": self.config_echo, "results": self.results,
                           "checks": self.checks, "exit_status": self.exit_status},
                          indent=2, default=_json_default)


def _json_default(x):
    if isinstance(x, (np.floating, float)):
        return _emit_num(float(x))
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    return repr(x) if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def _write_csv(header: list[str], rows: list[list], out: str | None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([c if isinstance(c, str) else _fmt(c) for c in r])
    _write(buf.getvalue(), out)


def _write(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _cap(gamma: float):
    return gamma if math.isfinite(gamma) else None


# -- subcommands ----------------------------------------------------------

def cmd_rate(args) -> RunReport:
    law = load_law(args.config)
    gamma = float(lambda_plus(law)) if args.gamma is None else args.gamma
    if args.grid is not None:
        grid = parse_grid(args.grid, law.dim)
    else:
        grid = identities.alpha_grid(law, _cap(gamma))
    D = rate.D_values(law, grid)
    evs = rate.D_evaluations(law, grid, _cap(gamma))
    Dp = rate.D_plus_values(law, grid)
    Dm = rate.D_minus_values(law, grid)
    d = law.dim
    header = [f"alpha{i}" for i in range(d)] + ["D", "D_gamma", "D_plus", "D_minus", "argmax_lambda"] + \
        [f"argmax_mu{i}" for i in range(d)] + ["status"]
    rows = []
    for i, a in enumerate(grid):
        ev = evs[i]
        mu = list(ev.argmax_mu) if ev.argmax_mu is not None else [None] * d
        rows.append(list(a) + [D[i], float(ev.value), Dp[i], Dm[i], ev.argmax_lambda] + mu + [ev.status])
    _write_csv(header, rows, args.out)
    report = RunReport({"model": law.to_dict(), "gamma": _emit_num(gamma), "grid": args.grid})
    report.results = [dict(zip(header, r)) for r in rows]
    return report


def _estimate(cfg: RunConfig, t: float, offset: int, reps: int, seed: int) -> mc.PathEstimate:
    if cfg.method == mc.NAIVE:
        return mc.estimate_unnormalized(cfg.model, t, cfg.region, reps, seed, offset)
    s = mc.make_tilted(cfg.model, cfg.lambda_star)
    s = s.with_kill_prob(mc.targeted_kill_prob(s, t, cfg.region))
    return mc.estimate_unnormalized_tilted(s, t, cfg.region, reps, seed, offset)


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.seed is not None:
        cfg.seed = args.seed
    if args.reps is not None:
        cfg.n_rep = args.reps
    return cfg


def cmd_simulate(args) -> RunReport:
    cfg = _apply_overrides(load_run_config(args.config), args)
    rows = []
    for i, t in enumerate(cfg.t_grid):
        e = _estimate(cfg, t, i, cfg.n_rep, cfg.seed)
        rows.append([t, e.log_value, e.half_width_log, str(e.hits), e.method])
    header = ["t", "log_value", "half_width_log", "hits", "method"]
    _write_csv(header, rows, args.out)
    report = RunReport(cfg.to_dict())
    report.results = [dict(zip(header, r)) for r in rows]
    return report


def cmd_verify(args) -> RunReport:
    cfg = _apply_overrides(load_run_config(args.config), args)
    law = cfg.model
    report = RunReport(cfg.to_dict())
    upper = -float(rate.region_inf(law, cfg.region.with_closure(CLOSED), _cap(float(lambda_plus(law)))))
    lower = -float(rate.region_inf(law, cfg.region.with_closure(OPEN), _cap(float(lambda_minus(law)))))
    try:
        er = mc.empirical_rate(law, cfg.region, cfg.t_grid, cfg.n_rep, cfg.seed, cfg.method, cfg.lambda_star)
    except mc.RateUndefined as exc:
        report.add_check(identities.Check("rate undefined", "finite estimates", str(exc), 0.0, False))
        return report
    slope = er.slope
    report.results = [{"t": e.t, "log_value": e.log_value, "half_width_log": e.half_width_log,
                       "hits": e.hits, "method": e.method} for e in er.per_t]
    summary = {"slope": slope, "stderr": er.stderr, "upper_ref": upper, "lower_ref": lower}
    report.results.append(summary)
    tol_rel = 0.15
    lo_b = lower - tol_rel * abs(lower)
    hi_b = upper + tol_rel * abs(upper)
    report.add_check(identities.Check("slope within the rate-function bounds (15% relative)",
                                      f"[{lo_b:.6g}, {hi_b:.6g}]", slope, tol_rel, lo_b <= slope <= hi_b))
    if law.v_is_zero:
        # with v = 0 the Gibbs normalizer is a probability of survival-type
        # events and the same numbers describe P(Z(t)/t in B) directly
        report.results.append({"framing": "P(Z(t)/t in B)", "slope": slope,
                               "upper_ref": upper, "lower_ref": lower})
    return report


def cmd_identities(args) -> RunReport:
    law = load_law(args.config)
    report = RunReport({"model": law.to_dict(), "tol": args.tol})
    for c in identities.run_identities(law, args.tol, quick=args.quick):
        report.add_check(c)
    _write(report.to_json() + "\n", args.out)
    return report


def cmd_conjugate_table(args) -> RunReport:
    try:
        F = corpus.get(args.function)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None
    grid = parse_grid(",".join(["-2:2:21"] * F.dim) if args.grid is None else args.grid, F.dim)
    fv = F.values(grid)
    star = cj.legendre_many(F, grid).values
    bi = cj.biconjugate_many(F, grid).values
    header = [f"u{i}" for i in range(F.dim)] + ["F", "F_star", "F_star_star"]
    rows = [list(u) + [a, b, c] for u, a, b, c in zip(grid, fv, star, bi)]
    _write_csv(header, rows, args.out)
    report = RunReport({"function": args.function, "grid": args.grid})
    report.results = [dict(zip(header, r)) for r in rows]
    return report


def cmd_pinning_demo(args) -> RunReport:
    """Gibbs probabilities of a 5-cell partition of [0, 1] for the pinning law."""
    law = pinning_law()
    seed = 0 if args.seed is None else args.seed
    reps = 100_000 if args.reps is None else args.reps
    t = 40.0
    report = RunReport({"model": law.to_dict(), "t": t, "n_rep": reps, "seed": seed})
    total, var = 0.0, 0.0
    # independent streams per cell, so the total is a genuine random check
    for i, cell in enumerate(box_partition(0.0, 1.0, 5)):
        e = mc.estimate_gibbs(law, t, cell, reps, seed, offset=i)
        p = math.exp(e.log_value)
        sd = p * e.half_width_log / mc.Z95 if math.isfinite(e.half_width_log) else 0.0
        total += p
        var += sd * sd
        report.results.append({"cell": [cell.lo[0], cell.hi[0]], "log_prob": e.log_value,
                               "half_width_log": e.half_width_log, "hits": e.hits})
    sigma = math.sqrt(var)
    report.results.append({"total_probability": total, "sigma": sigma})
    report.add_check(identities.Check("partition probabilities sum to at most 1 + 3 sigma",
                                      f"<= {1 + 3 * sigma:.6g}", total, 3 * sigma, total <= 1 + 3 * sigma))
    _write(report.to_json() + "\n", args.out)
    return report


# -- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crp-ldp", description="Rate functions and Monte Carlo for "
                                "compound renewal processes with killing.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="model or run config (JSON)")
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--report", help="also write the JSON run report here")

    sp = sub.add_parser("rate", help="tabulate D, D_gamma, D_plus, D_minus over an alpha grid")
    common(sp)
    sp.add_argument("--grid", help="lo:hi:n per axis, comma separated (write --grid=-1:1:5 when lo < 0)")
    sp.add_argument("--gamma", type=float, help="cap (default: lambda_plus of the law)")
    sp.set_defaults(func=cmd_rate)

    for name, fn, hlp in (("simulate", cmd_simulate, "log estimates per horizon"),
                          ("verify", cmd_verify, "empirical rate against the rate-function bounds")):
        sp = sub.add_parser(name, help=hlp)
        common(sp)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--reps", type=int)
        sp.set_defaults(func=fn)

    sp = sub.add_parser("identities", help="run the identity battery on a law")
    common(sp)
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--quick", action="store_true", help="coarser grids")
    sp.set_defaults(func=cmd_identities)

    sp = sub.add_parser("conjugate-table", help="F, F*, F** for a corpus function")
    common(sp, config=False)
    sp.add_argument("--function", required=True, choices=sorted(corpus.CORPUS))
    sp.add_argument("--grid", help="lo:hi:n per axis")
    sp.set_defaults(func=cmd_conjugate_table)

    sp = sub.add_parser("pinning-demo", help="Gibbs partition check for the pinning law")
    common(sp, config=False)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--reps", type=int)
    sp.set_defaults(func=cmd_pinning_demo)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        report = args.func(args)
    except (ConfigError, ModelConfigError, mc.InvalidTilt) as exc:
        print(f"crp-ldp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.command == "verify":
        _write(report.to_json() + "\n", args.out)
    if args.report:
        Path(args.report).write_text(report.to_json() + "\n")
    return report.exit_status


if __name__ == "__main__":
    sys.exit(main())
