"""``cycleforge`` command line: JSON reports on stdout or ``--out``.

Exit codes: 0 success, 1 a verification failed, 2 bad input.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import bautin, melnikov as mk, verify
from .canonical import CanonicalAneg, CanonicalApos, formula_residuals, to_canonical, verify_conjugacy
from .fieldcore import EPS_MAX, OscParams
from .lyapunov import FORWARD_SIGN, closed_v_aneg, closed_v_apos, numeric_series
from .simulate import IntegratorConfig, find_cycles, threads

SCHEMA_VERSION = "1.0"
OSC_FIELDS = ("a", "b", "c1", "c2", "c3", "c4", "c5", "c6", "eps")
APOS_FIELDS = ("a", "b", "d1", "d2", "d3", "d4", "d5", "d6", "eps")
ANEG_FIELDS = ("a", "b") + tuple(f"e{k}" for k in range(1, 10)) + ("eps",)


class InputError(ValueError):
    def __init__(self, fieldname: str, message: str):
        super().__init__(f"{fieldname}: {message}")
        self.field = fieldname


@dataclass
class RunConfig:
    subcommand: str
    input_path: Optional[str] = None
    output_path: Optional[str] = None
    seed: int = 0
    overrides: Dict[str, float] = field(default_factory=dict)
    options: Dict[str, object] = field(default_factory=dict)


# ------------------------------------------------------------------ input

def _load_json(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise InputError("params", f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError("params", f"{path} is not valid JSON ({exc.msg} at line {exc.lineno})") from exc
    if not isinstance(data, dict):
        raise InputError("params", "top level must be a JSON object")
    return data


def _number(name: str, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise InputError(name, f"expected a number, got {value!r}")
    try:
        x = float(value)
    except ValueError as exc:
        raise InputError(name, f"expected a number, got {value!r}") from exc
    if not math.isfinite(x):
        raise InputError(name, "must be finite")
    return x


def resolve_params(cfg: RunConfig, regime: Optional[str] = None) -> Dict[str, object]:
    """Merge the params file with ``--set`` overrides (overrides win)."""
    data = _load_json(cfg.input_path)
    data.update(cfg.overrides)
    form = data.pop("form", None)
    file_regime = data.pop("regime", None)
    if regime and file_regime and regime != file_regime:
        raise InputError("regime", f"flag says {regime}, params file says {file_regime}")
    regime = regime or file_regime
    keys = set(data)
    if form is None:
        form = "oscillator" if keys & {"c1", "c2", "c3", "c4", "c5", "c6"} or not keys - {"a", "b", "eps"} else "canonical"
    if form not in ("oscillator", "canonical"):
        raise InputError("form", f"expected 'oscillator' or 'canonical', got {form!r}")
    if form == "oscillator":
        allowed = OSC_FIELDS
    elif regime == "aneg" or keys & {"e7", "e8", "e9"}:
        allowed, regime = ANEG_FIELDS, "aneg"
    else:
        allowed = APOS_FIELDS
        regime = regime or "apos"
    for k in sorted(keys):
        if k not in allowed:
            raise InputError(k, f"unknown field for the {form} form")
    for k in ("a", "b"):
        if k not in data:
            raise InputError(k, "required")
    vals = {k: _number(k, data[k]) for k in allowed if k in data}
    try:
        if form == "oscillator":
            obj = OscParams(**vals)
            if regime and obj.regime != regime:
                raise InputError("a", f"sign of a gives regime {obj.regime}, not {regime}")
            regime = obj.regime
        elif regime == "apos":
            obj = CanonicalApos(**vals)
        else:
            obj = CanonicalAneg(**vals)
    except InputError:
        raise
    except ValueError as exc:
        msg = str(exc)
        culprit = "eps" if "eps" in msg else ("a" if "a=" in msg or "a >" in msg or "a*b" in msg else "params")
        raise InputError(culprit, msg) from exc
    if abs(vals.get("eps", 0.0)) > EPS_MAX:
        raise InputError("eps", f"|eps| must not exceed {EPS_MAX}")
    return {"form": form, "regime": regime, "object": obj, "values": vals}


def _canonical_of(p: Dict[str, object]):
    return to_canonical(p["object"]) if p["form"] == "oscillator" else p["object"]


def _coeffs(c) -> Dict[str, float]:
    return {"a": c.a, "b": c.b, **c.coeffs, "eps": c.eps}


# --------------------------------------------------------------- commands

def _orientation() -> Dict[str, int]:
    return {"forward_sign": FORWARD_SIGN, "M1": mk.M1_ORIENTATION, "M2": mk.M2_ORIENTATION}


def cmd_canonical(cfg: RunConfig) -> tuple:
    p = resolve_params(cfg)
    if p["form"] != "oscillator":
        raise InputError("params", "canonical needs oscillator parameters a, b, c1..c6, eps")
    osc = p["object"]
    c = to_canonical(osc)
    res = verify_conjugacy(osc, int(cfg.options.get("samples", 100)), cfg.seed)
    flagged = {k: v for k, v in formula_residuals(osc).items() if v > 1e-10}
    rep = {"regime": p["regime"], "params": p["values"], "canonical": _coeffs(c),
           "saddle": c.saddle, "conjugacy_residual": res, "flagged_formulas": flagged}
    return rep, 0


def cmd_lyapunov(cfg: RunConfig) -> tuple:
    p = resolve_params(cfg, cfg.options.get("regime"))
    c = _canonical_of(p)
    trace = "d3" if p["regime"] == "apos" else "e3"
    if getattr(c, trace) != 0:
        raise InputError(trace, "closed constants need the linear trace coefficient to be zero")
    if c.eps == 0:
        raise InputError("eps", "must be nonzero for the closed constants")
    consts = closed_v_apos(c) if p["regime"] == "apos" else closed_v_aneg(c)
    ser = numeric_series(c.field(), order=11)
    closed, numeric, errs = [], [], []
    for k, v, valid in consts.entries[1:]:
        u = ser.u(2 * k + 1)
        # aneg V11 has only a sign surrogate
        exact = not (p["regime"] == "aneg" and k == 5)
        closed.append({"name": f"V{2 * k + 1}", "value": v, "valid": valid, "exact": exact})
        numeric.append({"name": f"u{2 * k + 1}", "value": u})
        if valid and exact and u != 0:
            errs.append(abs(v - u) / abs(u))
    rep = {"regime": p["regime"], "params": _coeffs(c), "closed": closed, "numeric": numeric,
           "surrogate_V11": consts.surrogate, "max_rel_err": max(errs) if errs else None,
           "series_error_estimate": ser.error}
    return rep, 0


def cmd_melnikov(cfg: RunConfig) -> tuple:
    p = resolve_params(cfg, cfg.options.get("regime"))
    c = _canonical_of(p)
    if p["regime"] == "apos":
        r = mk.m1_quadrature(c)
        phis = {"phi1": mk.phi1(c), "phi2": mk.phi2(c), "phi3": mk.phi3(c), "phi3_corrected": mk.phi3_corrected(c)}
    else:
        r = mk.m2_quadrature(c)
        phis = {"phi1": mk.phi1_aneg(c), "phi2": mk.phi2_aneg(c), "phi3": mk.phi3_aneg(c),
                "phi3_corrected": mk.phi3_aneg_corrected(c)}
    rep = {"regime": p["regime"], "params": _coeffs(c), "closed": r.closed_form, "quadrature": r.quadrature,
           "error": r.abs_error_estimate, "orientation_sign": r.orientation_sign, "agrees": r.agrees,
           "phi_values": phis}
    return rep, 0 if r.agrees else 1


def parse_configuration(text: str, regime: str) -> tuple:
    try:
        parts = tuple(int(t) for t in text.split(","))
    except ValueError as exc:
        raise InputError("config", f"expected integers 's,m[,k]', got {text!r}") from exc
    if regime == "apos" and len(parts) != 2:
        raise InputError("config", "apos takes 's,m'")
    if regime == "aneg" and len(parts) not in (2, 3):
        raise InputError("config", "aneg takes 's,m' or 's,m,k'")
    if any(x < 0 for x in parts):
        raise InputError("config", "entries must be non-negative")
    return parts


def build_schedule(regime: str, parts: tuple):
    try:
        if regime == "apos":
            s, m = parts
            return bautin.schedule_small_apos(s) if m == 0 else bautin.schedule_mixed_apos(s, m)
        s, m, k = parts + (0,) * (3 - len(parts))
        if m == 0 and k == 0:
            return bautin.schedule_small_aneg(s)
        return bautin.schedule_mixed_aneg(s, m, k)
    except ValueError as exc:
        raise InputError("config", str(exc)) from exc


def cmd_schedule(cfg: RunConfig) -> tuple:
    regime = cfg.options.get("regime")
    parts = parse_configuration(str(cfg.options["config"]), regime)
    sch = build_schedule(regime, parts)
    eps = cfg.options.get("eps")
    if eps is None:
        good = bautin.working_eps(sch)
        if not good:
            raise InputError("eps", "no grid value reproduces the schedule signs; pass --eps")
        # prefer the largest value inside the asymptotic range
        eps = max([e for e in good if e <= 0.01] or good)
    eps = _number("eps", eps)
    try:
        c = bautin.realize(sch, eps)
    except ValueError as exc:
        raise InputError("eps", str(exc)) from exc
    pred = bautin.predict(sch)
    rep = {"regime": regime, "config": list(parts), "eps": eps, "params": _coeffs(c),
           "schedule": sch.to_dict(), "prediction": {**asdict(pred), "configuration": list(pred.configuration)},
           "drift_at_eps": [list(d) for d in bautin.evaluated_drift(sch, eps)]}
    return rep, 0


def _pair(name: str, text: str) -> tuple:
    try:
        lo, hi = (float(t) for t in text.split(","))
    except ValueError as exc:
        raise InputError(name, f"expected 'lo,hi', got {text!r}") from exc
    if not 0 < lo < hi:
        raise InputError(name, "need 0 < lo < hi")
    return lo, hi


def cmd_simulate(cfg: RunConfig) -> tuple:
    p = resolve_params(cfg, cfg.options.get("regime"))
    c = _canonical_of(p)
    tol = cfg.options.get("tol")
    try:
        icfg = IntegratorConfig() if tol is None else IntegratorConfig(rel_tol=float(tol), abs_tol=max(float(tol), 1e-14))
    except ValueError as exc:
        raise InputError("tol", str(exc)) from exc
    interval = _pair("interval", cfg.options["interval"]) if cfg.options.get("interval") else (1e-3, 0.9 * abs(c.saddle))
    scan = int(cfg.options.get("scan") or 48)
    if scan < 2:
        raise InputError("scan", "need at least 2 ladder points")
    rep = find_cycles(c.field(), interval, scan, icfg, loop_extent=abs(c.saddle), workers=threads())
    csv_path = cfg.options.get("csv")
    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x0", "d"])
            for x, d in rep.displacement_samples:
                w.writerow([repr(x), repr(d)])
    out = {"regime": p["regime"], "params": _coeffs(c), "integrator": asdict(icfg), "report": rep.to_dict()}
    return out, 0


def cmd_verify(cfg: RunConfig) -> tuple:
    regime = cfg.options.get("regime")
    draws = int(cfg.options.get("draws") or 20)
    if draws < 1:
        raise InputError("draws", "must be positive")
    if regime == "all":
        sel = cfg.options.get("criteria")
        results = verify.run_all(sel, seed=cfg.seed)
        checks = [{k: v for k, v in r.to_dict().items() if k != "seconds"} for r in results]
        ok = all(r.passed for r in results)
        return {"regime": "all", "seed": cfg.seed, "checks": checks, "passed": ok}, 0 if ok else 1
    ly = verify.lyapunov_oracle(regime, draws, cfg.seed)
    me = verify.melnikov_oracle(regime, draws, cfg.seed)
    ok = ly["all_ok"] and me["all_ok"]
    rep = {"regime": regime, "seed": cfg.seed, "draws": draws,
           "max_rel_err": max(ly["max_rel_err"], me["max_rel_err"]),
           "lyapunov": {"max_rel_err": ly["max_rel_err"], "comparisons": len(ly["rows"]),
                        "failures": [r for r in ly["rows"] if not r["ok"]]},
           "melnikov": {"max_rel_err": me["max_rel_err"], "comparisons": len(me["rows"]),
                        "failures": [r for r in me["rows"] if not r["ok"]]},
           "passed": ok}
    return rep, 0 if ok else 1


COMMANDS = {"canonical": cmd_canonical, "lyapunov": cmd_lyapunov, "melnikov": cmd_melnikov,
            "schedule": cmd_schedule, "simulate": cmd_simulate, "verify": cmd_verify}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def render(report: dict, cfg: RunConfig) -> str:
    full = {"schema_version": SCHEMA_VERSION, "subcommand": cfg.subcommand,
            "orientation": _orientation(), **report}
    return json.dumps(_jsonable(full), indent=2, sort_keys=True) + "\n"


def run(cfg: RunConfig, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        report, code = COMMANDS[cfg.subcommand](cfg)
    except InputError as exc:
        print(f"cycleforge {cfg.subcommand}: input error in field '{exc.field}': {exc}", file=stderr)
        return 2
    text = render(report, cfg)
    if cfg.output_path:
        with open(cfg.output_path, "w") as fh:
            fh.write(text)
    else:
        stdout.write(text)
    return code


# ----------------------------------------------------------------- parser

def _setting(text: str) -> tuple:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected name=value, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cycleforge", description="Limit cycles of the Rayleigh-Lienard oscillator.")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    def common(p, params=True):
        p.add_argument("--out", help="write the JSON report here instead of stdout")
        p.add_argument("--seed", type=int, default=0)
        if params:
            p.add_argument("--params", help="JSON file with parameters")
            p.add_argument("--set", dest="overrides", type=_setting, action="append", default=[],
                           metavar="NAME=VALUE", help="override one parameter (repeatable)")

    p = sub.add_parser("canonical", help="reduce oscillator parameters to canonical form")
    common(p)
    p.add_argument("--samples", type=int, default=100)

    for name, helptext in (("lyapunov", "closed Lyapunov constants against the return series"),
                           ("melnikov", "loop splitting integral, closed and by quadrature")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--regime", choices=("apos", "aneg"), required=True)

    p = sub.add_parser("schedule", help="build and realize a perturbation schedule")
    common(p, params=False)
    p.add_argument("--regime", choices=("apos", "aneg"), required=True)
    p.add_argument("--config", required=True, help="'s,m' or 's,m,k'")
    p.add_argument("--eps", type=float)

    p = sub.add_parser("simulate", help="locate limit cycles by Poincare displacement")
    common(p)
    p.add_argument("--regime", choices=("apos", "aneg"))
    p.add_argument("--interval", help="'lo,hi' section range")
    p.add_argument("--scan", type=int, default=48)
    p.add_argument("--tol", type=float)
    p.add_argument("--csv", help="write (x0, d) samples here")

    p = sub.add_parser("verify", help="run oracle checks or the full acceptance suite")
    common(p, params=False)
    p.add_argument("--regime", choices=("apos", "aneg", "all"), required=True)
    p.add_argument("--draws", type=int, default=20)
    p.add_argument("--criteria", help="comma list of criteria numbers (with --regime all)")
    return ap


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    overrides = dict(getattr(ns, "overrides", []) or [])
    opts = {k: v for k, v in vars(ns).items()
            if k not in ("subcommand", "params", "out", "seed", "overrides")}
    if opts.get("criteria"):
        try:
            opts["criteria"] = [int(t) for t in opts["criteria"].split(",")]
        except ValueError as exc:
            raise InputError("criteria", "expected a comma list of integers") from exc
        bad = [n for n in opts["criteria"] if n not in verify.CRITERIA]
        if bad:
            raise InputError("criteria", f"unknown criteria {bad}")
    return RunConfig(ns.subcommand, getattr(ns, "params", None), ns.out, ns.seed, overrides, opts)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed the diagnostic; usage errors are input errors
        return 0 if exc.code == 0 else 2
    try:
        cfg = config_from_args(ns)
    except InputError as exc:
        print(f"cycleforge: input error in field '{exc.field}': {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
