"""``pid-decomp`` command-line front end.

    pid-decomp <check|pid|verify|oracle|pmf> --config FILE [--out FILE]
               [--channel-out CSV] [--channel-in CSV] [--assemble-pid]
               [--epsilon FLOAT] [--tol FLOAT]

Reports are JSON on stdout (and in --out) with floats at 17 significant digits.
Exit codes: 0 success, 1 input error, 2 condition or infeasibility, 3 numerical
non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .conditions import ConditionReport, check
from .degradation import Channel, degradation_channel, verify_degradation
from .distributions import MvPoissonParams, mv_poisson_pmf, mv_poisson_pmf_bruteforce, parse_index_tuple
from .errors import (
    ConditionsInconclusiveError,
    ConstructionInfeasibleError,
    InfeasibleProblemError,
    InvalidArgumentError,
    NumericalIntegrityError,
    PidDecompError,
)
from .information import InfoValue
from .oracle import build_problem, solve_ui
from .pid import PidResult, closed_form_pid, oracle_pid
from .systems import JointPmf, MultinomialSystemSpec, PoissonSystemSpec, ScalarMPmf, SystemSpec

SCHEMA = "pid-decomp/1"

EXIT_OK, EXIT_INPUT, EXIT_CONDITION, EXIT_NONCONVERGED = 0, 1, 2, 3


class ConfigError(InvalidArgumentError):
    def __init__(self, message: str, line: int | None = None, source: str = "config"):
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)
        self.line = line


# -- config parsing ----------------------------------------------------------


def _locate(text: str, path: Sequence[str | int]) -> int | None:
    """Line of the value at ``path``, found by walking the keys in document order.

    Falls back to the deepest key that was found, or None.
    """
    pos = None
    for key in path:
        if isinstance(key, int):
            continue
        m = re.compile(r'"' + re.escape(key) + r'"\s*:').search(text, pos or 0)
        if m is None:
            break
        pos = m.start()
    return None if pos is None else text.count("\n", 0, pos) + 1


@dataclass
class RunConfig:
    system: SystemSpec | None
    epsilon: float
    tolerances: dict[str, float]
    joint: str | None  # None = conditional independence, else a CSV path
    pmf: tuple[MvPoissonParams, list[int]] | None
    oracle: dict[str, Any] = field(default_factory=dict)
    base_dir: Path = Path(".")


class _ConfigReader:
    def __init__(self, text: str, source: str):
        self.text = text
        self.source = source

    def fail(self, message: str, path: Sequence[str | int]) -> ConfigError:
        return ConfigError(message, _locate(self.text, path), self.source)

    def get(self, obj: dict, key: str, path: Sequence[str | int], kind: type | tuple, default: Any = ...) -> Any:
        if key not in obj:
            if default is ...:
                raise self.fail(f"missing required key {'.'.join(map(str, [*path, key]))!r}", path)
            return default
        value = obj[key]
        if isinstance(value, bool) and kind is not bool or not isinstance(value, kind):
            name = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
            raise self.fail(f"{'.'.join(map(str, [*path, key]))} must be {name}, got {value!r}", [*path, key])
        return value

    def number(self, obj: dict, key: str, path: Sequence[str | int], default: Any = ...) -> float:
        value = self.get(obj, key, path, (int, float), default)
        if value is not default and not math.isfinite(value):
            raise self.fail(f"{key} must be finite", [*path, key])
        return float(value) if value is not None else value

    def gamma(self, obj: dict, key: str, path: Sequence[str] = ()) -> dict:
        raw = self.get(obj, key, path, dict)
        out = {}
        for k, v in raw.items():
            try:
                t = parse_index_tuple(k)
            except InvalidArgumentError as exc:
                raise self.fail(f"{key}: bad index tuple {k!r}: {exc}", [*path, key, k]) from None
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise self.fail(f"{key}[{k}] must be a number, got {v!r}", [*path, key, k])
            out[t] = float(v)
        return out

    def m_pmf(self, obj: dict) -> ScalarMPmf:
        raw = self.get(obj, "m_pmf", [], dict)
        support = self.get(raw, "support", ["m_pmf"], list)
        probs = self.get(raw, "probs", ["m_pmf"], list)
        for name, seq in (("support", support), ("probs", probs)):
            if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in seq):
                raise self.fail(f"m_pmf.{name} must be a list of numbers", ["m_pmf", name])
        try:
            return ScalarMPmf(np.array(support, dtype=float), np.array(probs, dtype=float))
        except InvalidArgumentError as exc:
            raise self.fail(str(exc), ["m_pmf"]) from None


def _parse_pmf(r: _ConfigReader, raw: Any) -> tuple[MvPoissonParams, list[int]]:
    if not isinstance(raw, dict):
        raise r.fail("pmf must be an object", ["pmf"])
    d = r.get(raw, "d", ["pmf"], int)
    dp = r.get(raw, "d_prime", ["pmf"], int)
    lambdas = r.gamma(raw, "lambdas", ["pmf"])
    point = r.get(raw, "point", ["pmf"], list)
    if not all(isinstance(v, int) and not isinstance(v, bool) for v in point):
        raise r.fail(f"pmf.point must be a list of integers, got {point!r}", ["pmf", "point"])
    if len(point) != d or any(v < 0 for v in point):
        raise r.fail(f"pmf.point must hold {d} nonnegative counts, got {point!r}", ["pmf", "point"])
    try:
        return MvPoissonParams(d, dp, lambdas), point
    except InvalidArgumentError as exc:
        raise r.fail(str(exc), ["pmf", "lambdas"]) from None


def parse_config(text: str, source: str = "config", base_dir: Path = Path(".")) -> RunConfig:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", exc.lineno, source) from None
    r = _ConfigReader(text, source)
    if not isinstance(obj, dict):
        raise ConfigError("top level must be a JSON object", 1, source)

    epsilon = r.number(obj, "epsilon", [], 1e-10)
    if not 0 < epsilon < 1:
        raise r.fail(f"epsilon must lie in (0, 1), got {epsilon}", ["epsilon"])
    tol_raw = r.get(obj, "tolerances", [], dict, {})
    tolerances = {k: r.number(tol_raw, k, ["tolerances"]) for k in tol_raw}
    unknown = sorted(set(tolerances) - {"tv", "mi", "oracle", "feasibility"})
    if unknown:
        raise r.fail(f"unknown tolerance keys {unknown}", ["tolerances", unknown[0]])

    joint = r.get(obj, "joint", [], str, "cond_independent")
    joint = None if joint == "cond_independent" else joint

    oracle = r.get(obj, "oracle", [], dict, {})
    for key, kind in (("max_iter", int), ("cell_cap", int)):
        if key in oracle:
            r.get(oracle, key, ["oracle"], kind)
    if r.get(oracle, "method", ["oracle"], str, "newton") not in ("newton", "mirror"):
        raise r.fail(f"oracle.method must be 'newton' or 'mirror', got {oracle['method']!r}", ["oracle", "method"])

    pmf = _parse_pmf(r, obj["pmf"]) if "pmf" in obj else None

    system = None
    kind = r.get(obj, "system", [], str, None)
    if kind is not None:
        m_pmf = r.m_pmf(obj)
        try:
            if kind == "poisson":
                dims = {k: r.get(obj, k, [], int) for k in ("d1", "d1_prime", "d2", "d2_prime")}
                system = PoissonSystemSpec(m_pmf, gamma_y=r.gamma(obj, "gamma_y"), gamma_z=r.gamma(obj, "gamma_z"), **dims)
            elif kind == "multinomial":
                p_y = r.get(obj, "p_y", [], list)
                p_z = r.get(obj, "p_z", [], list)
                system = MultinomialSystemSpec(m_pmf, np.array(p_y, dtype=float), np.array(p_z, dtype=float))
            else:
                raise r.fail(f"system must be 'poisson' or 'multinomial', got {kind!r}", ["system"])
        except (InvalidArgumentError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            key = next((k for k in ("gamma_y", "gamma_z", "p_y", "p_z", "m_pmf") if k in str(exc)), "system")
            raise r.fail(str(exc), [key]) from None
    return RunConfig(system, epsilon, tolerances, joint, pmf, oracle, base_dir)


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(p)) from None
    return parse_config(text, str(p), p.parent)


def read_joint_csv(path: Path) -> JointPmf:
    """Joint table from CSV columns m,y,z,probability (points space-separated)."""
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read joint table: {exc.strerror}", None, str(path)) from None
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != ["m", "y", "z", "probability"]:
        raise ConfigError(f"header must be m,y,z,probability; got {reader.fieldnames}", 1, str(path))
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        try:
            rows.append((
                tuple(float(v) for v in rec["m"].split()),
                tuple(int(v) for v in rec["y"].split()),
                tuple(int(v) for v in rec["z"].split()),
                float(rec["probability"]),
            ))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), lineno, str(path)) from None
    axes = [sorted({r[i] for r in rows}) for i in range(3)]
    index = [{v: j for j, v in enumerate(a)} for a in axes]
    table = np.zeros(tuple(len(a) for a in axes))
    for m, y, z, p in rows:
        table[index[0][m], index[1][y], index[2][z]] += p
    try:
        return JointPmf(("M", "Y", "Z"), tuple(np.array(a) for a in axes), table, max(0.0, 1.0 - table.sum()))
    except InvalidArgumentError as exc:
        raise ConfigError(str(exc), None, str(path)) from None


# -- deterministic JSON ------------------------------------------------------


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise NumericalIntegrityError(f"non-finite value {x!r} in report")
    s = format(x, ".17g")
    if "e" not in s and "." not in s:
        s += ".0"
    return s


def dumps(obj: Any, indent: int = 0) -> str:
    """JSON with sorted keys, two-space indent and 17-significant-digit floats."""
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {dumps(obj[k], indent + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(inner + dumps(v, indent + 1) for v in obj) + "\n" + pad + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def _info(v: InfoValue) -> dict:
    return {"value": v.value, "truncation_bound": v.truncation_bound}


def _report(command: str, **body) -> dict:
    return {"schema": SCHEMA, "version": __version__, "command": command, **body}


def condition_json(rep: ConditionReport) -> dict:
    out: dict[str, Any] = {"system": rep.system_kind, "direction": rep.direction, "status": rep.status}
    if rep.system_kind == "poisson":
        def rows(checks):
            return [{"j": c.j, "lhs_sum": c.lhs_sum, "rhs_sum": c.rhs_sum, "satisfied": c.satisfied} for c in checks]
        out.update(
            order_ok=rep.order_ok,
            order_ok_swapped=rep.order_ok_swapped,
            per_order=rows(rep.per_order),
            per_order_swapped=rows(rep.per_order_swapped),
        )
    else:
        out["minima"] = {"min_p_z": rep.minima[0], "min_p_y": rep.minima[1]}
    return out


def pid_json(res: PidResult) -> dict:
    terms = ("ui_y", "ui_z", "ri", "si", "i_my", "i_mz", "i_myz")
    return {
        "direction": res.direction,
        "provenance": res.provenance,
        "joint_assumption": res.joint_assumption,
        "terms": {t: _info(getattr(res, t)) for t in terms},
        "identity_residuals": res.identity_residuals(),
        "identities_hold": res.identities_hold(),
    }


def pid_csv_row(res: PidResult) -> str:
    terms = ("ui_y", "ui_z", "ri", "si", "i_my", "i_mz", "i_myz")
    header = ",".join([*terms, "direction", "provenance", "joint_assumption"])
    values = [_fmt_float(getattr(res, t).value) for t in terms]
    return header + "\n" + ",".join([*values, str(res.direction), res.provenance, res.joint_assumption]) + "\n"


# -- commands ----------------------------------------------------------------


@dataclass
class Outcome:
    report: dict
    code: int = EXIT_OK
    csv_row: str | None = None


def _need_system(cfg: RunConfig) -> SystemSpec:
    if cfg.system is None:
        raise ConfigError("this command needs a 'system' section")
    return cfg.system


def _joint(cfg: RunConfig) -> JointPmf | None:
    if cfg.joint is None:
        return None
    return read_joint_csv(cfg.base_dir / cfg.joint)


def cmd_check(cfg: RunConfig, args) -> Outcome:
    rep = check(_need_system(cfg))
    return Outcome(_report("check", **condition_json(rep)), EXIT_CONDITION if rep.direction == "neither" else EXIT_OK)


def cmd_pid(cfg: RunConfig, args) -> Outcome:
    spec = _need_system(cfg)
    try:
        res = closed_form_pid(spec, cfg.epsilon, _joint(cfg))
    except ConditionsInconclusiveError as exc:
        body = {"status": "inconclusive", "message": str(exc), "suggestion": "pid-decomp oracle"}
        return Outcome(_report("pid", epsilon=cfg.epsilon, **body), EXIT_CONDITION)
    return Outcome(_report("pid", epsilon=cfg.epsilon, **pid_json(res)), csv_row=pid_csv_row(res))


def cmd_verify(cfg: RunConfig, args) -> Outcome:
    spec = _need_system(cfg)
    if args.channel_in:
        channel = Channel.from_csv(Path(args.channel_in))
        source = "file"
    else:
        try:
            channel = degradation_channel(spec, cfg.epsilon)
        except ConstructionInfeasibleError as exc:
            return Outcome(_report("verify", status="infeasible", message=str(exc)), EXIT_CONDITION)
        source = "constructed"
    if args.channel_out:
        channel.to_csv(args.channel_out)
    tv_tol = args.tol if args.tol is not None else cfg.tolerances.get("tv")
    cert = verify_degradation(spec, channel, cfg.epsilon, tv_tol, cfg.tolerances.get("mi"))
    body = {
        "system": spec.kind,
        "epsilon": cfg.epsilon,
        "channel_source": source,
        "n_inputs": len(channel.input_support),
        "n_outputs": len(channel.output_support),
        "max_tv": cert.max_tv,
        "conditional_mi": cert.conditional_mi,
        "tv_tolerance": cert.tv_tolerance,
        "mi_tolerance": cert.mi_tolerance,
        "truncation_tail": cert.truncation_tail,
        "passed": cert.passed,
        "status": "certified" if cert.passed else "failed",
    }
    return Outcome(_report("verify", **body), EXIT_OK if cert.passed else EXIT_CONDITION)


def cmd_oracle(cfg: RunConfig, args) -> Outcome:
    spec = _need_system(cfg)
    problem = build_problem(spec, cfg.epsilon)
    tol = args.tol if args.tol is not None else cfg.tolerances.get("oracle", 1e-6)
    sol = solve_ui(
        problem,
        tol=tol,
        max_iter=cfg.oracle.get("max_iter", 5000),
        feas_tol=cfg.tolerances.get("feasibility", 1e-9),
        method=cfg.oracle.get("method", "newton"),
        **({"cell_cap": cfg.oracle["cell_cap"]} if "cell_cap" in cfg.oracle else {}),
    )
    body: dict[str, Any] = {
        "system": spec.kind,
        "epsilon": cfg.epsilon,
        "n_cells": problem.n_cells,
        "ui_y": _info(sol.ui_y),
        "ui_z": _info(sol.ui_z),
        "start_value": sol.start_value,
        "iterations": sol.iterations,
        "converged": sol.converged,
        "feasibility_violation": sol.feasibility_violation,
        "tolerance": tol,
    }
    if args.assemble_pid:
        body["pid"] = pid_json(oracle_pid(problem, sol, _joint(cfg), check(spec).direction))
    return Outcome(_report("oracle", **body), EXIT_OK if sol.converged else EXIT_NONCONVERGED)


def cmd_pmf(cfg: RunConfig, args) -> Outcome:
    if cfg.pmf is None:
        raise ConfigError("the pmf command needs a 'pmf' section")
    params, point = cfg.pmf
    closed = mv_poisson_pmf(params, point)
    brute = mv_poisson_pmf_bruteforce(params, point)
    body = {
        "d": params.d,
        "d_prime": params.d_prime,
        "point": point,
        "closed_form": closed,
        "enumeration": brute,
        "abs_difference": abs(closed - brute),
    }
    return Outcome(_report("pmf", **body))


COMMANDS = {"check": cmd_check, "pid": cmd_pid, "verify": cmd_verify, "oracle": cmd_oracle, "pmf": cmd_pmf}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pid-decomp", description="Zero-UI conditions, closed-form PID and certificates for Poisson and multinomial systems.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON system configuration")
    ap.add_argument("--out", help="also write the report here (a .csv path gets the PID row)")
    ap.add_argument("--channel-out", help="export the constructed channel as CSV (verify)")
    ap.add_argument("--channel-in", help="verify this channel CSV instead of constructing one")
    ap.add_argument("--assemble-pid", action="store_true", help="oracle: also report the PID built from the oracle UI")
    ap.add_argument("--epsilon", type=float, help="override the config's truncation tail bound")
    ap.add_argument("--tol", type=float, help="override the TV tolerance (verify) or convergence tolerance (oracle)")
    return ap


def run(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.epsilon is not None:
            if not 0 < args.epsilon < 1:
                raise ConfigError(f"--epsilon must lie in (0, 1), got {args.epsilon}")
            cfg.epsilon = args.epsilon
        outcome = COMMANDS[args.command](cfg, args)
    except (InvalidArgumentError, InfeasibleProblemError) as exc:
        print(f"pid-decomp: error: {exc}", file=stderr)
        return EXIT_INPUT
    except (ConditionsInconclusiveError, ConstructionInfeasibleError) as exc:
        print(f"pid-decomp: {exc}", file=stderr)
        return EXIT_CONDITION
    except NumericalIntegrityError as exc:
        print(f"pid-decomp: numerical failure: {exc}", file=stderr)
        return EXIT_NONCONVERGED
    except PidDecompError as exc:
        print(f"pid-decomp: internal error: {exc}", file=stderr)
        return EXIT_INPUT
    text = dumps(outcome.report) + "\n"
    stdout.write(text)
    if args.out:
        if args.out.endswith(".csv") and outcome.csv_row is not None:
            Path(args.out).write_text(outcome.csv_row)
        else:
            Path(args.out).write_text(text)
    return outcome.code


def main(argv: Sequence[str] | None = None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
