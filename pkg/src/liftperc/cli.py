"""Batch experiment runner.

Every command writes a manifest (config echo plus content hash) and one or
more CSV/JSON artifacts into --out.  Artifacts are a pure function of the
config and seed: trials draw from counter-based per-trial streams, so the
bytes do not depend on the worker count.  Execution-only knobs (--out,
--workers) are excluded from the manifest hash for the same reason.

Exit codes: 0 success, 2 config error, 3 invariant violation in a coupling
check, 4 size-guard rejection of an exact enumeration.
"""

import argparse
import hashlib
import json
import math
import sys
from dataclasses import asdict
from fractions import Fraction
from pathlib import Path

import numpy as np

from liftperc import enhance, estimators, holder, oracle, sharpness
from liftperc.graphs import BaseGraph, GraphInputError, build_box, build_complete, build_custom, build_cycle, build_tree, load_edge_list
from liftperc.lift import sample_switch_config
from liftperc.oracle import SizeGuardError
from liftperc.streams import substream

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_SIZE_GUARD = 4


class ConfigError(ValueError):
    pass


class InvariantViolation(RuntimeError):
    pass


def parse_graph(desc: str) -> BaseGraph:
    try:
        kind, *rest = desc.split(":")
        if kind == "box":
            return build_box(int(rest[0]), int(rest[1]))
        if kind == "cycle":
            return build_cycle(int(rest[0]))
        if kind == "tree":
            return build_tree(int(rest[0]), int(rest[1]))
        if kind == "complete":
            return build_complete(int(rest[0]))
        if kind == "custom":
            path = ":".join(rest)
            return load_edge_list(Path(path).read_text())
    except (IndexError, ValueError, OSError, GraphInputError) as exc:
        raise ConfigError(f"bad graph descriptor {desc!r}: {exc}") from exc
    raise ConfigError(f"unknown graph kind in {desc!r}")


def parse_grid(text: str):
    """lo:hi:step inclusive grid, or a comma list of values."""
    try:
        if ":" in text:
            lo, hi, step = (float(t) for t in text.split(":"))
            if step <= 0:
                raise ValueError("step must be positive")
            out = []
            x = lo
            while x <= hi + 1e-12:
                out.append(round(x, 12))
                x += step
            return out
        return [float(t) for t in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}: {exc}") from exc


def parse_schedule(text: str):
    """Comma list of L:trials pairs, e.g. 31:2000,63:4000."""
    try:
        out = []
        for part in text.split(","):
            L, trials = part.split(":")
            out.append((int(L), int(trials)))
        if not out or any(L < 2 or t < 1 for L, t in out):
            raise ValueError("need L >= 2 and trials >= 1")
        return out
    except ValueError as exc:
        raise ConfigError(f"bad schedule {text!r}: {exc}") from exc


def _canonical(obj):
    if isinstance(obj, float):
        return format(obj, ".17g")
    if isinstance(obj, dict):
        return {k: _canonical(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    return obj


def write_manifest(outdir: Path, command: str, config: dict):
    payload = {
        "command": command,
        "config": _canonical({k: v for k, v in config.items() if k not in ("out", "workers")}),
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    payload["content_hash"] = hashlib.sha256(blob).hexdigest()
    (outdir / "manifest.json").write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def write_csv(path: Path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".12g")
    return str(v)


def write_json(path: Path, obj):
    path.write_text(json.dumps(_canonical(obj), sort_keys=True, indent=1) + "\n")


# ---------------------------------------------------------------------------
# command implementations
# ---------------------------------------------------------------------------

def cmd_oracle_disconnect(a, out: Path):
    G = parse_graph(a.graph)
    value = oracle.exact_disconnection_probability(G)
    print(f"{value.numerator}/{value.denominator}")
    write_json(out / "oracle_disconnect.json", oracle.oracle_record(G.kind, Fraction(1, 2), None, "disconnection_probability", value))
    return EXIT_OK


def cmd_oracle_joint(a, out: Path):
    joint = oracle.exact_holder_joint(Fraction(a.q).limit_denominator(10**9),
                                      Fraction(a.r).limit_denominator(10**9),
                                      Fraction(a.a).limit_denominator(10**9))
    table = {
        ",".join(map(str, key)): (str(w) if joint.exact else float(w))
        for key, w in sorted(joint.table.items())
    }
    write_json(out / "holder_joint.json", {
        "q": float(a.q), "r": float(a.r), "a": float(a.a),
        "exact": joint.exact,
        "p_plus": float(joint.p_plus),
        "q_hat": float(joint.q_hat),
        "cells": table,
    })
    print(f"P(omega+=omega-=1) = {float(joint.prob(omega_plus=1, omega_minus=1)):.12g}")
    return EXIT_OK


def cmd_lift_sample(a, out: Path):
    G = parse_graph(a.graph)
    gen = substream(a.seed, "lift-sample", G.kind, float(a.q))
    eta = sample_switch_config(G, a.q, gen)
    write_json(out / "lift_sample.json", {
        "graph": G.kind, "q": float(a.q), "seed": a.seed,
        "eta_hex": eta.to_hex(), "num_edges": G.num_edges,
    })
    print(eta.to_hex())
    return EXIT_OK


def cmd_theta(a, out: Path):
    G = parse_graph(a.graph)
    est = estimators.estimate_theta(G, a.q, a.p, a.trials, a.seed, workers=a.workers)
    write_csv(out / "theta.csv",
              ["q", "p", "n", "trials", "reach_count", "theta_hat", "stderr"],
              [[est.q, est.p, est.n, est.trials, est.reach_count, est.theta_hat, est.stderr]])
    print(f"theta_hat = {est.theta_hat:.6f} +/- {est.stderr:.6f}")
    return EXIT_OK


def cmd_pc_curve(a, out: Path):
    qs = parse_grid(a.q_grid)
    schedule = parse_schedule(a.schedule)
    curve = estimators.pc_curve(a.d, qs, schedule, a.seed, workers=a.workers,
                                steps_per_stage=a.steps)
    write_csv(out / "pc_curve.csv",
              ["q", "pc_hat", "ci_low", "ci_high"],
              [[e.q, e.pc_hat, e.ci_low, e.ci_high] for e in curve])
    for e in curve:
        print(f"q={e.q:.3f}  pc_hat={e.pc_hat:.5f}  [{e.ci_low:.5f}, {e.ci_high:.5f}]")
    return EXIT_OK


def cmd_pc_mono(a, out: Path):
    schedule = parse_schedule(a.schedule)
    rep = estimators.monotonicity_test(a.d, a.q, schedule, a.seed, workers=a.workers,
                                       steps_per_stage=a.steps)
    write_json(out / "pc_mono.json", {
        "q": rep.q,
        "pc_base": rep.pc_base.pc_hat, "se_base": rep.pc_base.stderr,
        "pc_lift": rep.pc_lift.pc_hat, "se_lift": rep.pc_lift.stderr,
        "z": rep.z,
    })
    print(f"pc(base)={rep.pc_base.pc_hat:.5f}  pc(q={a.q})={rep.pc_lift.pc_hat:.5f}  z={rep.z:.2f}")
    return EXIT_OK


def cmd_holder_verify(a, out: Path):
    params = holder.HolderParams(q=a.q, r=a.r, a=a.a)
    G = parse_graph(a.graph)
    gen = substream(a.seed, "holder-verify", G.kind, float(a.q), float(a.r), float(a.a))
    sample = holder.sample_holder(params, G, gen)
    violations = holder.coupling_violations(sample)
    dom = holder.downward_domination_check(G, a.p, params, a.trials, gen)
    joint = oracle.exact_holder_joint(Fraction(a.q).limit_denominator(10**9),
                                      Fraction(a.r).limit_denominator(10**9),
                                      Fraction(a.a).limit_denominator(10**9))
    report = {
        "params": {"q": a.q, "r": a.r, "a": a.a, "p": a.p},
        "marginals": {
            "omega_plus": float(sample.omega_plus.mean()),
            "omega_minus": float(sample.omega_minus.mean()),
            "eta_hat": float(sample.eta_hat.mean()),
            "eta_bar": float(sample.eta_bar.mean()),
            "exact_p_plus": float(joint.p_plus),
            "exact_q_hat": float(joint.q_hat),
        },
        "coupling_violations": int(violations),
        "domination": asdict(dom),
    }
    write_json(out / "holder_verify.json", report)
    print(f"violations={violations}  domination_violations={dom.violations}")
    if violations or dom.violations:
        raise InvariantViolation("holder coupling violated")
    return EXIT_OK


def cmd_holder_curve_check(a, out: Path):
    qs = parse_grid(a.q_grid)
    schedule = parse_schedule(a.schedule)
    curve = estimators.pc_curve(a.d, qs, schedule, a.seed, workers=a.workers,
                                steps_per_stage=a.steps)
    rep = estimators.continuity_report(curve)
    write_csv(out / "pc_curve.csv",
              ["q", "pc_hat", "ci_low", "ci_high"],
              [[e.q, e.pc_hat, e.ci_low, e.ci_high] for e in curve])
    write_json(out / "holder_curve_check.json", {
        "C": rep.C, "alpha": rep.alpha, "beta": rep.beta,
        "max_violation": rep.max_violation,
        "pairs": rep.pairs,
    })
    print(f"max_violation = {rep.max_violation:.5f} (negative means the bound holds)")
    return EXIT_OK


def cmd_enhance_pc(a, out: Path):
    schedule = parse_schedule(a.schedule)
    est = enhance.estimate_enhanced_pc(a.d, a.r, a.s, schedule, a.seed, workers=a.workers,
                                       steps_per_stage=a.steps)
    write_json(out / "enhance_pc.json", {
        "r": a.r, "s": a.s, "pc_hat": est.pc_hat,
        "stderr": est.stderr, "ci_low": est.ci_low, "ci_high": est.ci_high,
    })
    print(f"pc(enhanced, r={a.r}, s={a.s}) = {est.pc_hat:.5f} +/- {est.stderr:.5f}")
    return EXIT_OK


def cmd_mono_coupling_audit(a, out: Path):
    G = parse_graph(a.graph)
    partition = enhance.build_cycle_partition(G)
    rep = enhance.run_coupling_audit(G, a.q, a.p, partition, a.runs, a.seed)
    write_json(out / "mono_coupling_audit.json", asdict(rep))
    print(f"runs={rep.runs} violations={rep.violations} "
          f"boundary_failures={rep.boundary_implication_failures}")
    if rep.violations or rep.boundary_implication_failures:
        raise InvariantViolation("monotonicity coupling audit failed")
    return EXIT_OK


def cmd_sharpness_verify(a, out: Path):
    G = parse_graph(a.graph)
    rep = sharpness.verify_exp_inequality(G, a.p, a.h, a.trials, a.seed,
                                          n_max=a.n_max, workers=a.workers)
    write_json(out / "sharpness_verify.json", {
        "p": rep.p, "h": rep.h, "s_hat": rep.s_hat, "s_clamped": rep.s_clamped,
        "m_hat": rep.m_hat, "m_stderr": rep.m_stderr, "trials": rep.trials,
        "max_margin_sigmas": rep.max_margin_sigmas,
        "ok_3sigma": bool(rep.max_margin_sigmas <= 3.0),
    })
    write_csv(out / "sharpness_verify.csv",
              ["n", "psi_p", "psi_s", "bound", "margin"],
              [[r["n"], r["psi_p"], r["psi_s"], r["bound"], r["margin"]] for r in rep.rows()])
    print(f"m_hat={rep.m_hat:.4f} s_hat={rep.s_hat:.4f} max_margin={rep.max_margin_sigmas:.2f} sigmas")
    return EXIT_OK


def cmd_quenched_tails(a, out: Path):
    G = parse_graph(a.graph)
    rows = []
    fits = []
    for j in range(a.draws):
        gen = substream(a.seed, "quenched-eta", G.kind, float(a.q), j)
        eta = sample_switch_config(G, a.q, gen).eta
        curve = estimators.quenched_tail(G, a.p, eta, a.n_max, a.trials, a.seed + j,
                                         workers=a.workers)
        fit = estimators.fit_decay(curve.ns, curve.psi_hat, curve.trials)
        fits.append({"draw": j, "c_hat": fit.c_hat, "r_squared": fit.r_squared,
                     "low_confidence": bool(fit.low_confidence)})
        rows.extend([[j, int(n), float(ph), float(se)] for n, ph, se in
                     zip(curve.ns, curve.psi_hat, curve.stderr)])
    write_csv(out / "quenched_tails.csv", ["draw", "n", "psi_hat", "stderr"], rows)
    write_json(out / "quenched_fits.json", {"fits": fits})
    print(f"{a.draws} draws; c_hat range "
          f"[{min(f['c_hat'] for f in fits):.4f}, {max(f['c_hat'] for f in fits):.4f}]")
    return EXIT_OK


def cmd_decay_fit(a, out: Path):
    G = parse_graph(a.graph)
    curve = estimators.tail_psi(G, a.p, a.q, a.n_max, a.trials, a.seed, workers=a.workers)
    fit = estimators.fit_decay(curve.ns, curve.psi_hat, curve.trials)
    write_csv(out / "psi_curve.csv", ["n", "psi_hat", "stderr"],
              [[int(n), float(ph), float(se)] for n, ph, se in
               zip(curve.ns, curve.psi_hat, curve.stderr)])
    write_json(out / "decay_fit.json", {
        "c_hat": fit.c_hat, "C_hat": fit.C_hat, "fit_range": list(fit.fit_range),
        "r_squared": fit.r_squared, "points": fit.points,
        "low_confidence": bool(fit.low_confidence), "degenerate": bool(fit.degenerate),
    })
    print(f"c_hat={fit.c_hat:.4f} R2={fit.r_squared:.4f} range={fit.fit_range}")
    return EXIT_OK


COMMANDS = {
    "oracle-disconnect": cmd_oracle_disconnect,
    "oracle-joint": cmd_oracle_joint,
    "lift-sample": cmd_lift_sample,
    "theta": cmd_theta,
    "pc-curve": cmd_pc_curve,
    "pc-mono": cmd_pc_mono,
    "holder-verify": cmd_holder_verify,
    "holder-curve-check": cmd_holder_curve_check,
    "enhance-pc": cmd_enhance_pc,
    "mono-coupling-audit": cmd_mono_coupling_audit,
    "sharpness-verify": cmd_sharpness_verify,
    "quenched-tails": cmd_quenched_tails,
    "decay-fit": cmd_decay_fit,
}


# flag layout per command: (attr, type, soft default or REQUIRED)
REQUIRED = object()

_SPECS = {
    "oracle-disconnect": [("graph", str, REQUIRED)],
    "oracle-joint": [("q", float, REQUIRED), ("r", float, REQUIRED), ("a", float, REQUIRED)],
    "lift-sample": [("graph", str, REQUIRED), ("q", float, REQUIRED)],
    "theta": [("graph", str, REQUIRED), ("q", float, REQUIRED), ("p", float, REQUIRED),
              ("trials", int, 1000)],
    "pc-curve": [("d", int, 2), ("q_grid", str, REQUIRED), ("schedule", str, REQUIRED),
                 ("steps", int, 5)],
    "pc-mono": [("d", int, 2), ("q", float, 0.5), ("schedule", str, REQUIRED),
                ("steps", int, 5)],
    "holder-verify": [("graph", str, "box:2:31"), ("q", float, REQUIRED),
                      ("r", float, REQUIRED), ("a", float, REQUIRED),
                      ("p", float, 0.6), ("trials", int, 1000)],
    "holder-curve-check": [("d", int, 2), ("q_grid", str, REQUIRED),
                           ("schedule", str, REQUIRED), ("steps", int, 5)],
    "enhance-pc": [("d", int, 2), ("r", int, 1), ("s", float, REQUIRED),
                   ("schedule", str, REQUIRED), ("steps", int, 5)],
    "mono-coupling-audit": [("graph", str, "box:2:10"), ("q", float, 0.5),
                            ("p", float, 0.5), ("runs", int, 100)],
    "sharpness-verify": [("graph", str, "box:2:41"), ("p", float, REQUIRED),
                         ("h", float, REQUIRED), ("trials", int, 10000),
                         ("n_max", int, 30)],
    "quenched-tails": [("graph", str, "box:2:41"), ("p", float, REQUIRED),
                       ("q", float, 0.5), ("draws", int, 20), ("trials", int, 5000),
                       ("n_max", int, 30)],
    "decay-fit": [("graph", str, "box:2:41"), ("p", float, REQUIRED),
                  ("q", float, 0.5), ("trials", int, 10000), ("n_max", int, 30)],
}

_COMMON = [("seed", int, REQUIRED), ("out", str, "out"), ("workers", int, 1),
           ("config", str, None)]


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="liftperc", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)
    for command, spec in _SPECS.items():
        p = sub.add_parser(command)
        for attr, typ, _ in spec + _COMMON:
            flag = "--" + attr.replace("_", "-")
            # every flag parses as optional; required-ness is validated after
            # the config file merges, so configs can supply required values
            p.add_argument(flag, dest=attr, type=typ, default=None)
    return top


def _merge_config(args: argparse.Namespace):
    """Precedence: explicit flag > config file entry > built-in default."""
    spec = _SPECS[args.command] + _COMMON
    known = {attr for attr, _, _ in spec}
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        for key, value in loaded.items():
            attr = key.replace("-", "_")
            if attr not in known:
                raise ConfigError(f"config key {key!r} unknown for command {args.command}")
            if getattr(args, attr) is None:
                setattr(args, attr, value)
    for attr, _, default in spec:
        if getattr(args, attr) is None:
            if default is REQUIRED:
                raise ConfigError(f"--{attr.replace('_', '-')} is required")
            setattr(args, attr, default)
    return args


def _validate(args):
    for name in ("q", "p", "s", "a"):
        if hasattr(args, name):
            val = getattr(args, name)
            if isinstance(val, (int, float)) and not 0.0 <= float(val) <= 1.0:
                raise ConfigError(f"--{name} must lie in [0, 1]")
    if hasattr(args, "h") and args.h is not None and args.h < 0:
        raise ConfigError("--h must be >= 0")
    for name in ("trials", "runs", "draws", "workers", "steps", "n_max"):
        if hasattr(args, name) and getattr(args, name) is not None and getattr(args, name) < 1:
            raise ConfigError(f"--{name.replace('_', '-')} must be positive")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _merge_config(args)
        _validate(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        config = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
        write_manifest(out, args.command, config)
        code = COMMANDS[args.command](args, out)
        return code
    except ConfigError as exc:
        _error_record(args, exc, EXIT_CONFIG)
        return EXIT_CONFIG
    except SizeGuardError as exc:
        _error_record(args, exc, EXIT_SIZE_GUARD)
        return EXIT_SIZE_GUARD
    except (InvariantViolation, enhance.CouplingInvariantError) as exc:
        _error_record(args, exc, EXIT_INVARIANT)
        return EXIT_INVARIANT
    except (ValueError, GraphInputError) as exc:
        _error_record(args, exc, EXIT_CONFIG)
        return EXIT_CONFIG


def _error_record(args, exc, code):
    record = {"error": str(exc), "exit_code": code, "command": getattr(args, "command", None)}
    print(json.dumps(record), file=sys.stderr)
    try:
        out = Path(getattr(args, "out", "out"))
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "error.json", record)
    except OSError:
        pass


if __name__ == "__main__":
    sys.exit(main())
