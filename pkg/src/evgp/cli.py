"""Command-line interface: ``evgp {analyze,moments,verify,sweep,advise}``.

Exit codes: 0 success, 1 a verified property failed, 2 configuration
error, 3 a resource guard refused the computation.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import random
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .analyzer import (
    FamilyKind,
    WidthFamily,
    advise,
    analyze,
    annealed_bounds_fourth,
    beta,
    log_annealed_bounds_fourth,
    quenched_bounds,
)
from .distributions import BiasKind, BiasLaw, DistributionSpec, WeightKind, spec_from_json
from .exact import (
    DEFAULT_GUARD,
    ExactValue,
    NonRationalLaw,
    dp_fourth_moment,
    exact_second_moment,
    expected_empirical_variance_exact,
    mixed_fourth_general,
    mixed_fourth_same_output,
    oracle_cost,
    oracle_mixed_moment,
    oracle_moment,
)
from .mc import DegenerateInput, estimate_empirical_variance, estimate_moments
from .net import (
    Architecture,
    GuardExceeded,
    ZeroPreactivation,
    instantiate,
    jacobian_backprop,
    jacobian_pathsum,
)
from .rng import fresh_seed

EXIT_OK, EXIT_PROPERTY, EXIT_CONFIG, EXIT_GUARD = 0, 1, 2, 3


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


# --------------------------------------------------------------------------
# config resolution


def _arch(args) -> Architecture:
    if args.arch:
        try:
            return Architecture.from_json(json.loads(Path(args.arch).read_text()))
        except (OSError, KeyError, ValueError, TypeError) as exc:
            raise ConfigError("--arch", str(exc)) from exc
    if not args.widths:
        raise ConfigError("--widths", "give --widths or --arch")
    try:
        return Architecture.parse(args.widths)
    except ValueError as exc:
        raise ConfigError("--widths", str(exc)) from exc


def _spec(args, arch: Architecture) -> DistributionSpec:
    try:
        if args.spec:
            return spec_from_json(json.loads(Path(args.spec).read_text()), arch, args.allow_zero_bias)
        bias = (
            BiasLaw(BiasKind.ZERO, 0.0, allow_atoms=args.allow_zero_bias)
            if args.bias == "zero"
            else BiasLaw(args.bias, args.bias_scale)
        )
        return DistributionSpec.homogeneous(arch, args.weights, bias)
    except (OSError, KeyError, ValueError, TypeError) as exc:
        field = "--spec" if args.spec else ("--allow-zero-bias" if args.bias == "zero" else "--bias")
        raise ConfigError(field, str(exc)) from exc


def _seed(args) -> int:
    if args.seed is None:
        args.seed = fresh_seed()
        print(f"evgp: no --seed given; using seed {args.seed}", file=sys.stderr)
    return args.seed


def _workers(args) -> int:
    w = args.workers if args.workers is not None else (os.cpu_count() or 1)
    if w < 1:
        raise ConfigError("--workers", "must be >= 1")
    return w


def _input(args, arch):
    if not args.input:
        return np.ones(arch.n_in)
    try:
        x = np.array([float(t) for t in args.input.split(",")])
    except ValueError as exc:
        raise ConfigError("--input", str(exc)) from exc
    if x.shape != (arch.n_in,):
        raise ConfigError("--input", f"needs {arch.n_in} comma-separated values")
    return x


def _common_config(args, arch, spec) -> dict:
    cfg = {"widths": list(arch.widths), "spec": spec.to_json()}
    return cfg


# --------------------------------------------------------------------------
# output


def _envelope(command: str, config: dict, result) -> dict:
    return {"tool": "evgp", "version": __version__, "command": command, "config": config, "result": result}


def _json_default(obj):
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _clean(obj):
    """Replace non-finite floats, which JSON cannot carry, by strings."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _emit_json(args, doc: dict) -> None:
    text = json.dumps(_clean(doc), indent=2, ensure_ascii=False, default=_json_default) + "\n"
    _write(args, text)


def _write(args, text: str) -> None:
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _emit_csv(args, command: str, config: dict, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    w.writerows(rows)
    _write(args, buf.getvalue())
    if args.output:
        meta = _envelope(command, config, {"columns": list(header), "rows": len(rows)})
        Path(str(args.output) + ".meta.json").write_text(
            json.dumps(_clean(meta), indent=2, ensure_ascii=False, default=_json_default) + "\n",
            encoding="utf-8",
        )


def _fmt(x) -> str:
    if isinstance(x, ExactValue):
        return x.decimal()
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


# --------------------------------------------------------------------------
# commands


def cmd_analyze(args) -> int:
    arch = _arch(args)
    spec = _spec(args, arch)
    report = analyze(arch, spec)
    config = _common_config(args, arch, spec)
    if args.format == "text":
        _write(args, report.to_text())
    elif args.format == "csv":
        doc = report.to_json()
        rows = [
            ("beta", doc["beta"]),
            ("second_moment", doc["second_moment"]),
            ("fourth_lower", doc["fourth_moment"]["lower"]),
            ("fourth_exact", doc["fourth_moment"]["exact"]),
            ("fourth_upper", doc["fourth_moment"]["upper"]),
            ("eta", doc["quenched"]["eta"]),
            ("quenched_lower_statement", doc["quenched"]["lower_statement"]),
            ("quenched_lower_proof", doc["quenched"]["lower_proof"]),
            ("quenched_exact", doc["quenched"]["exact"]),
            ("quenched_upper", doc["quenched"]["upper"]),
        ] + [(f"chi1_layer{j}", c) for j, c in enumerate(doc["chi1"], start=1)]
        _emit_csv(args, "analyze", config, ("quantity", "value"), [(k, _fmt(v)) for k, v in rows])
    else:
        _emit_json(args, _envelope("analyze", config, report.to_json()))
    return EXIT_OK


def _exact_moment(arch, spec, p, q, K, guard) -> ExactValue:
    if K == 1:
        return ExactValue.from_rational(exact_second_moment(arch), "closed_form")
    if K == 2:
        return dp_fourth_moment(arch, spec, p, q)
    # no closed reduction beyond the fourth moment: fall back to the oracle
    return oracle_moment(arch, spec, p, q, K, guard=guard)


def _exact_record(method: str, v: ExactValue) -> dict:
    rec = v.to_json()
    rec["engine"] = rec.pop("method")
    return {"method": method, **rec}


def cmd_moments(args) -> int:
    arch = _arch(args)
    spec = _spec(args, arch)
    if args.k < 1:
        raise ConfigError("--k", "must be >= 1")
    if not 1 <= args.p <= arch.n_in:
        raise ConfigError("--p", f"must be in 1..{arch.n_in}")
    if not 1 <= args.q <= arch.n_out:
        raise ConfigError("--q", f"must be in 1..{arch.n_out}")
    methods = ["exact", "oracle", "mc"] if args.method == "all" else [args.method]
    config = _common_config(args, arch, spec)
    config.update(method=args.method, k=args.k, p=args.p, q=args.q, guard=args.guard)
    if "mc" in methods:
        if args.samples < 2:
            raise ConfigError("--samples", "must be >= 2")
        config.update(samples=args.samples, seed=_seed(args), input=list(_input(args, arch)))
    if "oracle" in methods or (args.k >= 3 and "exact" in methods):
        if not spec.exact:
            raise ConfigError("--spec", "oracle needs exact rational moments")
        cost = oracle_cost(arch, 2 * args.k)
        if cost > args.guard:
            raise GuardExceeded("path-collection oracle", cost, args.guard)

    records = []
    for m in methods:
        if m == "exact":
            v = _exact_moment(arch, spec, args.p, args.q, args.k, args.guard)
            records.append(_exact_record(m, v))
        elif m == "oracle":
            v = oracle_moment(arch, spec, args.p, args.q, args.k, guard=args.guard)
            records.append(_exact_record(m, v))
        else:
            r = estimate_moments(
                arch, spec, _input(args, arch), (args.k,), args.samples, args.seed,
                _workers(args), dump=args.dump,
            )[0]
            rec = r.to_json()
            rec.update(method="mc", engine="monte_carlo", value=repr(r.estimate), exact=False)
            records.append(rec)

    if args.format == "json":
        _emit_json(args, _envelope("moments", config, records))
    else:
        header = ("method", "engine", "value", "std_error", "exact", "rational")
        rows = [
            (r["method"], r["engine"], r["value"], _fmt(r.get("std_error")), str(r["exact"]).lower(), r.get("rational") or "")
            for r in records
        ]
        if args.format == "csv":
            _emit_csv(args, "moments", config, header, rows)
        else:
            target = f"E[Z_{{{args.p},{args.q}}}^{2 * args.k}]"
            lines = [f"{target} on widths {','.join(map(str, arch.widths))}"]
            for method, engine, value, se, _, rational in rows:
                extra = f"  [{engine}]"
                extra += f"  (rational {rational})" if rational else ""
                extra += f"  +/- {se} (1 SE; 3 SE = {3 * float(se):.6g})" if se else ""
                lines.append(f"  {method:<7} {value}{extra}")
            _write(args, "\n".join(lines) + "\n")
    return EXIT_OK


def _rel_close(a: float, b: float, tol: float) -> bool:
    return abs(a - b) <= tol * max(abs(a), abs(b), 1e-300)


def _verify_trial(rnd: random.Random, args, trial: int, seed: int, workers: int):
    d = rnd.randint(1, args.max_depth)
    widths = tuple(rnd.randint(1, args.max_width) for _ in range(d + 1))
    kind = rnd.choice([k.value for k in WeightKind])
    arch = Architecture(widths)
    spec = DistributionSpec.homogeneous(arch, kind)
    checks, failures = [], []
    ctx = {"trial": trial, "widths": list(widths), "weights": kind}

    def record(name, ok, **detail):
        checks.append((name, ok))
        if not ok:
            failures.append({**ctx, "check": name, **_clean(detail)})

    oracle4 = oracle_moment(arch, spec, 1, 1, 2).rational
    dp4 = dp_fourth_moment(arch, spec, _perturb=args.fault).value
    record("oracle_vs_dp_fourth", _rel_close(float(oracle4), dp4, 1e-12), oracle=str(oracle4), dp=dp4)

    cases = []
    if arch.n_in >= 2:
        cases.append((1, 1, 2, 1))
    if arch.n_out >= 2:
        cases.append((1, 1, 1, 2))
    if arch.n_in >= 2 and arch.n_out >= 2:
        cases.append((1, 1, 2, 2))
    cases.append((1, 1, 1, 1))
    for p1, q1, p2, q2 in cases:
        o = oracle_mixed_moment(arch, spec, [(p1, q1, 1), (p2, q2, 1)]).rational
        g = mixed_fourth_general(arch, spec, p1, q1, p2, q2).value
        record("oracle_vs_dp_mixed", _rel_close(float(o), g, 1e-12), endpoints=[p1, q1, p2, q2], oracle=str(o), dp=g)
    if arch.n_in >= 2:
        o = oracle_mixed_moment(arch, spec, [(1, 1, 1), (2, 1, 1)]).rational
        s = mixed_fourth_same_output(arch, spec, 1, 2, 1).value
        record("oracle_vs_same_output_reduction", _rel_close(float(o), s, 1e-10), oracle=str(o), reduction=s)

    lo, hi = annealed_bounds_fourth(arch, spec)
    record("fourth_moment_sandwich", lo * (1 - 1e-12) <= dp4 <= hi * (1 + 1e-12), lower=lo, exact=dp4, upper=hi)
    if arch.n_in * arch.n_out >= 2:
        ls, lp, up = quenched_bounds(arch, spec)
        ev = expected_empirical_variance_exact(arch, spec).value
        record("quenched_bracket", min(ls, lp) * (1 - 1e-9) - 1e-15 <= ev <= up * (1 + 1e-12), lower=min(ls, lp), exact=ev, upper=up)

    net = instantiate(arch, spec, seed, trial)
    try:
        jb = jacobian_backprop(net)
        jp = jacobian_pathsum(net)
        err = float(np.max(np.abs(jb - jp)))
        record("backprop_vs_pathsum", err <= 1e-12 * max(1.0, float(np.max(np.abs(jb)))), max_abs_error=err)
    except ZeroPreactivation:
        pass

    mc = None
    if args.samples:
        r = estimate_moments(arch, spec, None, (2,), args.samples, seed + trial, workers)[0]
        mc = r.covers(float(oracle4), 3.0)
        if not mc:
            failures.append({**ctx, "check": "mc_coverage (counted)", "exact": str(oracle4), **r.to_json()})
    return checks, failures, mc


def cmd_verify(args) -> int:
    if args.trials < 1:
        raise ConfigError("--trials", "must be >= 1")
    if args.max_width < 1 or args.max_depth < 1:
        raise ConfigError("--max-width/--max-depth", "must be >= 1")
    if args.samples < 0 or args.samples == 1:
        raise ConfigError("--samples", "must be 0 (skip Monte Carlo) or >= 2")
    worst = oracle_cost(Architecture((1,) + (args.max_width,) * (args.max_depth - 1) + (1,)), 4)
    if worst > DEFAULT_GUARD:
        raise GuardExceeded("verify oracle (largest architecture)", worst, DEFAULT_GUARD)
    seed = _seed(args)
    workers = _workers(args)
    rnd = random.Random(seed)
    passed, failed = {}, []
    covered = attempted = 0
    mc_failures = []
    for t in range(args.trials):
        checks, failures, mc = _verify_trial(rnd, args, t, seed, workers)
        for name, ok in checks:
            passed.setdefault(name, [0, 0])
            passed[name][0 if ok else 1] += 1
        for f in failures:
            (mc_failures if f["check"].startswith("mc_coverage") else failed).append(f)
        if mc is not None:
            attempted += 1
            covered += mc
    coverage_ok = attempted == 0 or covered >= math.ceil(0.9 * attempted)
    if not coverage_ok:
        failed.extend(mc_failures)
    summary = {
        "checks": {k: {"passed": v[0], "failed": v[1]} for k, v in sorted(passed.items())},
        "mc_coverage": {"covered_within_3se": covered, "trials": attempted, "required_fraction": 0.9, "ok": coverage_ok},
        "failures": failed,
        "ok": not failed,
    }
    config = {
        "max_width": args.max_width, "max_depth": args.max_depth, "trials": args.trials,
        "samples": args.samples, "seed": seed, "fault": args.fault,
    }
    doc = _envelope("verify", config, summary)
    if args.format == "text":
        lines = [f"{name}: {v['passed']} passed, {v['failed']} failed" for name, v in summary["checks"].items()]
        lines.append(f"mc coverage: {covered}/{attempted} within 3 SE")
        lines += [f"FAIL {json.dumps(_clean(f), default=_json_default)}" for f in failed]
        lines.append("OK" if summary["ok"] else "FAILED")
        _write(args, "\n".join(lines) + "\n")
    else:
        _emit_json(args, doc)
    if failed and args.artifact:
        Path(args.artifact).write_text(
            json.dumps(_clean({"counterexamples": failed, "config": config}), indent=2, default=_json_default) + "\n"
        )
    return EXIT_OK if summary["ok"] else EXIT_PROPERTY


def _parse_range(text: str, field: str):
    try:
        if ":" in text:
            lo, hi = (int(t) for t in text.split(":"))
            values = list(range(lo, hi + 1))
        else:
            values = [int(t) for t in text.split(",")]
    except ValueError as exc:
        raise ConfigError(field, f"cannot parse {text!r}") from exc
    if not values or min(values) < 1:
        raise ConfigError(field, "must be a nonempty range of positive integers")
    return values


def _families(args):
    if args.family == "constant":
        widths = _parse_range(args.width, "--width")
        return [WidthFamily(FamilyKind.CONSTANT, n=n) for n in widths]
    try:
        if args.family == "polynomial":
            return [WidthFamily(FamilyKind.POLYNOMIAL, c=args.coef, p=args.power)]
        return [WidthFamily(FamilyKind.GEOMETRIC, c=args.coef, r=args.ratio)]
    except ValueError as exc:
        raise ConfigError("--family", str(exc)) from exc


def cmd_sweep(args) -> int:
    depths = _parse_range(args.depths, "--depths")
    families = _families(args)
    if args.mc_samples < 0 or args.mc_samples == 1:
        raise ConfigError("--mc-samples", "must be 0 or >= 2")
    if args.n0 < 1 or args.nd < 1:
        raise ConfigError("--n0/--nd", "must be >= 1")
    if args.quantity == "empvar" and args.n0 * args.nd < 2:
        raise ConfigError("--quantity", "empirical variance needs n0*nd >= 2")
    config = {
        "family": args.family, "families": [f.to_json() for f in families], "depths": depths,
        "n0": args.n0, "nd": args.nd, "weights": args.weights, "bias": args.bias,
        "bias_scale": args.bias_scale, "quantity": args.quantity, "mc_samples": args.mc_samples,
    }
    if args.mc_samples:
        config["seed"] = _seed(args)
    exact_col = "exact_fourth" if args.quantity == "fourth" else "exact_empirical_variance"
    header = ["d", "widths", "beta", exact_col, "log_normalized_exact", "lower_bound", "upper_bound"]
    if args.mc_samples:
        header += ["mc_estimate", "mc_se"]
    rows = []
    for fam in families:
        for d in depths:
            widths = (args.n0, *fam.hidden(d - 1), args.nd)
            arch = Architecture(widths)
            ns = argparse.Namespace(**{**vars(args), "spec": None})
            spec = _spec(ns, arch)
            if args.quantity == "fourth":
                exact = dp_fourth_moment(arch, spec)
                llo, lhi = log_annealed_bounds_fourth(arch, spec)
                lo, hi = annealed_bounds_fourth(arch, spec)
                if not math.isfinite(hi):
                    lo, hi = ExactValue(llo, "bound"), ExactValue(lhi, "bound")
            else:
                exact = expected_empirical_variance_exact(arch, spec)
                ls, lp, hi = quenched_bounds(arch, spec)
                lo = ls
            log_norm = exact.log_value + 2 * math.log(arch.n_in)
            row = [d, ";".join(map(str, widths)), beta(arch), exact.decimal(), log_norm, lo, hi]
            if args.mc_samples:
                est = (
                    estimate_moments(arch, spec, None, (2,), args.mc_samples, args.seed + d, _workers(args))[0]
                    if args.quantity == "fourth"
                    else estimate_empirical_variance(arch, spec, None, args.mc_samples, args.seed + d, _workers(args))
                )
                row += [est.estimate, est.std_error]
            rows.append(row)
    if args.format == "json":
        records = [{k: (v.decimal() if isinstance(v, ExactValue) else v) for k, v in zip(header, r)} for r in rows]
        _emit_json(args, _envelope("sweep", config, records))
    else:
        _emit_csv(args, "sweep", config, header, [[_fmt(v) for v in r] for r in rows])
    return EXIT_OK


def cmd_advise(args) -> int:
    alternatives = []
    if args.compare:
        try:
            alternatives = [tuple(int(t) for t in chunk.split(",")) for chunk in args.compare.split(";")]
        except ValueError as exc:
            raise ConfigError("--compare", str(exc)) from exc
        if any(len(a) != args.depth - 1 or min(a) < 1 for a in alternatives):
            raise ConfigError("--compare", f"each layout needs {args.depth - 1} positive widths")
    try:
        adv = advise(args.budget_kind, args.budget, args.depth, args.n_in, args.n_out, alternatives)
    except ValueError as exc:
        raise ConfigError("--budget", str(exc)) from exc
    config = {
        "budget_kind": args.budget_kind, "budget": args.budget, "depth": args.depth,
        "n_in": args.n_in, "n_out": args.n_out, "compare": [list(a) for a in alternatives],
    }
    if args.format == "text":
        lines = [f"hidden widths: {','.join(map(str, adv.hidden))}  (beta {adv.beta:.6g}, uses {adv.used} of {adv.budget})"]
        lines += [f"  alternative {','.join(map(str, h))}: beta {b:.6g}" for h, b in adv.alternatives]
        _write(args, "\n".join(lines) + "\n")
    elif args.format == "csv":
        rows = [("proposal", ";".join(map(str, adv.hidden)), repr(adv.beta))]
        rows += [("alternative", ";".join(map(str, h)), repr(b)) for h, b in adv.alternatives]
        _emit_csv(args, "advise", config, ("role", "hidden", "beta"), rows)
    else:
        _emit_json(args, _envelope("advise", config, adv.to_json()))
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _add_arch(p):
    p.add_argument("--widths", help="comma-separated widths n0,...,nd")
    p.add_argument("--arch", help='architecture JSON file {"widths": [...]}')
    _add_laws(p)
    p.add_argument("--spec", help="distribution spec JSON file (overrides --weights/--bias)")


def _add_laws(p):
    p.add_argument("--weights", default="gaussian", choices=[k.value for k in WeightKind])
    p.add_argument("--bias", default="gaussian", choices=[k.value for k in BiasKind])
    p.add_argument("--bias-scale", type=float, default=0.1)
    p.add_argument("--allow-zero-bias", action="store_true", help="accept the non-conforming zero bias")


def _add_output(p, formats=("json", "text", "csv"), default="json"):
    p.add_argument("--format", choices=formats, default=default)
    p.add_argument("--output", "-o", help="write to this file instead of stdout")


def _add_run(p):
    p.add_argument("--seed", type=int, help="root seed (a random one is logged if omitted)")
    p.add_argument("--workers", type=int, help="parallel workers (default: available cores)")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evgp", description="Gradient statistics of random ReLU networks.")
    parser.add_argument("--version", action="version", version=f"evgp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="beta, bounds, chi1 and exact moments for one architecture")
    _add_arch(p)
    _add_output(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("moments", help="E[Z^2K] by exact DP, path oracle or Monte Carlo")
    _add_arch(p)
    p.add_argument("--method", choices=["exact", "oracle", "mc", "all"], default="exact")
    p.add_argument("--k", type=int, default=2, help="moment order is 2K")
    p.add_argument("--p", type=int, default=1, help="input neuron (1-based)")
    p.add_argument("--q", type=int, default=1, help="output neuron (1-based)")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--input", help="comma-separated evaluation input (default all ones)")
    p.add_argument("--guard", type=int, default=DEFAULT_GUARD, help="max path collections for the oracle")
    p.add_argument("--dump", help="CSV file receiving one row per Monte Carlo sample")
    _add_run(p)
    _add_output(p, default="text")
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("verify", help="randomized oracle / DP / Monte Carlo equivalence suite")
    p.add_argument("--max-width", type=int, default=4)
    p.add_argument("--max-depth", type=int, default=4)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--samples", type=int, default=20_000, help="Monte Carlo samples per trial (0 skips)")
    p.add_argument("--artifact", help="write counterexamples here on failure")
    p.add_argument("--inject-fault", dest="fault", type=float, default=0.0, help=argparse.SUPPRESS)
    _add_run(p)
    _add_output(p, formats=("json", "text"))
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="CSV of exact moments and bounds across depths")
    p.add_argument("--family", choices=["constant", "polynomial", "geometric"], default="constant")
    p.add_argument("--width", default="4", help="constant width(s): N, A,B,C or LO:HI")
    p.add_argument("--coef", type=float, default=1.0)
    p.add_argument("--power", type=float, default=1.0)
    p.add_argument("--ratio", type=float, default=2.0)
    p.add_argument("--depths", default="2:20", help="LO:HI inclusive, or a comma list")
    p.add_argument("--n0", type=int, default=1)
    p.add_argument("--nd", type=int, default=1)
    p.add_argument("--quantity", choices=["fourth", "empvar"], default="fourth")
    p.add_argument("--mc-samples", type=int, default=0)
    _add_laws(p)
    _add_run(p)
    _add_output(p, formats=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("advise", help="beta-minimal hidden layout for a budget")
    p.add_argument("--budget-kind", choices=["neurons", "parameters"], default="neurons")
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--n-in", type=int, default=1)
    p.add_argument("--n-out", type=int, default=1)
    p.add_argument("--compare", help="semicolon-separated alternative layouts, e.g. 5,3,2;6,2,2")
    _add_output(p, default="text")
    p.set_defaults(func=cmd_advise)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"evgp: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GuardExceeded as exc:
        print(f"evgp: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (DegenerateInput, NonRationalLaw) as exc:
        print(f"evgp: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
