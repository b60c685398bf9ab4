"""Command line entry point: ``lllsample <command> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from collections import Counter
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from . import verification as ver
from .augmentation import augment, augment_weight
from .core import LLLInstance, shells
from .errors import BudgetExceeded, InfeasibleBoundary, InstanceError, InvariantViolation, LLLError
from .io import (
    bundled_path,
    emit_report,
    parse_graph,
    parse_instance,
    report_text,
    samples_text,
    to_jsonable,
)
from .oracle import exact_distribution, satisfiability
from .pipeline import BUILTIN_LV, sample_lll, simulate_las_vegas
from .sampler import MODES, SamplerConfig

SUITES = ("all", "pipeline", "augment", "estimate", "substitute", "gibbs")


class UsageError(Exception):
    pass


def _rational(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _resolve(path: str, suffix: str) -> Path:
    p = Path(path)
    if p.exists():
        return p
    try:
        return bundled_path(path if path.endswith(suffix) or suffix == ".instance" else path + suffix)
    except InstanceError:
        raise InstanceError(f"no such file: {path}") from None


def _instance(args) -> LLLInstance:
    return parse_instance(_resolve(args.instance, ".instance"))


def _config(args) -> SamplerConfig:
    return SamplerConfig(c0=args.c0, mode=args.mode)


def _add_common(p: argparse.ArgumentParser, *, sampler: bool = True) -> None:
    p.add_argument("--threads", type=_positive, default=1, help="worker processes for independent runs")
    if sampler:
        p.add_argument("--mode", choices=MODES, default="estimate")
        p.add_argument("--c0", type=_rational, default=Fraction(1), help="constant in the ring radius")
        p.add_argument("--runtime", choices=("sequential", "local"), default="sequential")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lllsample", description="Exact sampling from LLL distributions.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw seeded samples and write a samples file plus report")
    p.add_argument("--instance", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--runs", type=_positive, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="report path (default: OUT.json)")
    _add_common(p)

    p = sub.add_parser("exact", help="print the exact distribution")
    p.add_argument("--instance", required=True)

    p = sub.add_parser("verify", help="run verification suites")
    p.add_argument("--instance", required=True)
    p.add_argument("--runs", type=_positive, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--suite", choices=SUITES, default="all")
    p.add_argument("--report")
    _add_common(p)

    p = sub.add_parser("augment", help="construct and describe an augmenting event")
    p.add_argument("--instance", required=True)
    p.add_argument("--region", required=True, help="comma-separated event ids")
    p.add_argument("--eps", type=_rational, required=True)
    p.add_argument("--gamma", type=_rational, required=True)
    p.add_argument("--delta", type=_rational, required=True)
    p.add_argument("--ell", type=_positive, required=True)
    p.add_argument("--eps0", type=_rational, default=Fraction(1, 8))

    p = sub.add_parser("simulate-lv", help="perfectly simulate a built-in Las Vegas algorithm")
    p.add_argument("--builtin", choices=sorted(BUILTIN_LV), required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--runs", type=_positive, default=1)
    p.add_argument("--report")
    _add_common(p)

    p = sub.add_parser("bench", help="round, radius and potential statistics over seeds")
    p.add_argument("--instance", required=True)
    p.add_argument("--seeds", type=_positive, default=100)
    p.add_argument("--report")
    _add_common(p)
    return ap


def _stats(values: Sequence[int]) -> dict:
    if not values:
        return {"count": 0}
    return {
        "count": len(values),
        "min": min(values),
        "max": max(values),
        "mean": sum(values) / len(values),
        "histogram": dict(sorted(Counter(values).items())),
    }


def _write(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def cmd_sample(args) -> int:
    inst = _instance(args)
    cfg = _config(args)
    seeds = range(args.seed, args.seed + args.runs)
    rows = []
    rounds = []
    pots = []
    for s in seeds:
        Y, trace = sample_lll(inst, s, cfg, runtime=args.runtime)
        rows.append(tuple(Y[x] for x in inst.variables))
        rounds.append(trace.rounds[-1][1] if trace.rounds else 0)
        pots.append(trace.potential)
    Path(args.out).write_text(samples_text(inst.variables, rows), encoding="utf-8")
    counts = Counter(rows)
    report = {
        "command": "sample",
        "instance": str(args.instance),
        "variables": list(inst.variables),
        "seeds": [args.seed, args.seed + args.runs - 1],
        "runs": args.runs,
        "mode": args.mode,
        "runtime": args.runtime,
        "counts": dict(sorted(counts.items())),
        "rounds": _stats(rounds),
        "potential": dict(sorted(Counter(pots).items())),
    }
    try:
        exact = exact_distribution(inst)
    except BudgetExceeded:
        exact = None
    if exact is not None:
        dr = ver.DistributionReport.build(exact, counts, args.runs, args.seed)
        report.update(exact=dict(sorted(exact.items())), tv=dr.tv, chi2=dr.chi2, dof=dr.dof, p_value=dr.p_value)
        print(f"runs={args.runs} tv={dr.tv:.6f} p={dr.p_value:.6g}")
    else:
        print(f"runs={args.runs}")
    emit_report(report, args.report or args.out + ".json")
    return 0


def cmd_exact(args) -> int:
    inst = _instance(args)
    scope = list(inst.variables)
    for t, p in sorted(exact_distribution(inst).items()):
        print(" ".join(f"{x}={a}" for x, a in zip(scope, t)) + f" {p}")
    return 0


def _suite_lines(inst: LLLInstance, args) -> tuple[list[tuple[str, bool, dict]], dict]:
    cfg = _config(args)
    suites = SUITES[1:] if args.suite == "all" else (args.suite,)
    out: list[tuple[str, bool, dict]] = []
    events = list(inst.events)
    if "pipeline" in suites:
        dr = ver.empirical_tv(inst, args.runs, args.seed, entry=ver.PipelineEntry(cfg, args.runtime),
                              threads=args.threads)
        out.append(("pipeline", dr.passed(), {"tv": dr.tv, "p_value": dr.p_value, "runs": dr.runs}))
    gamma = Fraction(1, 2)
    delta = Fraction(1, 8)
    if "augment" in suites:
        for e in events:
            for ell in (1, 2, 3):
                rep = ver.check_augmentation(inst, [e], Fraction(1, 2), gamma, delta, ell, mutations=5)
                out.append((f"augment {e} ell={ell}", rep.ok, {"weight": rep.values["weight"], "failures": rep.failures}))
    if "estimate" in suites:
        z = satisfiability(inst)
        for e in events:
            for k in (1, 2):
                rep = ver.check_estimation(inst, [e], inst.events[e], Fraction(1, 2), k, z / 4, z / 2, c0=args.c0)
                out.append((f"estimate {e} k={k}", rep.ok, {"margin": rep.values["margin"], "failures": rep.failures}))
    if "substitute" in suites:
        for e in events:
            reg = frozenset([e])
            T = set(inst.variables) - shells(inst, reg).within(1)
            if len(T) > 6:
                continue
            s_vars = inst.ordered(inst.vbl(reg))
            for t in inst.assignments(s_vars):
                sigma = dict(zip(s_vars, t))
                try:
                    rep = ver.check_substitution(inst, reg, sigma, Fraction(1, 2), gamma, delta, 1)
                except InfeasibleBoundary:
                    continue
                out.append((f"substitute {e} sigma={''.join(map(str, t))}", rep.ok, {"failures": rep.failures}))
    if "gibbs" in suites:
        for phase in ("initialization", "clustering"):
            rep = ver.check_conditional_gibbs(inst, min(args.runs, 5000), phase=phase, base_seed=args.seed, config=cfg)
            out.append((f"gibbs {phase}", rep.ok, {k: v for k, v in rep.values.items() if k in ("tv", "p_value", "mass", "vacuous")}))
    return out, {"suites": list(suites)}


def cmd_verify(args) -> int:
    inst = _instance(args)
    lines, meta = _suite_lines(inst, args)
    ok = True
    for name, passed, _ in lines:
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {name}")
    report = {
        "command": "verify",
        "instance": str(args.instance),
        "seed": args.seed,
        "runs": args.runs,
        **meta,
        "checks": [{"name": n, "passed": p, **v} for n, p, v in lines],
    }
    if args.report:
        emit_report(report, args.report)
    return 0 if ok else 1


def cmd_augment(args) -> int:
    inst = _instance(args)
    region = [r for r in args.region.split(",") if r]
    aug = augment(inst, region, args.eps, args.gamma, args.delta, args.ell, args.eps0)
    doc = {
        "region": sorted(region),
        "ell": aug.ell,
        "gap": aug.gap,
        "rings": [list(r) for r in aug.rings],
        "forbidden": [sorted(",".join(map(str, t)) for t in f) for f in aug.forbidden],
        "always": aug.always,
        "never": aug.never,
        "contained": list(aug.contained),
        "weight": augment_weight(inst, aug),
        "delta": args.delta,
    }
    sys.stdout.write(json.dumps(to_jsonable(doc), sort_keys=True, indent=2) + "\n")
    return 0


def cmd_simulate_lv(args) -> int:
    net = parse_graph(_resolve(args.graph, ".graph"))
    cfg = _config(args)
    alg = BUILTIN_LV[args.builtin]
    rows = []
    for s in range(args.seed, args.seed + args.runs):
        out, _ = simulate_las_vegas(alg, net, s, cfg, runtime=args.runtime)
        rows.append(tuple(out[v] for v in net.nodes))
    for row in rows:
        print(" ".join(map(str, row)))
    if args.report:
        ref = ver.lv_reference_distribution(alg, net)
        dr = ver.DistributionReport.build(ref, Counter(rows), args.runs, args.seed)
        emit_report(
            {
                "command": "simulate-lv",
                "builtin": args.builtin,
                "nodes": list(net.nodes),
                "seeds": [args.seed, args.seed + args.runs - 1],
                "runs": args.runs,
                "counts": dict(sorted(Counter(rows).items())),
                "exact": dict(sorted(ref.items())),
                "tv": dr.tv,
                "chi2": dr.chi2,
                "dof": dr.dof,
                "p_value": dr.p_value,
            },
            args.report,
        )
    return 0


def cmd_bench(args) -> int:
    inst = _instance(args)
    cfg = _config(args)
    rounds, pots, radii, balls = [], [], [], []
    for s in range(args.seeds):
        _, trace = sample_lll(inst, s, cfg, runtime=args.runtime)
        rounds.append(trace.rounds[-1][1] if trace.rounds else 0)
        pots.append(trace.potential)
        balls.append(len(trace.balls))
        radii.extend(r for _, _, r in trace.balls)
    report = {
        "command": "bench",
        "instance": str(args.instance),
        "seeds": args.seeds,
        "runtime": args.runtime,
        "rounds": _stats(rounds),
        "potential": _stats(pots),
        "ball_radius": _stats(radii),
        "balls": _stats(balls),
    }
    _write(report_text(report), args.report)
    return 0


COMMANDS = {
    "sample": cmd_sample,
    "exact": cmd_exact,
    "verify": cmd_verify,
    "augment": cmd_augment,
    "simulate-lv": cmd_simulate_lv,
    "bench": cmd_bench,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except InvariantViolation as exc:
        print(f"assertion failed: {exc}", file=sys.stderr)
        return 1
    except (LLLError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
