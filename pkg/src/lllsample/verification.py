"""Ground-truth harness: exact tables, statistical comparators and construction-level checkers."""

from __future__ import annotations

import math
import random
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Any, Callable, Iterable, Mapping, Sequence

from scipy.special import gammaincc

from .augmentation import (
    DEFAULT_C0,
    DEFAULT_EPS0,
    augment,
    augment_weight,
    ell0,
    estimate_interval,
    substitute,
)
from .core import (
    BadEvent,
    LLLInstance,
    Variable,
    as_fraction,
    ball,
    extend_instance,
    shells,
    sub_instance,
)
from .errors import InfeasibleBoundary, InvariantViolation
from .oracle import (
    avoid_probability,
    exact_distribution,
    is_eps_correlated,
    marginal,
    omega_weight,
    satisfiability,
    sample_marginal,
)
from .pipeline import (
    BUILTIN_LV,
    ClusteringPhase,
    _owners,
    check_ball_geometry,
    committed_balls,
    initialization_phase,
    lv_reference_distribution,
    phase_parameters,
    run_phase,
    sample_lll,
    simulate_las_vegas,
    _instance_gamma,
)
from .runtime import Network
from .sampler import SamplerConfig, bernoulli, filter_probability

P_THRESHOLD = 1e-3
TV_THRESHOLD = 0.01


# statistics -------------------------------------------------------------------------


def total_variation(exact: Mapping[Any, Fraction], counts: Mapping[Any, int], runs: int) -> Fraction:
    """Exact TV between a probability table and the empirical law of ``counts``."""
    if runs <= 0:
        return Fraction(0) if not counts else Fraction(1)
    keys = set(exact) | set(counts)
    return sum(
        (abs(Fraction(counts.get(k, 0), runs) - exact.get(k, Fraction(0))) for k in keys),
        Fraction(0),
    ) / 2


def chi_square_pvalue(statistic: float, dof: int) -> float:
    """Upper tail of the chi-square law (regularized upper incomplete gamma)."""
    if dof <= 0:
        return 1.0 if statistic <= 0 else 0.0
    if math.isinf(statistic):
        return 0.0
    return float(gammaincc(dof / 2, statistic / 2))


def chi_square(exact: Mapping[Any, Fraction], counts: Mapping[Any, int], runs: int) -> tuple[float, int, float]:
    """Pearson statistic over the support, degrees of freedom and p-value.

    Observations outside the support make the statistic infinite.
    """
    if runs <= 0:
        return 0.0, max(0, len(exact) - 1), 1.0
    if any(c and exact.get(k, 0) == 0 for k, c in counts.items()):
        return math.inf, max(0, len(exact) - 1), 0.0
    stat = 0.0
    for k, p in exact.items():
        if p == 0:
            continue
        e = float(p) * runs
        d = counts.get(k, 0) - e
        stat += d * d / e
    dof = sum(1 for p in exact.values() if p > 0) - 1
    return stat, dof, chi_square_pvalue(stat, dof)


@dataclass
class DistributionReport:
    exact: dict[tuple, Fraction]
    counts: dict[tuple, int]
    runs: int
    base_seed: int
    tv: float
    tv_exact: Fraction
    chi2: float
    dof: int
    p_value: float
    potentials: dict[int, int] = field(default_factory=dict)
    rounds: dict[int, int] = field(default_factory=dict)

    @property
    def seeds(self) -> range:
        return range(self.base_seed, self.base_seed + self.runs)

    def passed(self, tv: float = TV_THRESHOLD, p: float = P_THRESHOLD) -> bool:
        return self.tv <= tv and self.p_value >= p

    @classmethod
    def build(cls, exact, counts, runs, base_seed, potentials=None, rounds=None) -> "DistributionReport":
        if sum(counts.values()) != runs:
            raise InvariantViolation("counts do not sum to the run count")
        tv = total_variation(exact, counts, runs)
        stat, dof, p = chi_square(exact, counts, runs)
        return cls(dict(exact), dict(counts), runs, base_seed, float(tv), tv, stat, dof, p,
                   dict(potentials or {}), dict(rounds or {}))


# seeded run harness ----------------------------------------------------------------


@dataclass(frozen=True)
class PipelineEntry:
    """Picklable sampler entry: seed -> (outcome tuple, potential, total rounds)."""

    config: SamplerConfig = SamplerConfig()
    runtime: str = "sequential"

    def __call__(self, inst: LLLInstance, seed: int) -> tuple[tuple, int, int]:
        Y, trace = sample_lll(inst, seed, self.config, runtime=self.runtime)
        rounds = trace.rounds[-1][1] if trace.rounds else 0
        return tuple(Y[x] for x in inst.variables), trace.potential, rounds


@dataclass(frozen=True)
class LasVegasEntry:
    name: str
    config: SamplerConfig = SamplerConfig()

    def __call__(self, net: Network, seed: int) -> tuple[tuple, int, int]:
        out, trace = simulate_las_vegas(BUILTIN_LV[self.name], net, seed, self.config)
        rounds = trace.rounds[-1][1] if trace.rounds else 0
        return tuple(out[v] for v in net.nodes), trace.potential, rounds


def _chunk(entry, target, seeds: range):
    counts: Counter = Counter()
    pots: Counter = Counter()
    rounds: Counter = Counter()
    for s in seeds:
        out, pot, r = entry(target, s)
        counts[out] += 1
        pots[pot] += 1
        rounds[r] += 1
    return counts, pots, rounds


def run_counts(entry: Callable, target: Any, runs: int, base_seed: int = 0, threads: int = 1):
    """Outcome, potential and round histograms of seeds base_seed .. base_seed+runs-1.

    The result does not depend on ``threads``: each seed is an independent run
    and aggregation is a sum.
    """
    if runs < 0:
        raise ValueError("runs must be nonnegative")
    seeds = range(base_seed, base_seed + runs)
    if threads <= 1 or runs < 2 * threads:
        return _chunk(entry, target, seeds)
    size = math.ceil(runs / threads)
    parts = [seeds[i : i + size] for i in range(0, runs, size)]
    counts: Counter = Counter()
    pots: Counter = Counter()
    rounds: Counter = Counter()
    with ProcessPoolExecutor(max_workers=threads) as pool:
        for c, p, r in pool.map(_chunk, [entry] * len(parts), [target] * len(parts), parts):
            counts.update(c)
            pots.update(p)
            rounds.update(r)
    return counts, pots, rounds


def empirical_tv(
    inst: LLLInstance,
    runs: int,
    base_seed: int = 0,
    *,
    entry: Callable | None = None,
    threads: int = 1,
) -> DistributionReport:
    """Compare ``runs`` seeded pipeline samples with the exact μ_I."""
    entry = entry or PipelineEntry()
    counts, pots, rounds = run_counts(entry, inst, runs, base_seed, threads)
    return DistributionReport.build(exact_distribution(inst), counts, runs, base_seed, pots, rounds)


def lv_empirical_tv(
    name: str, net: Network, runs: int, base_seed: int = 0, *, config: SamplerConfig | None = None,
    threads: int = 1,
) -> DistributionReport:
    entry = LasVegasEntry(name, config or SamplerConfig())
    counts, pots, rounds = run_counts(entry, net, runs, base_seed, threads)
    exact = lv_reference_distribution(BUILTIN_LV[name], net)
    return DistributionReport.build(exact, counts, runs, base_seed, pots, rounds)


# construction-level checkers --------------------------------------------------------------


@dataclass
class CheckReport:
    """Outcome of one construction-level check; ``failures`` name the instance, parameters and item."""

    name: str
    values: dict[str, Any] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def require(self) -> "CheckReport":
        if self.failures:
            raise InvariantViolation(f"{self.name}: " + "; ".join(self.failures))
        return self


def mutate_outside(inst: LLLInstance, keep_events: Iterable[str], keep_vars: Iterable[str], rng: random.Random) -> LLLInstance:
    """Copy of ``inst`` with random forbidden sets and weights away from the kept part.

    Scopes are unchanged, so the dependency graph is the same.
    """
    keep_e, keep_v = set(keep_events), set(keep_vars)
    variables = []
    for x, var in inst.variables.items():
        if x in keep_v:
            variables.append(var)
            continue
        raw = [rng.randint(1, 9) for _ in range(var.size)]
        total = sum(raw)
        variables.append(Variable(x, [Fraction(r, total) for r in raw], var.synthetic, var.origin))
    events = []
    for e, ev in inst.events.items():
        if e in keep_e:
            events.append(ev)
            continue
        space = list(inst.assignments(ev.vbl))
        forb = [t for t in space if rng.random() < 0.3]
        if len(forb) == len(space):
            forb.pop()
        events.append(BadEvent(e, ev.vbl, forb, ev.synthetic, ev.origin))
    return LLLInstance(variables, events, network=inst.network)


def check_augmentation(
    inst: LLLInstance,
    region: Iterable[str],
    eps: Any,
    gamma: Any,
    delta: Any,
    ell: int,
    eps0: Any = DEFAULT_EPS0,
    *,
    mutations: int = 20,
    seed: int = 0,
    c0: Any = DEFAULT_C0,
) -> CheckReport:
    """Rarity ν(A_λ) ≤ δ, locality under outside mutations, and the correlation guarantee."""
    reg = frozenset(region)
    eps, gamma, delta = (as_fraction(v) for v in (eps, gamma, delta))
    rep = CheckReport("augmentation", {"region": sorted(reg), "eps": eps, "gamma": gamma,
                                        "delta": delta, "ell": ell, "eps0": as_fraction(eps0)})
    aug = augment(inst, reg, eps, gamma, delta, ell, eps0)
    w = augment_weight(inst, aug)
    rep.values["weight"] = w
    if w > delta:
        rep.failures.append(f"rarity: ν(A) = {w} > δ = {delta}")
    keep_events = ball(inst, reg, ell + 1)
    keep_vars = inst.vbl(keep_events)
    rng = random.Random(seed)
    for m in range(mutations):
        other = mutate_outside(inst, keep_events, keep_vars, rng)
        if augment(other, reg, eps, gamma, delta, ell, eps0).key() != aug.key():
            rep.failures.append(f"locality: mutation {m} outside B_(ell+1) changed the event")
            break
    rep.values["mutations"] = mutations
    hat = extend_instance(inst, [aug.to_event(inst, "lambda")])
    S = inst.vbl(reg)
    T = set(inst.variables) - shells(inst, reg).within(ell)
    if not T or len(S | T) == len(inst.variables):
        corr = True
    else:
        corr = is_eps_correlated(hat, S, T, eps)
    rep.values["correlated"] = corr
    guaranteed = not T or ell >= ell0(eps, gamma, delta, c0)
    rep.values["correlation_asserted"] = guaranteed
    if guaranteed and not corr:
        rep.failures.append("correlation: S and T not eps-correlated in the augmented instance")
    return rep


def check_estimation(
    inst: LLLInstance,
    region: Iterable[str],
    event: BadEvent,
    eps: Any,
    k: int,
    alpha1: Any,
    alpha2: Any,
    *,
    eps0: Any = DEFAULT_EPS0,
    c0: Any = DEFAULT_C0,
) -> CheckReport:
    """P ∈ [lo, hi] whenever guaranteed, plus the margin |P − P̂| against 2ε^k."""
    rep = CheckReport("estimation", {"k": k, "eps": as_fraction(eps)})
    iv = estimate_interval(inst, region, event, eps, k, alpha1, alpha2, eps0=eps0, c0=c0, mode="estimate")
    truth = avoid_probability(inst, event)
    rep.values.update(lo=iv.lo, hi=iv.hi, phat=iv.phat, truth=truth, margin=abs(truth - iv.phat),
                      bound=2 * iv.eps_k, degenerate=iv.degenerate, ell=iv.ell)
    asserted = iv.degenerate or as_fraction(c0) >= 1
    rep.values["asserted"] = asserted
    contains = iv.lo <= truth <= iv.hi
    rep.values["contains"] = contains
    if iv.hi - iv.lo > 4 * iv.eps_k:
        rep.failures.append("interval wider than 4 eps^k")
    if asserted and not contains:
        rep.failures.append(f"containment: P = {truth} outside [{iv.lo}, {iv.hi}]")
    return rep


def _subsets(items: Sequence[str]):
    for r in range(len(items) + 1):
        yield from combinations(items, r)


def check_substitution(
    inst: LLLInstance,
    region: Iterable[str],
    sigma: Mapping[str, int],
    eps: Any,
    gamma: Any,
    delta: Any,
    ell: int,
    *,
    eps0: Any = DEFAULT_EPS0,
    max_t: int = 6,
) -> CheckReport:
    """Outside marginals of (Î, σ) equal those of the reduced instance, and its satisfiability bound."""
    reg = frozenset(region)
    eps, gamma, delta = (as_fraction(v) for v in (eps, gamma, delta))
    rep = CheckReport("substitution", {"region": sorted(reg), "sigma": dict(sigma), "ell": ell})
    sub = substitute(inst, reg, sigma, eps, gamma, delta, ell, eps0=eps0, tag="chk")
    T = inst.ordered(set(inst.variables) - shells(inst, reg).within(ell))
    if len(T) > max_t:
        raise ValueError(f"|T| = {len(T)} exceeds the exhaustive limit {max_t}")
    compared = 0
    for W in _subsets(T):
        rest = [x for x in T if x not in W]
        if not rest:
            continue
        for t in inst.assignments(W):
            omega = dict(zip(W, t))
            left = _safe_marginal(sub.hat, {**omega, **sigma}, rest)
            right = _safe_marginal(sub.reduced, omega, rest)
            if left != right:
                rep.failures.append(f"marginal identity fails for W={list(W)}, omega={t}")
                return rep
            compared += 1
    rep.values["compared"] = compared
    alpha = min(satisfiability(inst), gamma)
    bound = (1 - eps) * (alpha - delta)
    sat = satisfiability(sub.reduced)
    inner = ball(inst, reg, ell) - reg
    hyp = alpha > 0 and delta < gamma / 2 and satisfiability(sub_instance(inst, inner)) >= gamma
    # the bound rests on S and T being ε-correlated in Î, which ℓ = ℓ0 guarantees;
    # below ℓ0 it is checked by enumeration instead
    S = inst.vbl(reg)
    corr = not T or len(S) + len(T) == len(inst.variables) or is_eps_correlated(sub.hat, S, T, eps)
    hyp = hyp and corr
    rep.values.update(alpha=alpha, bound=bound, satisfiability=sat, hypotheses=hyp, correlated=corr)
    if hyp and sat < bound:
        rep.failures.append(f"satisfiability {sat} below (1-eps)(alpha-delta) = {bound}")
    return rep


def _safe_marginal(inst: LLLInstance, tau, scope):
    try:
        return marginal(inst, tau, scope)
    except InfeasibleBoundary:
        return None


def global_filter_probability(
    hat: LLLInstance, region: Iterable[str], Y: Mapping[str, int], radius: int,
    geometry: LLLInstance | None = None,
) -> Fraction:
    """f(Y_T)/max f with f(τ) = ν(Ω^τ)/ν(Ω^{Y_S∧τ}) maximized over all of Σ_T."""
    geom = hat if geometry is None else geometry
    reg = frozenset(region)
    S = hat.ordered(hat.vbl(reg))
    inner = geom.vbl(ball(geom, reg, radius))
    T = hat.ordered(set(hat.variables) - inner)
    if not T:
        return Fraction(1)
    ys = {x: Y[x] for x in S}
    f = {}
    for t in hat.assignments(T):
        tau = dict(zip(T, t))
        den = omega_weight(hat, {**ys, **tau})
        num = omega_weight(hat, tau)
        if den > 0:
            f[t] = num / den
        elif num > 0:
            return Fraction(0)
    fmax = max(f.values())
    return f[tuple(Y[x] for x in T)] / fmax


def check_filter(
    hat: LLLInstance,
    region: Iterable[str],
    radius: int,
    eps: Any,
    *,
    trials: int = 10**5,
    seed: int = 0,
    geometry: LLLInstance | None = None,
) -> CheckReport:
    """Exact local-vs-global acceptance probability, and the 1/(1+ε) acceptance floor."""
    geom = hat if geometry is None else geometry
    reg = frozenset(region)
    eps = as_fraction(eps)
    rep = CheckReport("bayes-filter", {"radius": radius, "eps": eps})
    exact = exact_distribution(hat)
    scope = tuple(hat.variables)
    for t in exact:
        Y = dict(zip(scope, t))
        loc = filter_probability(hat, reg, Y, radius, geom)
        glob = global_filter_probability(hat, reg, Y, radius, geom)
        if loc != glob:
            rep.failures.append(f"local {loc} != global {glob} at {t}")
            return rep
    S = hat.vbl(reg)
    T = set(hat.variables) - geom.vbl(ball(geom, reg, radius))
    corr = not T or len(S | T) == len(hat.variables) or is_eps_correlated(hat, S, T, eps)
    rep.values["correlated"] = corr
    if not corr or trials <= 0:
        return rep
    rng = random.Random(seed)
    accepted = 0
    for _ in range(trials):
        Y = sample_marginal(hat, {}, scope, rng)
        if bernoulli(filter_probability(hat, reg, Y, radius, geom), rng):
            accepted += 1
    floor = 1 / (1 + float(eps))
    sigma = math.sqrt(floor * (1 - floor) / trials)
    freq = accepted / trials
    rep.values.update(frequency=freq, floor=floor, sigma=sigma)
    if freq < floor - 3 * sigma:
        rep.failures.append(f"acceptance frequency {freq:.6f} below {floor:.6f} - 3 sigma")
    return rep


# conditional Gibbs ------------------------------------------------------------------


def _after_clustering(inst: LLLInstance, seed: int, cfg: SamplerConfig, gamma):
    """Y and committed balls right after the clustering phase."""
    memories, free, chosen, _ = initialization_phase(inst, seed, cfg)
    balls = ()
    if chosen:
        g = _instance_gamma(inst, gamma)
        prm = phase_parameters(inst.n, g, cfg)
        net = Network.from_instance(inst)
        alg = ClusteringPhase(inst, net, prm, _owners(inst), cfg)
        memories, _, _ = run_phase(alg, net, memories, chosen, "sequential")
        balls = tuple(committed_balls(net, memories, chosen))
        check_ball_geometry(net, balls, prm.ell)
    Y = dict(free)
    for m in memories.values():
        Y.update(m.y)
    return Y, balls


def check_conditional_gibbs(
    inst: LLLInstance,
    runs: int,
    *,
    phase: str = "clustering",
    base_seed: int = 0,
    config: SamplerConfig | None = None,
    condition: Callable[[tuple, Mapping[str, int]], bool] | None = None,
    min_mass: int = 500,
) -> CheckReport:
    """Law of Y_T given the phase outcome (balls, Y_S) against the oracle conditional.

    ``phase="initialization"`` compares the unconditioned Y with ν.
    With ``phase="clustering"`` runs are grouped by (committed balls, Y on their
    variables); ``condition`` selects admissible groups (default: all) and the
    heaviest admissible group with nonempty T is tested.
    """
    cfg = config or SamplerConfig()
    rep = CheckReport("conditional-gibbs", {"phase": phase, "runs": runs})
    scope = tuple(inst.variables)
    if phase == "initialization":
        counts: Counter = Counter()
        for s in range(base_seed, base_seed + runs):
            memories, free, _, _ = initialization_phase(inst, s, cfg)
            Y = dict(free)
            for m in memories.values():
                Y.update(m.y)
            counts[tuple(Y[x] for x in scope)] += 1
        exact = {t: inst.nu(dict(zip(scope, t))) for t in inst.assignments(scope)}
        dr = DistributionReport.build(exact, counts, runs, base_seed)
        rep.values.update(tv=dr.tv, p_value=dr.p_value)
        if dr.p_value < P_THRESHOLD:
            rep.failures.append(f"initial law differs from nu (p = {dr.p_value:.3g})")
        return rep
    if phase != "clustering":
        raise ValueError(f"unknown phase {phase!r}")
    groups: dict[tuple, Counter] = {}
    for s in range(base_seed, base_seed + runs):
        Y, balls = _after_clustering(inst, s, cfg, None)
        regions = frozenset(ball(inst, [p], r) for _, p, r in balls)
        S = inst.ordered(set().union(*(inst.vbl(b) for b in regions))) if regions else ()
        sigma = tuple(Y[x] for x in S)
        if condition is not None and not condition(tuple(sorted(map(sorted, regions))), dict(zip(S, sigma))):
            continue
        key = (regions, S, sigma)
        T = tuple(x for x in scope if x not in set(S))
        groups.setdefault(key, Counter())[tuple(Y[x] for x in T)] += 1
    candidates = [(sum(c.values()), k) for k, c in groups.items() if len(k[1]) < len(scope)]
    if not candidates:
        rep.values["vacuous"] = True
        return rep
    mass, key = max(candidates, key=lambda mk: (mk[0], repr(mk[1])))
    rep.values["mass"] = mass
    if mass < min_mass:
        rep.values["insufficient"] = True
        return rep
    regions, S, sigma = key
    g = _instance_gamma(inst, None)
    prm = phase_parameters(inst.n, g, cfg)
    augs = [
        augment(inst, reg, prm.eps, prm.gamma0, prm.delta0, prm.ell, cfg.eps0).to_event(inst, f"lambda{i}")
        for i, reg in enumerate(sorted(regions, key=sorted))
    ]
    hat = extend_instance(inst, augs)
    T = tuple(x for x in scope if x not in set(S))
    exact = marginal(hat, dict(zip(S, sigma)), T)
    dr = DistributionReport.build(exact, groups[key], mass, base_seed)
    rep.values.update(tv=dr.tv, p_value=dr.p_value, T=list(T), sigma=dict(zip(S, sigma)))
    if dr.p_value < P_THRESHOLD:
        rep.failures.append(f"conditional law of Y_T differs from the oracle (p = {dr.p_value:.3g})")
    return rep
