"""The three-phase sampler (initialization, clustering, resampling) and the Las Vegas wrapper."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Any, Callable, Iterable, Mapping, Sequence

from .augmentation import augment, ell0, substitute
from .core import BadEvent, LLLInstance, Variable, as_fraction, ball, extend_instance, restrict, sub_instance
from .errors import InfeasibleBoundary, InvariantViolation, ParameterError
from .oracle import enumeration_budget, satisfiability
from .runtime import (
    MeteredAssignment,
    Network,
    NodeMemory,
    StepContext,
    cluster_diameter_bound,
    derive_rng,
    derive_seed,
    network_decomposition,
    slocal_run_local_sim,
    slocal_run_sequential,
)
from .sampler import CallRecord, SamplerConfig, recursive_sampling

RUNTIMES = ("sequential", "local")


@dataclass(frozen=True)
class PhaseParameters:
    """(ε, γ, δ) = (1/(2n³), γ/8, ζ0·γ/(24n³)) and the derived ring radius ℓ."""

    n: int
    gamma: Fraction
    eps: Fraction
    gamma0: Fraction
    delta0: Fraction
    ell: int
    r_init: int


def phase_parameters(n: int, gamma: Fraction, config: SamplerConfig) -> PhaseParameters:
    gamma = as_fraction(gamma)
    if not 0 < gamma <= 1:
        raise ParameterError(f"gamma must lie in (0, 1], got {gamma}")
    if gamma == 1:
        # a never-failing instance is 1-satisfiable; any γ<1 is also valid
        gamma = Fraction(1, 2)
    n = max(n, 1)
    eps = Fraction(1, 2 * n**3)
    gamma0 = gamma / 8
    delta0 = config.zeta0 * gamma / (24 * n**3)
    ell = ell0(eps, gamma0, delta0, config.c0)
    r_init = cluster_diameter_bound(n, config.d) + 1
    return PhaseParameters(n, gamma, eps, gamma0, delta0, ell, r_init)


@dataclass
class PipelineTrace:
    seed: int
    params: PhaseParameters | None
    runtime: str
    violated: tuple[str, ...] = ()
    balls: tuple[tuple[str, str, int], ...] = ()
    potential: int = 0
    potentials: dict[str, int] = field(default_factory=dict)
    calls: dict[str, CallRecord] = field(default_factory=dict)
    radii: dict[str, dict[str, int]] = field(default_factory=dict)
    rounds: list[tuple[str, int]] = field(default_factory=list)
    surcharge: int = 0
    decomposition: str = ""

    def as_dict(self) -> dict[str, Any]:
        p = self.params
        return {
            "seed": self.seed,
            "runtime": self.runtime,
            "params": None
            if p is None
            else {
                "n": p.n,
                "gamma": str(p.gamma),
                "eps": str(p.eps),
                "gamma0": str(p.gamma0),
                "delta0": str(p.delta0),
                "ell": p.ell,
                "r_init": p.r_init,
            },
            "violated": list(self.violated),
            "balls": [list(b) for b in self.balls],
            "potential": self.potential,
            "potentials": dict(self.potentials),
            "calls": {v: c.as_dict() for v, c in self.calls.items()},
            "radii": self.radii,
            "rounds": [list(r) for r in self.rounds],
            "surcharge": self.surcharge,
            "decomposition": self.decomposition,
        }


# phase algorithms ------------------------------------------------------------------


class ClusteringPhase:
    """Grow, merge and commit balls around the violated clusters (one scan)."""

    scans = 1

    def __init__(self, inst: LLLInstance, net: Network, params: PhaseParameters,
                 owners: Mapping[str, str], config: SamplerConfig):
        self.inst = inst
        self.net = net
        self.params = params
        self.owners = owners
        self.config = config

    def process(self, ctx: StepContext, v: str, scan: int) -> None:
        inst, net, prm = self.inst, self.net, self.params
        ell = prm.ell
        me = ctx.memory(v)
        p, r = v, prm.r_init
        Y = MeteredAssignment(ctx, self.owners)
        while True:
            near = net.ball(p, 2 * (ell + 2) + r)
            ctx.touch_all(near)
            other = None
            for w in sorted(near, key=net.rank.__getitem__):
                b = ctx.memories[w].state.get("b")
                if b is not None and b != v:
                    other = b
                    break
            if other is not None:
                mu = ctx.memory(other)
                pu, ru = mu.state["p"], mu.state["r"]
                reach = net.ball(p, ru + ell + 2)
                ctx.touch_all(reach)
                du = net.distances(pu)
                cands = [c for c in reach if du.get(c, math.inf) <= r + ell + 2]
                if not cands:
                    raise InvariantViolation("no merge center between two close balls")
                c = min(cands, key=net.rank.__getitem__)
                for w in net.ball(pu, ru):
                    ctx.memory(w).state["b"] = None
                mu.state["p"] = None
                mu.state["r"] = None
                p, r = c, ru + r + 2 * (ell + 2)
                continue
            region = ball(inst, [p], r)
            ctx.touch_all(net.ball(p, r + ell + 1))
            aug = augment(inst, region, prm.eps, prm.gamma0, prm.delta0, ell, self.config.eps0)
            if aug.occurs(Y):
                r += ell
                continue
            for w in net.ball(p, r):
                ctx.memory(w).state["b"] = v
            me.state["p"] = p
            me.state["r"] = r
            return


def _substituted(
    comp_inst: LLLInstance,
    balls: Sequence[tuple[str, frozenset[str]]],
    Y,
    params: PhaseParameters,
    config: SamplerConfig,
) -> tuple[LLLInstance, list]:
    """I' with every listed ball replaced by its (β, κ) pair."""
    if not balls:
        return comp_inst, []
    subs = []
    drop_events: set[str] = set()
    drop_vars: set[str] = set()
    for tag, region in balls:
        sigma = {x: Y[x] for x in comp_inst.ordered(comp_inst.vbl(region))}
        sub = substitute(comp_inst, region, sigma, params.eps, params.gamma0, params.delta0,
                         params.ell, eps0=config.eps0, tag=tag)
        subs.append(sub)
        drop_events |= ball(comp_inst, region, params.ell + 1)
        from .core import shells

        drop_vars |= shells(comp_inst, region).within(params.ell)
    base = restrict(
        comp_inst,
        set(comp_inst.events) - drop_events,
        set(comp_inst.variables) - drop_vars,
    )
    out = extend_instance(base, [s.kappa for s in subs], [s.beta for s in subs])
    return out, subs


class ResamplingPhase:
    """Run the recursive sampler on each committed ball (one scan)."""

    scans = 1

    def __init__(self, inst: LLLInstance, net: Network, params: PhaseParameters,
                 owners: Mapping[str, str], config: SamplerConfig):
        self.inst = inst
        self.net = net
        self.params = params
        self.owners = owners
        self.config = config

    def process(self, ctx: StepContext, v: str, scan: int) -> None:
        inst, net, prm, cfg = self.inst, self.net, self.params, self.config
        me = ctx.memory(v)
        p, r = me.state.get("p"), me.state.get("r")
        if p is None:
            return
        comp = frozenset(net.distances(p))
        ctx.touch_all(comp)
        comp_inst = sub_instance(inst, comp)
        later = []
        for u in sorted(comp, key=net.rank.__getitem__):
            mu = ctx.memories[u]
            if mu.active and net.rank[u] > net.rank[v] and mu.state.get("p") is not None:
                later.append((f"@{u}", ball(comp_inst, [mu.state["p"]], mu.state["r"])))
        rng = derive_rng(me.seed, "resample")
        Y = MeteredAssignment(ctx, self.owners)
        local, subs = _substituted(comp_inst, later, Y, prm, cfg)
        for sub in subs:
            Y.overlay[sub.beta.id] = sub.beta_given({x: Y[x] for x in sub.ring}, rng)
        region = ball(comp_inst, [p], r)
        records: list[CallRecord] = []
        pot = recursive_sampling(Y, local, region, prm.eps, prm.gamma0, prm.delta0, prm.gamma0,
                                 rng, cfg, records)
        me.state["potential"] = pot
        me.state["call"] = records[0]


# pipeline ---------------------------------------------------------------------------


def _instance_gamma(inst: LLLInstance, gamma: Any) -> Fraction:
    if gamma is not None:
        return as_fraction(gamma)
    if inst.gamma is not None:
        return inst.gamma
    key = ("satisfiability",)
    z = inst.memo.get(key)
    if z is None:
        z = satisfiability(inst)
        inst.memo[key] = z
    return z


def _decomposition(net: Network, seed: int, config: SamplerConfig, inst: LLLInstance):
    key = ("decomposition", config.d)
    hit = inst.memo.get(key)
    if hit is not None:
        return hit
    dec = network_decomposition(net, derive_rng(seed, "decomposition"), d=config.d)
    if dec.method == "components":
        inst.memo[key] = dec
    return dec


def initialization_phase(
    inst: LLLInstance, seed: int, config: SamplerConfig | None = None
) -> tuple[dict[str, NodeMemory], dict[str, int], tuple[str, ...], dict[str, Any]]:
    """Draw Y ~ ν at the owners, decompose the network and elect one node per violated cluster.

    Returns (memories, orphan values, ℛ in rank order, info).
    """
    cfg = config or SamplerConfig()
    net = Network.from_instance(inst)
    owners = _owners(inst)
    memories: dict[str, NodeMemory] = {}
    owned: dict[str, list[str]] = {e: [] for e in inst.events}
    orphans: list[str] = []
    for x in inst.variables:
        o = owners.get(x)
        if o is None:
            orphans.append(x)
        else:
            owned[o].append(x)
    for e, rank in inst.rank.items():
        mem = NodeMemory(e, rank, derive_seed(seed, "node", e))
        if owned[e]:
            rng = derive_rng(mem.seed, "init")
            mem.y = {x: inst.variables[x].draw(rng) for x in owned[e]}
        memories[e] = mem
    free = {}
    if orphans:
        rng = derive_rng(seed, "free")
        free = {x: inst.variables[x].draw(rng) for x in orphans}
    if not inst.events:
        return memories, free, (), {"decomposition": None, "rounds": 0}
    dec = _decomposition(net, seed, cfg, inst)
    Y = {}
    for mem in memories.values():
        Y.update(mem.y)
    occurred = [e for e, ev in inst.events.items() if ev.occurs(Y)]
    occ = set(occurred)
    chosen = []
    for cluster in dec.clusters:
        if occ & cluster:
            chosen.append(min(cluster, key=net.rank.__getitem__))
    chosen.sort(key=net.rank.__getitem__)
    for e in occurred:
        if not any(net.dist(v, e) <= dec.diameter_bound for v in chosen):
            raise InvariantViolation(f"occurred event {e!r} is not covered by any elected node")
    for v in chosen:
        memories[v].active = True
    info = {"decomposition": dec, "rounds": dec.diameter_bound + 1}
    return memories, free, tuple(chosen), info


def _owners(inst: LLLInstance) -> dict[str, str]:
    key = ("owners",)
    hit = inst.memo.get(key)
    if hit is None:
        hit = {x: min(es, key=inst.rank.__getitem__) for x, es in inst.var_events.items() if es}
        inst.memo[key] = hit
    return hit


def committed_balls(net: Network, memories: Mapping[str, NodeMemory], active: Iterable[str]):
    out = []
    for v in active:
        st = memories[v].state
        if st.get("p") is not None:
            out.append((v, st["p"], st["r"]))
    return out


def check_ball_geometry(net: Network, balls, ell: int) -> None:
    """Committed balls must be disjoint and at distance at least 2(ℓ+2)."""
    sets = [(v, net.ball(p, r)) for v, p, r in balls]
    for a in range(len(sets)):
        for b in range(a + 1, len(sets)):
            va, sa = sets[a]
            vb, sb = sets[b]
            if sa & sb:
                raise InvariantViolation(f"balls of {va!r} and {vb!r} intersect")
            dist = min((net.dist(x, y) for x in sa for y in sb), default=math.inf)
            if dist < 2 * (ell + 2):
                raise InvariantViolation(f"balls of {va!r} and {vb!r} are only {dist} apart")


def run_phase(alg, net: Network, memories, active, runtime: str):
    if runtime == "sequential":
        mem, log = slocal_run_sequential(alg, net, memories, active, in_place=True)
        return mem, {v: r for (v, _), r in log.radii.items()}, log.rounds
    if runtime == "local":
        mem, rep = slocal_run_local_sim(alg, net, memories, active)
        return mem, {v: i for v, i in rep.iterations.items()}, rep.rounds
    raise ParameterError(f"runtime must be one of {RUNTIMES}")


def sample_lll(
    inst: LLLInstance,
    seed: int,
    config: SamplerConfig | None = None,
    *,
    gamma: Any = None,
    runtime: str = "sequential",
) -> tuple[dict[str, int], PipelineTrace]:
    """Draw one exact sample from μ_I with the three-phase sampler."""
    cfg = config or SamplerConfig()
    if runtime not in RUNTIMES:
        raise ParameterError(f"runtime must be one of {RUNTIMES}")
    with enumeration_budget(cfg.budget):
        return _sample(inst, seed, cfg, gamma, runtime)


def _sample(inst, seed, cfg, gamma, runtime):
    trace = PipelineTrace(seed=seed, params=None, runtime=runtime)
    if not inst.events:
        mem, free, _, _ = initialization_phase(inst, seed, cfg)
        return dict(free), trace
    g = _instance_gamma(inst, gamma)
    if g <= 0:
        raise InfeasibleBoundary("instance is unsatisfiable")
    key = ("phase-params", g, cfg)
    prm = inst.memo.get(key)
    if prm is None:
        prm = phase_parameters(inst.n, g, cfg)
        inst.memo[key] = prm
    trace.params = prm
    net = Network.from_instance(inst)
    memories, free, chosen, info = initialization_phase(inst, seed, cfg)
    trace.decomposition = info["decomposition"].method
    trace.violated = chosen
    total = info["rounds"]
    trace.rounds.append(("initialization", total))
    owners = _owners(inst)
    if chosen:
        clus = ClusteringPhase(inst, net, prm, owners, cfg)
        memories, radii, rounds = run_phase(clus, net, memories, chosen, runtime)
        trace.radii["clustering"] = radii
        total += rounds
        trace.rounds.append(("clustering", total))
        balls = committed_balls(net, memories, chosen)
        check_ball_geometry(net, balls, prm.ell)
        trace.balls = tuple(balls)
        res = ResamplingPhase(inst, net, prm, owners, cfg)
        memories, radii, rounds = run_phase(res, net, memories, chosen, runtime)
        trace.radii["resampling"] = radii
        total += rounds
        trace.rounds.append(("resampling", total))
        dsum = sum(r for _, _, r in balls)
        trace.surcharge = 2 * (dsum + len(chosen) * prm.ell + 1)
        for v, _, _ in balls:
            st = memories[v].state
            trace.potentials[v] = st["potential"]
            trace.calls[v] = st["call"]
        trace.potential = sum(trace.potentials.values())
    Y = dict(free)
    for mem in memories.values():
        Y.update(mem.y)
    for e, ev in inst.events.items():
        if ev.occurs(Y):
            raise InvariantViolation(f"final assignment violates {e!r}")
    return {x: Y[x] for x in inst.variables}, trace


# Las Vegas wrapper ------------------------------------------------------------------


@dataclass(frozen=True)
class LasVegasAlgorithm:
    """Fixed-round LOCAL algorithm: per-node random value, output map and local failure flag."""

    name: str
    t: int
    weights: tuple[Fraction, ...]
    output: Callable[[Network, str, Mapping[str, int]], tuple[Any, bool]]


def _no_adjacent_ones(net: Network, v: str, bits: Mapping[str, int]) -> tuple[Any, bool]:
    mine = bits[v]
    return mine, bool(mine and any(bits[w] for w in net.adj[v]))


def _three_coloring(net: Network, v: str, colors: Mapping[str, int]) -> tuple[Any, bool]:
    mine = colors[v]
    return mine, any(colors[w] == mine for w in net.adj[v])


BUILTIN_LV = {
    "no-adjacent-ones": LasVegasAlgorithm(
        "no-adjacent-ones", 1, (Fraction(1, 2), Fraction(1, 2)), _no_adjacent_ones
    ),
    "3-coloring": LasVegasAlgorithm(
        "3-coloring", 1, (Fraction(1, 3),) * 3, _three_coloring
    ),
}


def _rvar(v: str) -> str:
    return f"r{v}"


def lv_instance(alg: LasVegasAlgorithm, net: Network) -> LLLInstance:
    """One variable per node (its randomness), one event per node (its failure) over B_t(v)."""
    variables = [Variable(_rvar(v), alg.weights) for v in net.nodes]
    events = []
    k = len(alg.weights)
    for v in net.nodes:
        scope_nodes = sorted(net.ball(v, alg.t), key=net.rank.__getitem__)
        scope = [_rvar(u) for u in scope_nodes]
        forb = []
        for t in product(range(k), repeat=len(scope_nodes)):
            vals = dict(zip(scope_nodes, t))
            _, fail = alg.output(net, v, _Guard(vals, v, alg.t, net))
            if fail:
                forb.append(t)
        events.append(BadEvent(f"F{v}", scope, forb, origin={"node": v}))
    return LLLInstance(variables, events)


class _Guard(dict):
    """Value map that refuses reads outside B_t(v), enforcing the locality contract."""

    def __init__(self, vals, v, t, net):
        super().__init__(vals)
        self._where = (v, t)

    def __missing__(self, key):
        v, t = self._where
        raise InvariantViolation(f"output map at {v!r} read {key!r} outside its {t}-ball")


def lv_outputs(alg: LasVegasAlgorithm, net: Network, values: Mapping[str, int]) -> dict[str, Any]:
    out = {}
    for v in net.nodes:
        local = {u: values[u] for u in net.ball(v, alg.t)}
        y, fail = alg.output(net, v, _Guard(local, v, alg.t, net))
        if fail:
            raise InvariantViolation(f"node {v!r} failed on the sampled randomness")
        out[v] = y
    return out


def simulate_las_vegas(
    alg: LasVegasAlgorithm,
    net: Network,
    seed: int,
    config: SamplerConfig | None = None,
    *,
    runtime: str = "sequential",
) -> tuple[dict[str, Any], PipelineTrace]:
    """Outputs of ``alg`` distributed exactly as conditioned on no node failing."""
    key = ("lv-instance", alg.name, alg.t)
    cache = net.__dict__.setdefault("_lv_cache", {})
    inst = cache.get(key)
    if inst is None:
        inst = lv_instance(alg, net)
        cache[key] = inst
    Y, trace = sample_lll(inst, seed, config, runtime=runtime)
    values = {v: Y[_rvar(v)] for v in net.nodes}
    return lv_outputs(alg, net, values), trace


def lv_reference_distribution(alg: LasVegasAlgorithm, net: Network) -> dict[tuple, Fraction]:
    """Exact law of the outputs given no failure, by enumerating all node randomness."""
    k = len(alg.weights)
    acc: dict[tuple, Fraction] = {}
    total = Fraction(0)
    for t in product(range(k), repeat=net.n):
        vals = dict(zip(net.nodes, t))
        outs = []
        ok = True
        for v in net.nodes:
            y, fail = alg.output(net, v, vals)
            if fail:
                ok = False
                break
            outs.append(y)
        if not ok:
            continue
        w = Fraction(1)
        for a in t:
            w *= alg.weights[a]
        acc[tuple(outs)] = acc.get(tuple(outs), Fraction(0)) + w
        total += w
    if total == 0:
        raise InfeasibleBoundary("the algorithm fails on every outcome")
    return {k_: v / total for k_, v in acc.items()}
