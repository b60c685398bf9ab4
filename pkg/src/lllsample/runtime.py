"""LOCAL / SLOCAL execution substrate with information-radius metering.

Nodes keep all their state in :class:`NodeMemory`.  An SLOCAL algorithm
processes active nodes one at a time through a :class:`StepContext`, which
records every node whose memory (or owned variables) the step reads or
writes; the distance to the farthest such node is the step's radius.
"""

from __future__ import annotations

import copy
import hashlib
import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Mapping, MutableMapping, Protocol, Sequence

from .core import LLLInstance
from .errors import InstanceError, InvariantViolation, RegionError


def derive_seed(*parts: Any) -> int:
    """Stable 64-bit seed derived from arbitrary printable parts."""
    digest = hashlib.blake2b(repr(parts).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def derive_rng(*parts: Any) -> random.Random:
    return random.Random(derive_seed(*parts))


# network ---------------------------------------------------------------------------


class Network:
    """Undirected graph with ranked nodes and cached BFS distances."""

    def __init__(self, nodes: Sequence[str], adjacency: Mapping[str, Iterable[str]]):
        self.nodes = tuple(nodes)
        self.rank = {v: i for i, v in enumerate(self.nodes)}
        self.adj = {v: frozenset(adjacency.get(v, ())) for v in self.nodes}
        for v, ws in self.adj.items():
            for w in ws:
                if w not in self.rank:
                    raise RegionError(f"edge to unknown node {w!r}")
                if v not in self.adj[w]:
                    raise RegionError("adjacency must be symmetric")
        self._dist: dict[str, dict[str, int]] = {}

    @classmethod
    def from_instance(cls, inst: LLLInstance) -> "Network":
        net = inst.memo.get(("network",))
        if net is None:
            net = cls(tuple(inst.events), inst.adjacency)
            inst.memo[("network",)] = net
        return net

    @classmethod
    def from_edges(cls, nodes: Sequence[str], edges: Iterable[tuple[str, str]]) -> "Network":
        adj: dict[str, set[str]] = {v: set() for v in nodes}
        for u, w in edges:
            if u == w:
                raise RegionError("self-loops are not allowed")
            adj[u].add(w)
            adj[w].add(u)
        return cls(nodes, adj)

    @property
    def n(self) -> int:
        return len(self.nodes)

    def distances(self, source: str) -> dict[str, int]:
        hit = self._dist.get(source)
        if hit is None:
            hit = {source: 0}
            queue = deque([source])
            while queue:
                u = queue.popleft()
                for w in self.adj[u]:
                    if w not in hit:
                        hit[w] = hit[u] + 1
                        queue.append(w)
            self._dist[source] = hit
        return hit

    def dist(self, u: str, v: str) -> float:
        return self.distances(u).get(v, math.inf)

    def ball(self, center: str, r: float) -> frozenset[str]:
        return frozenset(w for w, d in self.distances(center).items() if d <= r)

    def components(self) -> list[frozenset[str]]:
        seen: set[str] = set()
        out = []
        for v in self.nodes:
            if v not in seen:
                comp = frozenset(self.distances(v))
                seen |= comp
                out.append(comp)
        return out

    def diameter(self, nodes: Iterable[str]) -> float:
        ns = list(nodes)
        best = 0.0
        for u in ns:
            du = self.distances(u)
            for w in ns:
                best = max(best, du.get(w, math.inf))
        return best

    def power_component(self, v: str, active: Iterable[str], t: int) -> frozenset[str]:
        """Connected component of ``v`` in the power graph G^t induced on ``active``."""
        act = set(active)
        comp = {v}
        queue = deque([v])
        while queue:
            u = queue.popleft()
            du = self.distances(u)
            for w in list(act - comp):
                if du.get(w, math.inf) <= t:
                    comp.add(w)
                    queue.append(w)
        return frozenset(comp)


# decomposition ---------------------------------------------------------------------


def cluster_diameter_bound(n: int, d: int = 2) -> int:
    """max(1, ⌈d·log2 n·max(1, log2 log2 log2 n)⌉) with inner logs clamped."""
    if n <= 1:
        return 1
    lg = math.log2(n)
    lll = 1.0
    if lg > 1 and math.log2(lg) > 1:
        lll = max(1.0, math.log2(math.log2(lg)))
    return max(1, math.ceil(d * lg * lll))


@dataclass(frozen=True)
class Decomposition:
    clusters: tuple[frozenset[str], ...]
    colors: tuple[int, ...]
    diameter_bound: int
    method: str

    @property
    def n_colors(self) -> int:
        return len(set(self.colors))

    def cluster_of(self) -> dict[str, int]:
        return {v: k for k, c in enumerate(self.clusters) for v in c}

    def validate(self, net: Network) -> None:
        seen: set[str] = set()
        for c in self.clusters:
            if not c:
                raise InvariantViolation("empty cluster")
            if seen & c:
                raise InvariantViolation("clusters overlap")
            seen |= c
            if net.diameter(c) > self.diameter_bound:
                raise InvariantViolation("cluster diameter exceeds the declared bound")
        if seen != set(net.nodes):
            raise InvariantViolation("clusters do not cover every node")
        owner = self.cluster_of()
        for v in net.nodes:
            for w in net.adj[v]:
                a, b = owner[v], owner[w]
                if a != b and self.colors[a] == self.colors[b]:
                    raise InvariantViolation("adjacent clusters share a color")


def _greedy_colors(net: Network, clusters: Sequence[frozenset[str]]) -> tuple[int, ...]:
    owner = {v: k for k, c in enumerate(clusters) for v in c}
    colors: list[int] = []
    for k, c in enumerate(clusters):
        used = {colors[owner[w]] for v in c for w in net.adj[v] if owner[w] < k}
        col = 0
        while col in used:
            col += 1
        colors.append(col)
    return tuple(colors)


def network_decomposition(
    net: Network,
    rng: random.Random | None = None,
    *,
    d: int = 2,
    fallback_limit: int = 16,
) -> Decomposition:
    """Weak network decomposition: small graphs use one cluster per component,
    larger ones exponential-shift ball carving followed by greedy coloring."""
    if net.n == 0:
        raise RegionError("network must be nonempty")
    bound = cluster_diameter_bound(net.n, d)
    if net.n <= fallback_limit:
        comps = net.components()
        if all(net.diameter(c) <= bound for c in comps):
            dec = Decomposition(tuple(comps), tuple(range(len(comps))), bound, "components")
            dec.validate(net)
            return dec
    rng = rng or random.Random(0)
    beta = 2 * math.log(max(net.n, 2)) / max(bound, 1)
    shift = {v: rng.expovariate(beta) for v in net.nodes}
    best: dict[str, tuple[float, int, str]] = {}
    for u in net.nodes:
        for v, dv in net.distances(u).items():
            cand = (shift[u] - dv, -net.rank[u], u)
            if v not in best or cand > best[v]:
                best[v] = cand
    groups: dict[str, set[str]] = {}
    for v in net.nodes:
        groups.setdefault(best[v][2], set()).add(v)
    clusters: list[frozenset[str]] = []
    for center in net.nodes:
        g = groups.get(center)
        if not g:
            continue
        if net.diameter(g) <= bound:
            clusters.append(frozenset(g))
        else:
            clusters.extend(frozenset([v]) for v in sorted(g, key=net.rank.__getitem__))
    dec = Decomposition(tuple(clusters), _greedy_colors(net, clusters), bound, "carving")
    dec.validate(net)
    return dec


def variable_ownership(inst: LLLInstance) -> dict[str, str]:
    """Each variable is owned by the earliest-declared event that uses it."""
    out = {}
    for x, evs in inst.var_events.items():
        if not evs:
            raise InstanceError(f"variable {x!r} is not used by any event (orphan)")
        out[x] = min(evs, key=inst.rank.__getitem__)
    return out


# SLOCAL engine ---------------------------------------------------------------------


@dataclass
class NodeMemory:
    node: str
    rank: int
    seed: int
    active: bool = False
    y: dict[str, int] = field(default_factory=dict)
    state: dict[str, Any] = field(default_factory=dict)

    def __lt__(self, other: "NodeMemory") -> bool:
        return self.rank < other.rank


class StepContext:
    """Read/write view of the memories for one SLOCAL step, metering touched nodes."""

    def __init__(self, net: Network, memories: MutableMapping[str, NodeMemory], origin: str):
        self.net = net
        self.memories = memories
        self.origin = origin
        self.touched: set[str] = {origin}

    def touch(self, node: str) -> None:
        self.touched.add(node)

    def touch_all(self, nodes: Iterable[str]) -> None:
        self.touched.update(nodes)

    def memory(self, node: str) -> NodeMemory:
        self.touched.add(node)
        return self.memories[node]

    @property
    def radius(self) -> int:
        dist = self.net.distances(self.origin)
        worst = 0
        for u in self.touched:
            d = dist.get(u)
            if d is None:
                raise InvariantViolation(f"step at {self.origin!r} touched unreachable node {u!r}")
            worst = max(worst, d)
        return worst


class MeteredAssignment(MutableMapping):
    """Assignment stored in node memories; each access touches the owner node.

    Variables without an owner (synthetic substitutes) live in an overlay.
    """

    def __init__(self, ctx: StepContext, owners: Mapping[str, str], overlay: dict[str, int] | None = None):
        self.ctx = ctx
        self.owners = owners
        self.overlay = overlay if overlay is not None else {}

    def __getitem__(self, x: str) -> int:
        if x in self.overlay:
            return self.overlay[x]
        owner = self.owners[x]
        return self.ctx.memory(owner).y[x]

    def __setitem__(self, x: str, value: int) -> None:
        owner = self.owners.get(x)
        if owner is None:
            self.overlay[x] = value
        else:
            self.ctx.memory(owner).y[x] = value

    def __delitem__(self, x: str) -> None:
        raise TypeError("assignments cannot drop variables")

    def __iter__(self) -> Iterator[str]:
        yield from self.owners
        yield from self.overlay

    def __len__(self) -> int:
        return len(self.owners) + len(self.overlay)

    def __contains__(self, x: object) -> bool:
        return x in self.overlay or x in self.owners


class SlocalAlgorithm(Protocol):
    scans: int

    def process(self, ctx: StepContext, v: str, scan: int) -> None: ...


@dataclass
class RadiusLog:
    radii: dict[tuple[str, int], int] = field(default_factory=dict)
    footprint: set[str] = field(default_factory=set)
    rounds: int = 0

    @property
    def max_radius(self) -> int:
        return max(self.radii.values(), default=0)


def _active_order(net: Network, memories: Mapping[str, NodeMemory], active: Iterable[str] | None) -> list[str]:
    if active is None:
        act = [v for v, m in memories.items() if m.active]
    else:
        act = list(active)
    for v in act:
        if v not in net.rank:
            raise RegionError(f"unknown active node {v!r}")
    return sorted(set(act), key=net.rank.__getitem__)


def slocal_run_sequential(
    alg: SlocalAlgorithm,
    net: Network,
    memories: MutableMapping[str, NodeMemory],
    active: Iterable[str] | None = None,
    *,
    in_place: bool = False,
) -> tuple[MutableMapping[str, NodeMemory], RadiusLog]:
    """Run every scan over the active nodes in ascending rank order."""
    mem = memories if in_place else copy.deepcopy(memories)
    order = _active_order(net, mem, active)
    log = RadiusLog()
    for scan in range(alg.scans):
        for v in order:
            ctx = StepContext(net, mem, v)
            alg.process(ctx, v, scan)
            log.radii[(v, scan)] = ctx.radius
            log.footprint |= ctx.touched
    log.rounds = len(order) * max(1, log.max_radius) * max(1, alg.scans)
    return mem, log


@dataclass
class LocalSimReport:
    rounds: int
    per_node_rounds: dict[str, int]
    iterations: dict[str, int]
    committed: dict[str, frozenset[str]]
    canceled: frozenset[str]
    sequential_max_radius: int
    bound: int


ROUND_CONSTANT = 12


def local_round_bound(n_active: int, max_radius: int, n: int) -> int:
    """c·|A|·max(1, M)·max(1, ⌈log2 n⌉) with c = 12."""
    lg = max(1, math.ceil(math.log2(n))) if n > 1 else 1
    return ROUND_CONSTANT * n_active * max(1, max_radius) * lg


def slocal_run_local_sim(
    alg: SlocalAlgorithm,
    net: Network,
    memories: MutableMapping[str, NodeMemory],
    active: Iterable[str] | None = None,
) -> tuple[MutableMapping[str, NodeMemory], LocalSimReport]:
    """Simulate the SLOCAL algorithm by doubling radius guesses on power-graph components.

    Every active node tries radii 2^i; a trial reruns the sequential algorithm
    on its component A' of G^(2^(i+1))[A] and succeeds when no step reaches
    beyond 2^i.  Nodes whose committed set is contained in another's are
    canceled (ties go to the smaller rank), and the surviving trials are
    merged over their disjoint footprints.
    """
    order = _active_order(net, memories, active)
    n = net.n
    max_i = max(1, math.ceil(math.log2(n))) if n > 1 else 1
    trials: dict[tuple[frozenset[str], int], tuple[Any, RadiusLog]] = {}
    committed: dict[str, frozenset[str]] = {}
    chosen: dict[str, tuple[Any, RadiusLog]] = {}
    per_node: dict[str, int] = {}
    iters: dict[str, int] = {}
    for v in order:
        cost = 0
        for i in range(1, max_i + 1):
            comp = net.power_component(v, order, 2 ** (i + 1))
            key = (comp, i)
            if key not in trials:
                trials[key] = slocal_run_sequential(alg, net, memories, comp)
            mem, log = trials[key]
            cost += len(comp) * 2 ** (i + 1) + 2**i
            if log.max_radius <= 2**i:
                committed[v] = comp
                chosen[v] = trials[key]
                iters[v] = i
                break
        else:
            raise InvariantViolation(f"simulation at {v!r} failed for every radius guess")
        per_node[v] = cost
    canceled = set()
    for v in order:
        av = committed[v]
        for u in order:
            if u == v:
                continue
            au = committed[u]
            if av < au or (av == au and net.rank[u] < net.rank[v]):
                canceled.add(v)
                break
    result = copy.deepcopy(memories)
    claimed: set[str] = set()
    for v in order:
        if v in canceled:
            continue
        mem, log = chosen[v]
        if claimed & log.footprint:
            raise InvariantViolation("footprints of uncanceled simulations overlap")
        claimed |= log.footprint
        for u in log.footprint:
            result[u] = copy.deepcopy(mem[u])
    _, seq_log = slocal_run_sequential(alg, net, memories, order)
    rounds = max(per_node.values(), default=0)
    bound = local_round_bound(len(order), seq_log.max_radius, n)
    if rounds > bound:
        raise InvariantViolation(f"LOCAL simulation used {rounds} rounds, above the bound {bound}")
    report = LocalSimReport(
        rounds=rounds,
        per_node_rounds=per_node,
        iterations=iters,
        committed=committed,
        canceled=frozenset(canceled),
        sequential_max_radius=seq_log.max_radius,
        bound=bound,
    )
    return result, report
