"""Instance model and the ball / ring geometry of the dependency graph.

An instance is a set of independent finite variables with strictly positive
rational weights plus a set of bad events, each stored extensionally as the
set of forbidden tuples over its variables.  Instances are immutable; every
derived structure (adjacency, distances, rings) is computed lazily and kept
in a per-instance memo so repeated queries are cheap.
"""

from __future__ import annotations

import math
from collections import deque
from fractions import Fraction
from itertools import product
from typing import Any, Iterable, Iterator, Mapping, Sequence

from .errors import InstanceError, RegionError

INFINITY = math.inf


def as_fraction(value: Any) -> Fraction:
    """Parse ints, Fractions and ``"p/q"`` strings into a Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, (int, str)):
        return Fraction(value)
    if isinstance(value, tuple) and len(value) == 2:
        return Fraction(int(value[0]), int(value[1]))
    if isinstance(value, float):
        return Fraction(value)
    raise TypeError(f"cannot interpret {value!r} as a rational")


class Variable:
    """A finite random variable with an exact rational distribution."""

    __slots__ = ("id", "weights", "synthetic", "origin", "_nums", "_den")

    def __init__(
        self,
        id: str,
        weights: Sequence[Any],
        synthetic: str | None = None,
        origin: Any = None,
    ):
        ws = tuple(as_fraction(w) for w in weights)
        if not ws:
            raise InstanceError(f"variable {id!r} has an empty domain")
        for w in ws:
            if w <= 0:
                raise InstanceError(
                    f"variable {id!r}: weight {w} is not strictly positive "
                    "(every domain value must have positive probability)"
                )
        if sum(ws) != 1:
            raise InstanceError(f"variable {id!r}: weights sum to {sum(ws)}, not 1")
        self.id = id
        self.weights = ws
        self.synthetic = synthetic
        self.origin = origin
        den = 1
        for w in ws:
            den = den * w.denominator // math.gcd(den, w.denominator)
        self._den = den
        self._nums = tuple(w.numerator * (den // w.denominator) for w in ws)

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def int_weights(self) -> tuple[tuple[int, ...], int]:
        """Weights as integer numerators over one common denominator."""
        return self._nums, self._den

    def draw(self, rng) -> int:
        """Draw a value exactly from the distribution using one randrange call."""
        u = rng.randrange(self._den)
        for value, w in enumerate(self._nums):
            if u < w:
                return value
            u -= w
        raise AssertionError("unreachable")

    def key(self) -> tuple:
        return (self.id, self.weights, self.synthetic)

    def __repr__(self) -> str:
        return f"Variable({self.id!r}, size={self.size})"


class BadEvent:
    """A bad event given by the tuples of values on ``vbl`` where it occurs."""

    __slots__ = ("id", "vbl", "forbidden", "synthetic", "origin", "vars")

    def __init__(
        self,
        id: str,
        vbl: Sequence[str],
        forbidden: Iterable[Sequence[int]],
        synthetic: str | None = None,
        origin: Any = None,
    ):
        vbl = tuple(vbl)
        if len(set(vbl)) != len(vbl):
            raise InstanceError(f"event {id!r}: duplicate variable in vbl {vbl}")
        if not vbl and synthetic is None:
            raise InstanceError(f"event {id!r}: vbl must be nonempty")
        forb = frozenset(tuple(int(a) for a in t) for t in forbidden)
        for t in forb:
            if len(t) != len(vbl):
                raise InstanceError(
                    f"event {id!r}: forbidden tuple {t} has arity {len(t)}, expected {len(vbl)}"
                )
        self.id = id
        self.vbl = vbl
        self.forbidden = forb
        self.synthetic = synthetic
        self.origin = origin
        self.vars = frozenset(vbl)

    def occurs(self, values: Mapping[str, int]) -> bool:
        try:
            return tuple(values[x] for x in self.vbl) in self.forbidden
        except KeyError as exc:
            raise RegionError(f"event {self.id!r}: assignment does not cover {exc.args[0]!r}") from None

    @property
    def never(self) -> bool:
        return not self.forbidden

    def key(self) -> tuple:
        return (self.id, self.vbl, tuple(sorted(self.forbidden)), self.synthetic)

    def __repr__(self) -> str:
        return f"BadEvent({self.id!r}, vbl={self.vbl}, |forbidden|={len(self.forbidden)})"


class LLLInstance:
    """Variables, bad events and the derived dependency graph.

    Event order is the declaration order and doubles as the total order on
    node identifiers ("smallest id" means earliest declared).
    """

    def __init__(
        self,
        variables: Iterable[Variable],
        events: Iterable[BadEvent],
        *,
        gamma: Any = None,
        network: tuple | None = None,
    ):
        self.variables: dict[str, Variable] = {}
        for var in variables:
            if var.id in self.variables:
                raise InstanceError(f"duplicate variable id {var.id!r}")
            self.variables[var.id] = var
        self.events: dict[str, BadEvent] = {}
        for ev in events:
            if ev.id in self.events:
                raise InstanceError(f"duplicate event id {ev.id!r}")
            for x in ev.vbl:
                if x not in self.variables:
                    raise InstanceError(f"event {ev.id!r} references undeclared variable {x!r}")
            sizes = [self.variables[x].size for x in ev.vbl]
            for t in ev.forbidden:
                for a, size in zip(t, sizes):
                    if not 0 <= a < size:
                        raise InstanceError(
                            f"event {ev.id!r}: forbidden tuple {t} is out of domain"
                        )
            self.events[ev.id] = ev
        self.gamma = None if gamma is None else as_fraction(gamma)
        self.network = network
        self.rank = {e: i for i, e in enumerate(self.events)}
        self.var_rank = {x: i for i, x in enumerate(self.variables)}
        var_events: dict[str, list[str]] = {x: [] for x in self.variables}
        for ev in self.events.values():
            for x in ev.vbl:
                var_events[x].append(ev.id)
        self.var_events = {x: tuple(es) for x, es in var_events.items()}
        self._adj: dict[str, frozenset[str]] | None = None
        self._key: tuple | None = None
        self._hash: int | None = None
        self.memo: dict = {}

    def __getstate__(self) -> dict:
        # the memo can hold keys that hash this instance, so it is rebuilt lazily
        state = self.__dict__.copy()
        state.update(memo={}, _adj=None, _key=None, _hash=None)
        return state

    # identity and structure -------------------------------------------------

    def key(self) -> tuple:
        if self._key is None:
            self._key = (
                tuple(v.key() for v in self.variables.values()),
                tuple(e.key() for e in self.events.values()),
            )
        return self._key

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(self.key())
        return self._hash

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if not isinstance(other, LLLInstance):
            return NotImplemented
        return self.key() == other.key()

    def __repr__(self) -> str:
        return f"LLLInstance(|U|={len(self.variables)}, |V|={len(self.events)})"

    @property
    def n(self) -> int:
        return len(self.events)

    @property
    def adjacency(self) -> dict[str, frozenset[str]]:
        if self._adj is None:
            adj: dict[str, set[str]] = {e: set() for e in self.events}
            for es in self.var_events.values():
                for a in es:
                    for b in es:
                        if a != b:
                            adj[a].add(b)
            self._adj = {e: frozenset(s) for e, s in adj.items()}
        return self._adj

    def domain_size(self, x: str) -> int:
        return self.variables[x].size

    def assignments(self, scope: Sequence[str]) -> Iterator[tuple[int, ...]]:
        """All tuples over ``scope`` in lexicographic order."""
        return product(*(range(self.variables[x].size) for x in scope))

    def count(self, scope: Iterable[str]) -> int:
        total = 1
        for x in scope:
            total *= self.variables[x].size
        return total

    def nu(self, assignment: Mapping[str, int]) -> Fraction:
        """Product weight of a partial assignment."""
        w = Fraction(1)
        for x, a in assignment.items():
            w *= self.variables[x].weights[a]
        return w

    def ordered(self, vars_: Iterable[str]) -> tuple[str, ...]:
        return tuple(sorted(vars_, key=self.var_rank.__getitem__))

    def ordered_events(self, events: Iterable[str]) -> tuple[str, ...]:
        return tuple(sorted(events, key=self.rank.__getitem__))

    def check_assignment(self, assignment: Mapping[str, int]) -> None:
        for x, a in assignment.items():
            var = self.variables.get(x)
            if var is None:
                raise RegionError(f"unknown variable {x!r}")
            if not (isinstance(a, int) and 0 <= a < var.size):
                raise RegionError(f"value {a!r} out of domain for {x!r}")

    def vbl(self, region: Iterable[str]) -> frozenset[str]:
        out: set[str] = set()
        for e in region:
            out.update(self.events[e].vbl)
        return frozenset(out)


# dependency graph ------------------------------------------------------------


def dependency_graph(inst: LLLInstance) -> dict[str, frozenset[str]]:
    """Adjacency of the dependency graph: an edge iff two events share a variable."""
    return inst.adjacency


def _region(inst: LLLInstance, region: Iterable[str], allow_empty: bool = False) -> frozenset[str]:
    reg = frozenset(region)
    if not reg and not allow_empty:
        raise RegionError("region must be nonempty")
    for e in reg:
        if e not in inst.events:
            raise RegionError(f"unknown event {e!r}")
    return reg


def distances(inst: LLLInstance, region: Iterable[str]) -> dict[str, int]:
    """Multi-source BFS distances from ``region``; unreachable events omitted."""
    reg = _region(inst, region)
    key = ("dist", reg)
    hit = inst.memo.get(key)
    if hit is not None:
        return hit
    adj = inst.adjacency
    dist = {e: 0 for e in reg}
    queue = deque(reg)
    while queue:
        u = queue.popleft()
        du = dist[u] + 1
        for w in adj[u]:
            if w not in dist:
                dist[w] = du
                queue.append(w)
    inst.memo[key] = dist
    return dist


def ball(inst: LLLInstance, region: Iterable[str], r: int) -> frozenset[str]:
    """B_r(region): events at distance at most r."""
    if r < 0:
        raise RegionError("radius must be nonnegative")
    reg = _region(inst, region)
    key = ("ball", reg, r)
    hit = inst.memo.get(key)
    if hit is not None:
        return hit
    sh = shells(inst, reg)
    if r >= sh.event_depth:
        out = frozenset(sh.dist)
    else:
        out = frozenset(e for e, d in sh.dist.items() if d <= r)
    inst.memo[key] = out
    return out


class Shells:
    """Ring decomposition of the variables around a region."""

    def __init__(self, inst: LLLInstance, region: frozenset[str]):
        self.region = region
        self.dist = distances(inst, region)
        self.event_depth = max(self.dist.values())
        layer: dict[str, float] = {}
        for e, d in self.dist.items():
            for x in inst.events[e].vbl:
                if layer.get(x, INFINITY) > d:
                    layer[x] = d
        for x in inst.variables:
            layer.setdefault(x, INFINITY)
        self.layer = layer
        finite = [d for d in layer.values() if d != INFINITY]
        self.depth = int(max(finite)) if finite else 0
        rings: list[set[str]] = [set() for _ in range(self.depth + 1)]
        for x in inst.ordered(layer):
            d = layer[x]
            if d != INFINITY:
                rings[int(d)].add(x)
        self.rings = tuple(frozenset(r) for r in rings)
        self.ordered_rings = tuple(inst.ordered(r) for r in rings)
        self.unreachable = frozenset(x for x, d in layer.items() if d == INFINITY)
        self._inst = inst

    def ring(self, i: int) -> frozenset[str]:
        if i < 0:
            raise RegionError("ring index must be nonnegative")
        if i > self.depth:
            return frozenset()
        return self.rings[i]

    def ordered_ring(self, i: int) -> tuple[str, ...]:
        if i > self.depth:
            return ()
        return self.ordered_rings[i]

    def within(self, r: int) -> frozenset[str]:
        """vbl(B_r(region))."""
        key = ("within", self.region, r)
        memo = self._inst.memo
        hit = memo.get(key)
        if hit is None:
            hit = frozenset(x for x, d in self.layer.items() if d <= r)
            memo[key] = hit
        return hit

    def range(self, i: int, j: float) -> frozenset[str]:
        if i < 0 or i > j:
            raise RegionError(f"invalid ring range [{i}, {j}]")
        if j == INFINITY:
            return frozenset(x for x, d in self.layer.items() if d >= i)
        return frozenset(x for x, d in self.layer.items() if i <= d <= j)

    @property
    def saturated_at(self) -> int:
        """Smallest r such that ring r+1 is empty."""
        return self.depth


def shells(inst: LLLInstance, region: Iterable[str]) -> Shells:
    reg = _region(inst, region)
    key = ("shells", reg)
    hit = inst.memo.get(key)
    if hit is None:
        hit = Shells(inst, reg)
        inst.memo[key] = hit
    return hit


def ring(inst: LLLInstance, region: Iterable[str], i: int, j: float | None = None) -> frozenset[str]:
    """R_[i,j](region); ``j=None`` means j=i and ``j=INFINITY`` the open tail."""
    if j is None:
        j = i
    return shells(inst, region).range(i, j)


def events_meeting(inst: LLLInstance, vars_: Iterable[str]) -> frozenset[str]:
    out: set[str] = set()
    for x in vars_:
        out.update(inst.var_events[x])
    return frozenset(out)


def event_rings(
    inst: LLLInstance, region: Iterable[str], i: int, j: float | None = None
) -> tuple[frozenset[str], frozenset[str]]:
    """(E∩, E⊆): events meeting / contained in the ring range [i, j].

    Events with empty vbl meet nothing and are never counted as contained.
    """
    vars_ = ring(inst, region, i, j)
    meet = events_meeting(inst, vars_)
    contained = frozenset(e for e in meet if inst.events[e].vars <= vars_)
    return meet, contained


def restrict(
    inst: LLLInstance, events: Iterable[str], variables: Iterable[str]
) -> LLLInstance:
    """Instance keeping only the given events and variables, in original order."""
    ev = frozenset(events)
    vs = frozenset(variables)
    key = ("restrict", ev, vs)
    hit = inst.memo.get(key)
    if hit is not None:
        return hit
    out = LLLInstance(
        [v for x, v in inst.variables.items() if x in vs],
        [e for eid, e in inst.events.items() if eid in ev],
    )
    inst.memo[key] = out
    return out


def sub_instance(inst: LLLInstance, region: Iterable[str]) -> LLLInstance:
    """I(region): the events of ``region`` over the variables vbl(region)."""
    reg = _region(inst, region, allow_empty=True)
    return restrict(inst, reg, inst.vbl(reg))


def extend_instance(
    inst: LLLInstance,
    new_events: Sequence[BadEvent] = (),
    new_variables: Sequence[Variable] = (),
) -> LLLInstance:
    """Return a new instance with extra (synthetic) events and variables appended."""
    key = ("extend", tuple(new_events), tuple(new_variables))
    hit = inst.memo.get(key)
    if hit is not None:
        return hit
    for v in new_variables:
        if v.id in inst.variables:
            raise InstanceError(f"variable id {v.id!r} already in use")
    for e in new_events:
        if e.id in inst.events:
            raise InstanceError(f"event id {e.id!r} already in use")
    out = LLLInstance(
        list(inst.variables.values()) + list(new_variables),
        list(inst.events.values()) + list(new_events),
        gamma=inst.gamma,
        network=inst.network,
    )
    inst.memo[key] = out
    return out


def event_occurs(event: Any, values: Mapping[str, int]) -> bool:
    """Whether ``event`` (a BadEvent or anything with ``occurs``) occurs on ``values``."""
    return event.occurs(values)


def complement_event(inst: LLLInstance, event: BadEvent, id: str, origin: Any = None) -> BadEvent:
    """The event occurring exactly when ``event`` does not, over the same vbl."""
    scope = event.vbl
    forb = [t for t in inst.assignments(scope) if t not in event.forbidden]
    return BadEvent(id, scope, forb, synthetic="complement", origin=origin)


def components(inst: LLLInstance) -> tuple[frozenset[str], ...]:
    """Connected components of the dependency graph, ordered by smallest member."""
    key = ("components",)
    hit = inst.memo.get(key)
    if hit is not None:
        return hit
    seen: set[str] = set()
    out = []
    for e in inst.events:
        if e in seen:
            continue
        comp = frozenset(distances(inst, [e]))
        seen |= comp
        out.append(comp)
    res = tuple(out)
    inst.memo[key] = res
    return res


def component_of(inst: LLLInstance, event: str) -> frozenset[str]:
    for comp in components(inst):
        if event in comp:
            return comp
    raise RegionError(f"unknown event {event!r}")
