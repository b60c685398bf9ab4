"""Exact rational enumeration of the probabilities the samplers need.

Everything reduces to one primitive, :func:`avoid_weight`: the product-measure
probability that a set of events is avoided given a partial assignment.  It
only enumerates the free variables the events touch, splits them into
independent components, and caches results on the instance.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from contextlib import contextmanager
from contextvars import ContextVar
from fractions import Fraction
from itertools import product
from typing import Iterable, Iterator, Mapping, Sequence

from .core import BadEvent, LLLInstance, event_rings, ring
from .errors import BudgetExceeded, InfeasibleBoundary, RegionError

DEFAULT_BUDGET = 1 << 24
_budget: ContextVar[int] = ContextVar("enumeration_budget", default=DEFAULT_BUDGET)


@contextmanager
def enumeration_budget(limit: int) -> Iterator[None]:
    """Temporarily change the maximum number of assignments one enumeration may visit."""
    if limit < 1:
        raise ValueError("budget must be positive")
    token = _budget.set(limit)
    try:
        yield
    finally:
        _budget.reset(token)


def current_budget() -> int:
    return _budget.get()


def _resolve(inst: LLLInstance, events: Iterable[BadEvent | str]) -> list[BadEvent]:
    out = []
    for e in events:
        out.append(inst.events[e] if isinstance(e, str) else e)
    return out


def _component_weight(
    inst: LLLInstance, free: list[str], evs: list[BadEvent], fixed: Mapping[str, int]
) -> Fraction:
    pos = {x: k for k, x in enumerate(free)}
    nums = []
    den = 1
    for x in free:
        ws, d = inst.variables[x].int_weights
        nums.append(ws)
        den *= d
    checks: list[list[tuple[frozenset, tuple]]] = [[] for _ in free]
    for ev in evs:
        spec = tuple((pos[x], 0) if x in pos else (-1, fixed[x]) for x in ev.vbl)
        last = max(p for p, _ in spec)
        checks[last].append((ev.forbidden, spec))
    vals = [0] * len(free)
    n = len(free)

    def rec(d: int) -> int:
        if d == n:
            return 1
        total = 0
        chk = checks[d]
        for a, wa in enumerate(nums[d]):
            vals[d] = a
            for forb, spec in chk:
                if tuple(vals[p] if p >= 0 else c for p, c in spec) in forb:
                    break
            else:
                total += wa * rec(d + 1)
        return total

    return Fraction(rec(0), den)


def avoid_weight(
    inst: LLLInstance,
    events: Iterable[BadEvent | str],
    fixed: Mapping[str, int] | None = None,
) -> Fraction:
    """Pr_{X~ν}[X avoids every given event | X agrees with ``fixed``].

    ``events`` may mix ids of ``inst`` with standalone BadEvent objects whose
    variables belong to ``inst``.  Variables outside the events are
    marginalized out and never enumerated.
    """
    evs = [e for e in _resolve(inst, events) if e.forbidden]
    fixed = fixed or {}
    relevant: set[str] = set()
    for e in evs:
        relevant.update(e.vbl)
    fx = {x: fixed[x] for x in relevant if x in fixed}
    key = ("avoid", frozenset(evs), frozenset(fx.items()))
    memo = inst.memo
    hit = memo.get(key)
    if hit is not None:
        return hit
    live: list[BadEvent] = []
    for e in evs:
        if e.vars.issubset(fx.keys()):
            if tuple(fx[x] for x in e.vbl) in e.forbidden:
                memo[key] = Fraction(0)
                return memo[key]
        else:
            live.append(e)
    # union-find over free variables
    parent: dict[str, str] = {}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in live:
        fv = [x for x in e.vbl if x not in fx]
        for x in fv:
            parent.setdefault(x, x)
        r0 = find(fv[0])
        for x in fv[1:]:
            rx = find(x)
            if rx != r0:
                parent[rx] = r0
    groups: dict[str, tuple[list[str], list[BadEvent]]] = {}
    for x in inst.ordered(parent):
        groups.setdefault(find(x), ([], []))[0].append(x)
    for e in live:
        root = find(next(x for x in e.vbl if x not in fx))
        groups[root][1].append(e)
    budget = _budget.get()
    for free, _ in groups.values():
        need = inst.count(free)
        if need > budget:
            raise BudgetExceeded(need, budget)
    result = Fraction(1)
    for free, gevs in groups.values():
        result *= _component_weight(inst, free, gevs, fx)
        if not result:
            break
    memo[key] = result
    return result


def _check_partial(inst: LLLInstance, tau: Mapping[str, int]) -> None:
    inst.check_assignment(tau)


def _unchecked(inst: LLLInstance, scope: Iterable[str]) -> list[BadEvent]:
    """Events whose vbl is not contained in ``scope``."""
    sc = frozenset(scope)
    return [e for e in inst.events.values() if not e.vars <= sc]


def omega_weight(inst: LLLInstance, tau: Mapping[str, int] | None = None) -> Fraction:
    """ν(Ω^τ): weight of full assignments extending τ that avoid every event with vbl ⊄ scope(τ)."""
    tau = tau or {}
    _check_partial(inst, tau)
    return inst.nu(tau) * avoid_weight(inst, _unchecked(inst, tau), tau)


def satisfiability(inst: LLLInstance) -> Fraction:
    """ν(Ω): probability that a product sample avoids every event."""
    return avoid_weight(inst, inst.events)


def _scope(inst: LLLInstance, S: Iterable[str]) -> tuple[str, ...]:
    if isinstance(S, (set, frozenset)):
        return inst.ordered(S)
    return tuple(S)


def marginal(
    inst: LLLInstance, tau: Mapping[str, int] | None, S: Iterable[str]
) -> dict[tuple[int, ...], Fraction]:
    """μ^τ_S as a table keyed by value tuples over ``S`` (set order = declaration order)."""
    tau = tau or {}
    scope = _scope(inst, S)
    if not scope:
        raise RegionError("marginal scope must be nonempty")
    if set(scope) & tau.keys():
        raise RegionError("marginal scope overlaps the conditioning scope")
    for x in scope:
        if x not in inst.variables:
            raise RegionError(f"unknown variable {x!r}")
    weights = _marginal_weights(inst, tau, scope)
    total = sum(weights)
    if total == 0:
        raise InfeasibleBoundary("boundary condition has no satisfying extension")
    return {t: w / total for t, w in zip(inst.assignments(scope), weights)}


def _marginal_weights(
    inst: LLLInstance, tau: Mapping[str, int], scope: tuple[str, ...]
) -> list[Fraction]:
    _check_partial(inst, tau)
    checked = _unchecked(inst, tau)
    out = []
    vars_ = [inst.variables[x] for x in scope]
    for t in inst.assignments(scope):
        fixed = dict(tau)
        w = Fraction(1)
        for x, var, a in zip(scope, vars_, t):
            fixed[x] = a
            w *= var.weights[a]
        out.append(w * avoid_weight(inst, checked, fixed))
    return out


class _Sampler:
    __slots__ = ("cum", "den", "tuples")

    def __init__(self, tuples: list[tuple[int, ...]], weights: Sequence[Fraction]):
        den = 1
        for w in weights:
            den = den * w.denominator // math.gcd(den, w.denominator)
        ints = [w.numerator * (den // w.denominator) for w in weights]
        cum = []
        acc = 0
        keep = []
        for t, w in zip(tuples, ints):
            if w:
                acc += w
                cum.append(acc)
                keep.append(t)
        if acc == 0:
            raise InfeasibleBoundary("boundary condition has no satisfying extension")
        self.cum = cum
        self.den = acc
        self.tuples = keep

    def draw(self, rng) -> tuple[int, ...]:
        if len(self.tuples) == 1:
            return self.tuples[0]
        return self.tuples[bisect_right(self.cum, rng.randrange(self.den))]


def sample_marginal(
    inst: LLLInstance, tau: Mapping[str, int] | None, S: Iterable[str], rng
) -> dict[str, int]:
    """Draw σ ~ μ^τ_S exactly using a single ``rng.randrange`` over a common denominator.

    Point masses consume no randomness.
    """
    tau = tau or {}
    scope = _scope(inst, S)
    if not scope:
        return {}
    checked = _unchecked(inst, tau)
    relevant: set[str] = set()
    for e in checked:
        relevant.update(e.vbl)
    key = (
        "sampler",
        scope,
        frozenset((x, a) for x, a in tau.items() if x in relevant),
        frozenset(tau.keys()),
    )
    sampler = inst.memo.get(key)
    if sampler is None:
        if set(scope) & tau.keys():
            raise RegionError("marginal scope overlaps the conditioning scope")
        tuples = list(inst.assignments(scope))
        sampler = _Sampler(tuples, _marginal_weights(inst, tau, scope))
        inst.memo[key] = sampler
    return dict(zip(scope, sampler.draw(rng)))


def sample_given(
    inst: LLLInstance,
    events: Sequence[BadEvent],
    fixed: Mapping[str, int],
    scope: Sequence[str],
    rng,
) -> dict[str, int]:
    """Draw σ on ``scope`` with probability ∝ ν(σ)·Pr[avoid ``events`` | fixed, σ].

    The caller chooses which events are checked; ``fixed`` only needs to
    cover the variables of those events that lie outside ``scope``.
    """
    scope = tuple(scope)
    if not scope:
        return {}
    relevant: set[str] = set()
    for e in events:
        relevant.update(e.vbl)
    key = (
        "given",
        frozenset(events),
        frozenset((x, fixed[x]) for x in relevant if x in fixed),
        scope,
    )
    sampler = inst.memo.get(key)
    if sampler is None:
        tuples = []
        weights = []
        vars_ = [inst.variables[x] for x in scope]
        for t in inst.assignments(scope):
            fx = dict(fixed)
            w = Fraction(1)
            for x, var, a in zip(scope, vars_, t):
                fx[x] = a
                w *= var.weights[a]
            tuples.append(t)
            weights.append(w * avoid_weight(inst, events, fx))
        sampler = _Sampler(tuples, weights)
        inst.memo[key] = sampler
    return dict(zip(scope, sampler.draw(rng)))


def avoid_probability(inst: LLLInstance, event: BadEvent) -> Fraction:
    """P = Pr_{X~μ_I}[X avoids ``event``]."""
    z = satisfiability(inst)
    if z == 0:
        raise InfeasibleBoundary("instance is unsatisfiable")
    return avoid_weight(inst, list(inst.events.values()) + [event]) / z


def partial_sat(
    inst: LLLInstance,
    region: Iterable[str],
    i: int,
    sigma: Mapping[str, int],
    j: int,
    tau: Mapping[str, int],
) -> Fraction:
    """Probability of avoiding the events meeting rings i+1..j-1 given the values on rings i and j."""
    if not 0 <= i < j:
        raise RegionError("partial_sat needs 0 <= i < j")
    reg = frozenset(region)
    if set(sigma) != ring(inst, reg, i) or set(tau) != ring(inst, reg, j):
        raise RegionError("boundary assignments must cover exactly rings i and j")
    if j == i + 1:
        return Fraction(1)
    meet, _ = event_rings(inst, reg, i + 1, j - 1)
    fixed = dict(sigma)
    fixed.update(tau)
    inst.check_assignment(fixed)
    return avoid_weight(inst, meet, fixed)


def _avoid_table(
    inst: LLLInstance, S: tuple[str, ...], T: tuple[str, ...]
) -> list[list[Fraction]]:
    checked = _unchecked(inst, set(S) | set(T))
    rows = []
    for s in inst.assignments(S):
        row = []
        for t in inst.assignments(T):
            fixed = dict(zip(S, s))
            fixed.update(zip(T, t))
            row.append(avoid_weight(inst, checked, fixed))
        rows.append(row)
    return rows


def _check_pair(inst: LLLInstance, S: Iterable[str], T: Iterable[str]) -> tuple[tuple, tuple]:
    s = inst.ordered(frozenset(S))
    t = inst.ordered(frozenset(T))
    if set(s) & set(t):
        raise RegionError("S and T must be disjoint")
    if set(s) | set(t) == set(inst.variables):
        raise RegionError("S and T must not cover every variable")
    return s, t


def correlation_ratio(inst: LLLInstance, S: Iterable[str], T: Iterable[str]) -> Fraction | None:
    """Largest ratio between the direct and crossed products of boundary weights.

    Returns None when some crossed product vanishes while its direct product
    does not (an unbounded ratio), and 1 when S or T is empty.
    """
    s, t = _check_pair(inst, S, T)
    if not s or not t:
        return Fraction(1)
    tab = _avoid_table(inst, s, t)
    # ν_S and ν_T factors cancel between the two sides
    worst = Fraction(0)
    ns, nt = len(tab), len(tab[0])
    for a in range(ns):
        for b in range(ns):
            ra, rb = tab[a], tab[b]
            for c in range(nt):
                for d in range(nt):
                    lhs = ra[c] * rb[d]
                    if not lhs:
                        continue
                    rhs = ra[d] * rb[c]
                    if not rhs:
                        return None
                    q = lhs / rhs
                    if q > worst:
                        worst = q
    return worst


def is_eps_correlated(
    inst: LLLInstance, S: Iterable[str], T: Iterable[str], eps: Fraction | int | str
) -> bool:
    """Whether S and T are ε-correlated: every direct product ≤ (1+ε) times the crossed one."""
    ratio = correlation_ratio(inst, S, T)
    if ratio is None:
        return False
    return ratio <= 1 + Fraction(eps)


def exact_distribution(inst: LLLInstance) -> dict[tuple[int, ...], Fraction]:
    """μ_I over full assignments (declaration order), support only."""
    scope = tuple(inst.variables)
    if not scope:
        return {(): Fraction(1)}
    need = inst.count(scope)
    if need > _budget.get():
        raise BudgetExceeded(need, _budget.get())
    z = satisfiability(inst)
    if z == 0:
        raise InfeasibleBoundary("instance is unsatisfiable")
    evs = list(inst.events.values())
    out = {}
    for t in product(*(range(inst.variables[x].size) for x in scope)):
        y = dict(zip(scope, t))
        if any(e.occurs(y) for e in evs):
            continue
        out[t] = inst.nu(y) / z
    return out
