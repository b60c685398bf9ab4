"""Instance builders and hypothesis strategies shared by the tests."""

from __future__ import annotations

from fractions import Fraction
from itertools import product

from hypothesis import assume
from hypothesis import strategies as st

from lllsample import BadEvent, LLLInstance, Variable
from lllsample.oracle import sample_marginal

HALF = (Fraction(1, 2), Fraction(1, 2))


def pair_instance() -> LLLInstance:
    return LLLInstance([Variable("x1", HALF), Variable("x2", HALF)], [BadEvent("a", ["x1", "x2"], [(1, 1)])])


def chain(n: int, w: Fraction = Fraction(1, 2), forbid=((1, 1),)) -> LLLInstance:
    """Variables x1..xn with one event per consecutive pair."""
    variables = [Variable(f"x{i}", [w, 1 - w]) for i in range(1, n + 1)]
    events = [BadEvent(f"e{i}", [f"x{i}", f"x{i + 1}"], forbid) for i in range(1, n)]
    return LLLInstance(variables, events)


def rare_start_chain() -> LLLInstance:
    """Five variables with P(0) = 1/4 where a 0 followed by a 1 is forbidden."""
    return chain(5, Fraction(1, 4), forbid=((0, 1),))


def brute_weight(inst: LLLInstance, fixed=None) -> Fraction:
    """ν of the assignments avoiding every event and agreeing with ``fixed``, by full enumeration."""
    fixed = fixed or {}
    scope = list(inst.variables)
    total = Fraction(0)
    for t in product(*(range(inst.variables[x].size) for x in scope)):
        y = dict(zip(scope, t))
        if any(y[x] != a for x, a in fixed.items()):
            continue
        if any(ev.occurs(y) for ev in inst.events.values()):
            continue
        total += inst.nu(y)
    return total


@st.composite
def weights(draw, size: int):
    raw = draw(st.lists(st.integers(1, 6), min_size=size, max_size=size))
    s = sum(raw)
    return [Fraction(r, s) for r in raw]


@st.composite
def instances(draw, max_vars: int = 5, max_events: int = 4, satisfiable: bool = False):
    """Small random instances with domains of size 2 or 3."""
    n = draw(st.integers(1, max_vars))
    variables = []
    for i in range(n):
        size = draw(st.integers(2, 3))
        variables.append(Variable(f"x{i}", draw(weights(size))))
    m = draw(st.integers(1, max_events))
    events = []
    for j in range(m):
        k = draw(st.integers(1, min(3, n)))
        vbl = draw(st.permutations(range(n)))[:k]
        scope = [variables[i] for i in vbl]
        space = list(product(*(range(v.size) for v in scope)))
        forb = draw(st.lists(st.sampled_from(space), max_size=len(space) - 1, unique=True))
        events.append(BadEvent(f"e{j}", [v.id for v in scope], forb))
    inst = LLLInstance(variables, events)
    if satisfiable:
        assume(brute_weight(inst) > 0)
    return inst


def gibbs_start(inst, hat, region, rng):
    """Y_S ~ ν, the rest from μ of the augmented instance given Y_S (redrawn until feasible)."""
    S = inst.ordered(inst.vbl(frozenset(region)))
    rest = [x for x in inst.variables if x not in S]
    while True:
        Y = {x: inst.variables[x].draw(rng) for x in S}
        try:
            Y.update(sample_marginal(hat, Y, rest, rng))
            return Y
        except Exception:
            continue
