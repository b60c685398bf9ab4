"""Local constructions: the augmenting event, the interval estimator and the ball substitution."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping

from .core import (
    BadEvent,
    LLLInstance,
    Variable,
    as_fraction,
    ball,
    complement_event,
    events_meeting,
    extend_instance,
    restrict,
    shells,
)
from .errors import (
    BudgetExceeded,
    InfeasibleBoundary,
    InvariantViolation,
    ParameterError,
    RegionError,
)
from .oracle import _Sampler, avoid_probability, avoid_weight, current_budget

DEFAULT_C0 = Fraction(1)
DEFAULT_EPS0 = Fraction(1, 8)
DEFAULT_ZETA0 = Fraction(1, 64)


def _log2(q: Fraction) -> float:
    # exact-ish for huge numerators / denominators, where float(q) would underflow
    return math.log2(q.numerator) - math.log2(q.denominator)


def ell0(eps: Any, gamma: Any, delta: Any, c0: Any = DEFAULT_C0) -> int:
    """Radius ⌈C0·log(2/ε)·log(2/γ)·log(1/δ)·log(2·log(2/ε)·log(2/γ)·log(1/δ))⌉, base 2, at least 1."""
    eps, gamma, delta, c0 = (as_fraction(v) for v in (eps, gamma, delta, c0))
    if not (0 < eps < 1 and 0 < gamma < 1):
        raise ParameterError(f"ell0 needs 0 < eps, gamma < 1 (got {eps}, {gamma})")
    if not 0 < delta < gamma / 2:
        raise ParameterError(f"ell0 needs 0 < delta < gamma/2 (got {delta}, gamma={gamma})")
    if c0 <= 0:
        raise ParameterError("C0 must be positive")
    return max(1, math.ceil(_ell0_value(eps, gamma, delta, c0)))


def _ell0_value(eps: Fraction, gamma: Fraction, delta: Fraction, c0: Fraction) -> float:
    """The unrounded radius formula, without the domain checks."""
    base = _log2(2 / eps) * _log2(2 / gamma) * _log2(1 / delta)
    return float(c0) * base * math.log2(2 * base)


def _min_gap(ell: int, delta: Fraction, eps0: Fraction) -> int:
    """Smallest integer g with g > (1/ε0)·log2(ℓ/δ), decided in exact arithmetic.

    g > D  ⟺  2^(g·p) > (ℓ/δ)^q  where ε0 = p/q.
    """
    p, q = eps0.numerator, eps0.denominator
    ratio = Fraction(ell) / delta
    rn, rd = ratio.numerator**q, ratio.denominator**q

    def exceeds(g: int) -> bool:
        return (1 << (g * p)) * rd > rn

    guess = max(0, int(_log2(ratio) / float(eps0)) - 2)
    while exceeds(guess) and guess > 0:
        guess -= 1
    while not exceeds(guess):
        guess += 1
    return guess


@dataclass(eq=False)
class AugmentingEvent:
    """The accumulated per-ring forbidden sets plus the containment condition.

    Occurs on Y iff Y avoids every event contained in rings 1..ℓ and Y hits
    some F_k on its ring (``always`` marks an empty ring whose F is the whole
    singleton space).
    """

    region: frozenset[str]
    ell: int
    rings: tuple[tuple[str, ...], ...]
    forbidden: tuple[frozenset[tuple[int, ...]], ...]
    always: bool
    contained: tuple[str, ...]
    gap: int
    params: dict[str, Any] = field(default_factory=dict)
    _events: dict = field(default_factory=dict, repr=False)
    _contained_events: tuple = field(default=(), repr=False)

    @property
    def vbl(self) -> tuple[str, ...]:
        return tuple(x for r in self.rings for x in r)

    @property
    def never(self) -> bool:
        return not self.always and not any(self.forbidden)

    def hits(self, values: Mapping[str, int]) -> bool:
        if self.always:
            return True
        for r, f in zip(self.rings, self.forbidden):
            if f and tuple(values[x] for x in r) in f:
                return True
        return False

    def occurs(self, values: Mapping[str, int]) -> bool:
        if not self.hits(values):
            return False
        return not any(e.occurs(values) for e in self._contained_events)

    def key(self) -> tuple:
        return (
            tuple(sorted(self.region)),
            self.ell,
            self.rings,
            tuple(tuple(sorted(f)) for f in self.forbidden),
            self.always,
            self.contained,
        )

    def to_event(self, inst: LLLInstance, id: str) -> BadEvent:
        """Compile to an extensional BadEvent over vbl = R_[1,ℓ]."""
        hit = self._events.get(id)
        if hit is not None:
            return hit
        scope = self.vbl
        forb: list[tuple[int, ...]] = []
        if not self.never:
            need = inst.count(scope)
            if need > current_budget():
                raise BudgetExceeded(need, current_budget())
            for t in inst.assignments(scope):
                if self.occurs(dict(zip(scope, t))):
                    forb.append(t)
        ev = BadEvent(id, scope, forb, synthetic="augment", origin=self.params)
        self._events[id] = ev
        return ev

    def complement(self, inst: LLLInstance, id: str, base_id: str) -> BadEvent:
        key = ("complement", id)
        hit = self._events.get(key)
        if hit is None:
            base = self.to_event(inst, base_id)
            need = inst.count(base.vbl)
            if need > current_budget():
                raise BudgetExceeded(need, current_budget())
            hit = complement_event(inst, base, id, origin=self.params)
            self._events[key] = hit
        return hit


def augment(
    inst: LLLInstance,
    region: Iterable[str],
    eps: Any,
    gamma: Any,
    delta: Any,
    ell: int,
    eps0: Any = DEFAULT_EPS0,
) -> AugmentingEvent:
    """Build the augmenting event around ``region`` as the least fixpoint of the ring updates.

    An assignment σ on ring i is forbidden once its expected partial
    satisfiability towards some ring j with j − i > D falls below δ/(2ℓ), and
    symmetrically for τ on ring j.  Adding forbidden assignments can only lower
    these expectations, so the update is monotone: every scan order reaches
    the same least fixpoint, and for each σ the extreme partner ring (j = ℓ,
    resp. i = 1) is the one that decides.
    """
    reg = frozenset(region)
    if not reg:
        raise RegionError("region must be nonempty")
    if ell < 1:
        raise ParameterError("ring radius must be at least 1")
    delta = as_fraction(delta)
    eps0 = as_fraction(eps0)
    if not 0 < delta < 1 or eps0 <= 0:
        raise ParameterError("augment needs 0 < delta < 1 and eps0 > 0")
    key = ("augment", reg, as_fraction(eps), as_fraction(gamma), delta, ell, eps0)
    hit = inst.memo.get(key)
    if hit is not None:
        return hit
    sh = shells(inst, reg)
    m = min(ell, sh.depth)
    rings = tuple(sh.ordered_ring(k) for k in range(1, m + 1))
    thr = delta / (2 * ell)
    gap = _min_gap(ell, delta, eps0)
    forb: list[set[tuple[int, ...]]] = [set() for _ in rings]
    ring_events: list[BadEvent | None] = [None] * len(rings)
    always = False

    def meet(a: int, b: int) -> list[BadEvent]:
        if a > b:
            return []
        return [inst.events[e] for e in inst.ordered_events(events_meeting(inst, sh.range(a, b)))]

    def ring_ev(k: int) -> BadEvent | None:
        # ring k is 1-based
        if not forb[k - 1]:
            return None
        ev = ring_events[k - 1]
        if ev is None or len(ev.forbidden) != len(forb[k - 1]):
            ev = BadEvent(f"ring{k}", rings[k - 1], forb[k - 1], synthetic="ring")
            ring_events[k - 1] = ev
        return ev

    def sandwich(a: int, b: int) -> list[BadEvent]:
        evs = meet(a, b)
        for k in range(a, min(b, m) + 1):
            ev = ring_ev(k)
            if ev is not None:
                evs.append(ev)
        return evs

    changed = True
    while changed:
        changed = False
        for i in range(1, m + 1):
            if ell - i <= gap - 1 or i >= ell:
                continue
            scope = rings[i - 1]
            for t in inst.assignments(scope):
                if t in forb[i - 1]:
                    continue
                if avoid_weight(inst, sandwich(i + 1, ell - 1), dict(zip(scope, t))) < thr:
                    forb[i - 1].add(t)
                    changed = True
        for j in range(2, m + 1):
            if j - 1 <= gap - 1:
                continue
            scope = rings[j - 1]
            for t in inst.assignments(scope):
                if t in forb[j - 1]:
                    continue
                if avoid_weight(inst, sandwich(2, j - 1), dict(zip(scope, t))) < thr:
                    forb[j - 1].add(t)
                    changed = True
        # empty rings m+1..ℓ share one representative, j = ℓ
        if not always and ell > m and ell >= 2 and ell - 1 > gap - 1:
            if avoid_weight(inst, sandwich(2, ell - 1)) < thr:
                always = True
                changed = True

    contained = ()
    cevents: tuple = ()
    if rings:
        vars_ = sh.range(1, ell)
        cont = [
            e
            for e in events_meeting(inst, vars_)
            if inst.events[e].vars <= vars_
        ]
        contained = inst.ordered_events(cont)
        cevents = tuple(inst.events[e] for e in contained)
    else:
        always = False  # no variables: the event can never occur
    out = AugmentingEvent(
        region=reg,
        ell=ell,
        rings=rings,
        forbidden=tuple(frozenset(f) for f in forb),
        always=always,
        contained=contained,
        gap=gap,
        params={
            "eps": str(as_fraction(eps)),
            "gamma": str(as_fraction(gamma)),
            "delta": str(delta),
            "ell": ell,
            "eps0": str(eps0),
        },
        _contained_events=cevents,
    )
    inst.memo[key] = out
    return out


def augment_weight(inst: LLLInstance, aug: AugmentingEvent) -> Fraction:
    """ν(A_λ) under the product measure."""
    ev = aug.to_event(inst, "__weight__")
    return 1 - avoid_weight(inst, [ev])


# interval estimation ---------------------------------------------------------


@dataclass(frozen=True)
class Interval:
    lo: Fraction
    hi: Fraction
    phat: Fraction
    eps_k: Fraction
    ell: int
    degenerate: bool
    truth: Fraction | None = None

    def __post_init__(self) -> None:
        if self.lo > self.hi:
            raise InvariantViolation(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def contains_truth(self) -> bool | None:
        if self.truth is None:
            return None
        return self.lo <= self.truth <= self.hi


def estimate_interval(
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
    mode: str = "estimate",
) -> Interval:
    """Certificate interval P̂ ± 2ε^k for P = Pr_{μ_I}[avoid ``event``].

    ``event`` must live on vbl(region).  When the ℓ-ball saturates the
    component the value is computed exactly and the interval is the point P.
    In ``oracle-check`` mode the exact P is attached and containment is
    enforced whenever it is guaranteed (saturated ball or C0 ≥ 1).
    """
    if k < 1:
        raise ParameterError("k must be a positive integer")
    if mode not in ("estimate", "oracle-check"):
        raise ParameterError(f"unknown interval mode {mode!r}")
    reg = frozenset(region)
    eps, alpha1, alpha2, c0 = (as_fraction(v) for v in (eps, alpha1, alpha2, c0))
    key = ("interval", reg, event, eps, k, alpha1, alpha2, as_fraction(eps0), c0, mode)
    hit = inst.memo.get(key)
    if hit is not None:
        return hit
    if not event.vars <= inst.vbl(reg):
        raise RegionError("estimated event must live on vbl(region)")
    ek = eps**k
    ell = ell0(ek, alpha2, alpha1 * ek, c0)
    sh = shells(inst, reg)
    if sh.depth <= ell:
        p = avoid_probability(inst, event)
        out = Interval(p, p, p, ek, ell, True, p if mode == "oracle-check" else None)
        inst.memo[key] = out
        return out
    aug = augment(inst, reg, ek, alpha2, alpha1 * ek, ell, eps0)
    w = aug.to_event(inst, "w")
    checked = [inst.events[e] for e in inst.ordered_events(events_meeting(inst, sh.within(ell)))]
    checked.append(w)
    den = avoid_weight(inst, checked)
    if den == 0:
        raise InfeasibleBoundary("estimator denominator vanished (satisfiability precondition violated)")
    phat = avoid_weight(inst, checked + [event]) / den
    lo = max(Fraction(0), phat - 2 * ek)
    hi = min(Fraction(1), phat + 2 * ek)
    truth = None
    if mode == "oracle-check":
        truth = avoid_probability(inst, event)
        if c0 >= 1 and not lo <= truth <= hi:
            raise InvariantViolation(
                f"estimate [{lo}, {hi}] misses P = {truth} (k={k}, ell={ell})"
            )
    out = Interval(lo, hi, phat, ek, ell, False, truth)
    inst.memo[key] = out
    return out


# substitution ----------------------------------------------------------------


@dataclass(eq=False)
class Substitution:
    """A ball replaced by one variable β and one event κ that keep outside marginals exact."""

    region: frozenset[str]
    ell: int
    ring: tuple[str, ...]
    table: dict[tuple[int, ...], Fraction]
    levels: tuple[tuple[int, ...], ...]
    beta: Variable
    kappa: BadEvent
    hat: LLLInstance
    reduced: LLLInstance
    augmenting: AugmentingEvent
    _samplers: dict = field(default_factory=dict, repr=False)

    def beta_given(self, ring_values: Mapping[str, int], rng) -> int:
        """Draw β from its conditional law given the ring values (only κ touches β)."""
        pr = self.table[tuple(ring_values[x] for x in self.ring)]
        sampler = self._samplers.get(pr)
        if sampler is None:
            values = list(range(self.beta.size))
            weights = [
                w if self.table[self.levels[b]] <= pr else Fraction(0)
                for b, w in zip(values, self.beta.weights)
            ]
            sampler = _Sampler([(b,) for b in values], weights)
            self._samplers[pr] = sampler
        return sampler.draw(rng)[0]


def substitute(
    inst: LLLInstance,
    region: Iterable[str],
    sigma: Mapping[str, int],
    eps: Any,
    gamma: Any,
    delta: Any,
    ell: int,
    *,
    eps0: Any = DEFAULT_EPS0,
    tag: str = "",
) -> Substitution:
    """Replace the ℓ-ball around ``region`` (pinned to σ on vbl(region)) by β and κ."""
    reg = frozenset(region)
    if not reg:
        raise RegionError("region must be nonempty")
    s_vars = inst.vbl(reg)
    if set(sigma) != s_vars:
        raise RegionError("sigma must cover exactly vbl(region)")
    inst.check_assignment(sigma)
    key = ("substitute", reg, frozenset(sigma.items()), as_fraction(eps), as_fraction(gamma),
           as_fraction(delta), ell, as_fraction(eps0), tag)
    hit = inst.memo.get(key)
    if hit is not None:
        return hit
    aug = augment(inst, reg, eps, gamma, delta, ell, eps0)
    lam = aug.to_event(inst, f"lambda{tag}")
    hat = extend_instance(inst, [lam])
    sh = shells(inst, reg)
    inner = sh.within(ell)
    ring_vars = inst.ordered(sh.ring(ell + 1))
    checked_ids = events_meeting(inst, inner - s_vars)
    checked = [inst.events[e] for e in inst.ordered_events(checked_ids)]
    if lam.vars & (inner - s_vars):
        checked.append(lam)
    table: dict[tuple[int, ...], Fraction] = {}
    for t in inst.assignments(ring_vars):
        fixed = dict(sigma)
        fixed.update(zip(ring_vars, t))
        table[t] = avoid_weight(hat, checked, fixed)
    order = sorted(table, key=lambda t: (table[t], t))
    pmax = table[order[-1]]
    if pmax == 0:
        raise InfeasibleBoundary("no feasible extension of the pinned ball")
    levels = []
    weights = []
    prev = Fraction(0)
    for t in order:
        w = (table[t] - prev) / pmax
        prev = table[t]
        if w > 0:
            levels.append(t)
            weights.append(w)
    beta = Variable(f"beta{tag}", weights, synthetic="beta", origin={"region": sorted(reg)})
    forb = [
        t + (b,)
        for t in inst.assignments(ring_vars)
        for b, lv in enumerate(levels)
        if table[t] < table[lv]
    ]
    kappa = BadEvent(
        f"kappa{tag}", ring_vars + (beta.id,), forb, synthetic="kappa",
        origin={"region": sorted(reg)},
    )
    outer_events = set(inst.events) - ball(inst, reg, ell + 1)
    outer_vars = set(inst.variables) - inner
    base = restrict(inst, outer_events, outer_vars)
    reduced = extend_instance(base, [kappa], [beta])
    out = Substitution(
        region=reg,
        ell=ell,
        ring=ring_vars,
        table=table,
        levels=tuple(levels),
        beta=beta,
        kappa=kappa,
        hat=hat,
        reduced=reduced,
        augmenting=aug,
    )
    inst.memo[key] = out
    return out
