"""Bayes filter, the with-decay sampler and the recursive sampler with potential accounting."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, MutableMapping

from .augmentation import (
    DEFAULT_C0,
    DEFAULT_EPS0,
    DEFAULT_ZETA0,
    augment,
    ell0,
    estimate_interval,
)
from .core import LLLInstance, as_fraction, ball, events_meeting, extend_instance, shells
from .errors import InvariantViolation, ParameterError, RegionError
from .oracle import DEFAULT_BUDGET, avoid_weight, enumeration_budget, sample_given

MODES = ("estimate", "oracle-check")


@dataclass(frozen=True)
class SamplerConfig:
    """Constants of the sampler; all rationals."""

    c0: Fraction = DEFAULT_C0
    eps0: Fraction = DEFAULT_EPS0
    zeta0: Fraction = DEFAULT_ZETA0
    d: int = 2
    mode: str = "estimate"
    budget: int = DEFAULT_BUDGET

    def __post_init__(self) -> None:
        for name in ("c0", "eps0", "zeta0"):
            object.__setattr__(self, name, as_fraction(getattr(self, name)))
        if not 0 < self.zeta0 < 1:
            raise ParameterError("zeta0 must lie in (0, 1)")
        if self.eps0 <= 0 or self.c0 <= 0:
            raise ParameterError("eps0 and C0 must be positive")
        if self.d < 1:
            raise ParameterError("d must be a positive integer")
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}")
        if self.budget < 1:
            raise ParameterError("budget must be positive")


class LazyUniform:
    """A uniform ρ in [0,1) realized one random bit at a time.

    The current knowledge is the dyadic interval [num/2^bits, (num+1)/2^bits).
    """

    __slots__ = ("num", "bits")

    def __init__(self) -> None:
        self.num = 0
        self.bits = 0

    def less_than(self, t: Fraction, rng) -> bool:
        """Decide ρ < t, drawing only the bits needed to separate ρ from t."""
        t = Fraction(t)
        if not 0 <= t <= 1:
            raise ParameterError("threshold must lie in [0, 1]")
        p, q = t.numerator, t.denominator
        while True:
            scale = 1 << self.bits
            if (self.num + 1) * q <= p * scale:
                return True
            if self.num * q >= p * scale:
                return False
            self.num = 2 * self.num + rng.getrandbits(1)
            self.bits += 1


# Bayes filter -----------------------------------------------------------------


@dataclass(eq=False)
class _FilterPlan:
    inner: tuple[str, ...]
    ring: tuple[str, ...]
    s_vars: tuple[str, ...]
    checked: tuple  # events whose vbl meets vbl(B_radius)
    checked_h: tuple  # events whose vbl meets vbl(B_radius) minus S
    tables: dict = field(default_factory=dict)


def _plan(hat: LLLInstance, geom: LLLInstance, region: frozenset[str], radius: int) -> _FilterPlan:
    key = ("filter-plan", geom, region, radius)
    plan = hat.memo.get(key)
    if plan is None:
        sh = shells(geom, region)
        inner = sh.within(radius)
        s_vars = sh.within(0)
        ring = sh.ring(radius + 1)
        checked = hat.ordered_events(events_meeting(hat, inner))
        outer = sh.within(radius + 1)
        for e in checked:
            if not hat.events[e].vars <= outer:
                # f would depend on T beyond the ring, so the local maximum is not the global one
                raise RegionError(f"Bayes filter: event {e!r} reaches past ring {radius + 1}")
        checked_h = hat.ordered_events(events_meeting(hat, inner - s_vars))
        plan = _FilterPlan(
            inner=hat.ordered(inner),
            ring=hat.ordered(ring),
            s_vars=hat.ordered(s_vars),
            checked=tuple(hat.events[e] for e in checked),
            checked_h=tuple(hat.events[e] for e in checked_h),
        )
        hat.memo[key] = plan
    return plan


def filter_probability(
    hat: LLLInstance,
    region: Iterable[str],
    Y,
    radius: int,
    geometry: LLLInstance | None = None,
) -> Fraction:
    """Exact acceptance probability f(Y_T)/max f of the Bayes filter.

    f(τ) = ν(Ω^τ)/ν(Ω^{Y_S ∧ τ}) with S = vbl(region) and
    T = U ∖ vbl(B_radius(region)); it only depends on τ restricted to the
    ring radius+1, so the maximum is taken over that ring.  Balls are measured
    in ``geometry`` (defaults to ``hat``).
    """
    geom = hat if geometry is None else geometry
    reg = frozenset(region)
    plan = _plan(hat, geom, reg, radius)
    if not plan.ring:
        return Fraction(1)
    ys = tuple(Y[x] for x in plan.s_vars)
    table = plan.tables.get(ys)
    if table is None:
        fvals: dict[tuple[int, ...], Fraction] = {}
        unbounded = False
        for t in hat.assignments(plan.ring):
            fx = dict(zip(plan.ring, t))
            g = avoid_weight(hat, plan.checked, fx)
            fx.update(zip(plan.s_vars, ys))
            h = avoid_weight(hat, plan.checked_h, fx)
            if h > 0:
                fvals[t] = g / h
            elif g > 0:
                # Y_S rules out a boundary that μ allows: sup f is infinite
                unbounded = True
        if not fvals:
            raise InvariantViolation("Bayes filter: max f undefined (no feasible boundary)")
        fmax = max(fvals.values())
        if fmax == 0:
            raise InvariantViolation("Bayes filter: max f = 0")
        if unbounded:
            table = dict.fromkeys(fvals, Fraction(0))
        else:
            table = {t: v / fmax for t, v in fvals.items()}
        plan.tables[ys] = table
    yr = tuple(Y[x] for x in plan.ring)
    prob = table.get(yr)
    if prob is None:
        raise InvariantViolation("Bayes filter: f(Y_T) undefined for the current assignment")
    return prob


def bernoulli(p: Fraction, rng) -> bool:
    """Exact Bernoulli(p) for rational p; p ∈ {0, 1} consumes no randomness."""
    if p >= 1:
        return True
    if p <= 0:
        return False
    return rng.randrange(p.denominator) < p.numerator


def bayes_filter(
    hat: LLLInstance,
    region: Iterable[str],
    Y,
    radius: int,
    rng,
    geometry: LLLInstance | None = None,
) -> bool:
    """Succeed with probability exactly f(Y_T)/max f."""
    return bernoulli(filter_probability(hat, region, Y, radius, geometry), rng)


def resample_inside(
    Y: MutableMapping[str, int],
    hat: LLLInstance,
    region: Iterable[str],
    radius: int,
    rng,
    geometry: LLLInstance | None = None,
) -> None:
    """Redraw Y on vbl(B_radius(region)) from μ_hat conditioned on the values outside."""
    geom = hat if geometry is None else geometry
    plan = _plan(hat, geom, frozenset(region), radius)
    fixed = {x: Y[x] for x in plan.ring}
    Y.update(sample_given(hat, plan.checked, fixed, plan.inner, rng))


# with-decay sampler -------------------------------------------------------------


def recursive_sampling_with_decay(
    Y: MutableMapping[str, int],
    inst: LLLInstance,
    region: Iterable[str],
    rng,
) -> int:
    """Filter at radius 1; on failure retry around the 2-ball.  Returns the number of failures."""
    reg = frozenset(region)
    failures = 0
    if not inst.events:
        return 0
    while True:
        if bayes_filter(inst, reg, Y, 1, rng):
            resample_inside(Y, inst, reg, 1, rng)
            return failures
        failures += 1
        reg = ball(inst, reg, 2)


# recursive sampler ---------------------------------------------------------------


@dataclass
class CallRecord:
    depth: int
    region_size: int
    eps: str
    gamma: str
    delta: str
    alpha: str
    ell0: int
    iterations: int = 0
    branch: str = ""
    grow_steps: int = 0
    radius: int | None = None
    lo: str = "0"
    hi: str = "1"
    surcharge: int = 0
    potential: int = 0
    children: list["CallRecord"] = field(default_factory=list)

    def reconstructed(self) -> int:
        """Potential recomputed from the record tree alone."""
        total = (self.iterations - 1) + self.grow_steps + self.surcharge
        return total + sum(c.reconstructed() for c in self.children)

    def as_dict(self) -> dict[str, Any]:
        out = {k: v for k, v in self.__dict__.items() if k != "children"}
        out["children"] = [c.as_dict() for c in self.children]
        return out

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()


def recursive_sampling(
    Y: MutableMapping[str, int],
    inst: LLLInstance,
    region: Iterable[str],
    eps: Any,
    gamma: Any,
    delta: Any,
    alpha: Any,
    rng,
    config: SamplerConfig | None = None,
    trace: list[CallRecord] | None = None,
    depth: int = 0,
) -> int:
    """Recursive sampling with zones of indecision; returns the potential 𝒫.

    On return Y follows μ_inst provided (Y, region) satisfied the augmented
    conditional Gibbs property on entry.
    """
    cfg = config or SamplerConfig()
    with enumeration_budget(cfg.budget):
        return _recursive(Y, inst, frozenset(region), as_fraction(eps), as_fraction(gamma),
                          as_fraction(delta), as_fraction(alpha), rng, cfg, trace, depth)


def _recursive(Y, inst, reg, eps, gamma, delta, alpha, rng, cfg, trace, depth) -> int:
    # the child calls land exactly on delta = zeta0*alpha, so the bound is inclusive
    if not (0 < eps <= Fraction(1, 2) and 0 < alpha <= gamma < 1 and 0 < delta <= cfg.zeta0 * alpha):
        raise ParameterError(
            f"recursive sampling needs 0<eps<=1/2, 0<alpha<=gamma<1, 0<delta<=zeta0*alpha "
            f"(eps={eps}, gamma={gamma}, delta={delta}, alpha={alpha})"
        )
    ell = ell0(eps, gamma, delta, cfg.c0)
    rec = CallRecord(depth, len(reg), str(eps), str(gamma), str(delta), str(alpha), ell)
    if trace is not None:
        trace.append(rec)
    zeta0 = cfg.zeta0
    aug = augment(inst, reg, eps, gamma, delta, ell, cfg.eps0)
    lam = aug.to_event(inst, f"lambda{depth}")
    hat = extend_instance(inst, [lam])
    est_region = ball(inst, reg, ell)
    rho = LazyUniform()
    potential = 0
    lo, hi = Fraction(0), Fraction(1)
    i = 1
    while True:
        iv = estimate_interval(inst, est_region, lam, zeta0, i, alpha, gamma,
                               eps0=cfg.eps0, c0=cfg.c0, mode=cfg.mode)
        lo, hi = max(lo, iv.lo), min(hi, iv.hi)
        if lo > hi:
            raise InvariantViolation(f"interval intersection became empty at iteration {i}")
        rec.iterations, rec.lo, rec.hi = i, str(lo), str(hi)
        if rho.less_than(lo, rng):
            if bayes_filter(hat, reg, Y, ell, rng, geometry=inst):
                resample_inside(Y, hat, reg, ell, rng, geometry=inst)
                rec.branch = "accept"
                rec.potential = potential
                return potential
            rec.branch = "filter-fail"
            child_delta = zeta0 * alpha / 2
            r, steps = _grow(Y, inst, hat, reg, ell, gamma, child_delta, cfg)
            potential += steps
            rec.grow_steps, rec.radius = steps, r
            child = ball(inst, reg, r) | {lam.id}
            sub: list[CallRecord] = []
            potential += _recursive(Y, hat, child, Fraction(1, 2), gamma, child_delta,
                                    alpha / 2, rng, cfg, sub, depth + 1)
            rec.children.extend(sub)
            rec.potential = potential
            return potential
        if not rho.less_than(hi, rng):
            rec.branch = "complement"
            bar = aug.complement(inst, f"lambdabar{depth}", f"lambda{depth}")
            hat2 = extend_instance(inst, [bar])
            child_delta = zeta0 * alpha * (1 - hi) / 2
            s, steps = _grow(Y, inst, hat2, reg, ell, gamma, child_delta, cfg)
            potential += steps
            rec.grow_steps, rec.radius = steps, s
            surcharge = _ceil_log2(1 / (1 - hi)) + 1
            potential += surcharge
            rec.surcharge = surcharge
            child = ball(inst, reg, s) | {bar.id}
            sub = []
            potential += _recursive(Y, hat2, child, Fraction(1, 2), gamma, child_delta,
                                    alpha * (1 - hi), rng, cfg, sub, depth + 1)
            rec.children.extend(sub)
            rec.potential = potential
            return potential
        i += 1
        potential += 1


def _ceil_log2(q: Fraction) -> int:
    """⌈log2 q⌉ for a rational q ≥ 1, exactly."""
    k = max(0, q.numerator.bit_length() - q.denominator.bit_length() - 1)
    while Fraction(1 << k) < q:
        k += 1
    return k


def _grow(Y, inst, hat, reg, ell, gamma, child_delta, cfg) -> tuple[int, int]:
    """Grow r from ℓ0+1 in steps of ℓ0(1/2, γ, δ') until Y avoids the child's augmenting event."""
    step = ell0(Fraction(1, 2), gamma, child_delta, cfg.c0)
    r = ell + 1
    steps = 0
    while True:
        region = ball(inst, reg, r)
        a = augment(hat, region, Fraction(1, 2), gamma, child_delta, step, cfg.eps0)
        if not a.occurs(Y):
            return r, steps
        r += step
        steps += 1
