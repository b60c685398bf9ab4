from __future__ import annotations

import random
from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import chain, gibbs_start, rare_start_chain
from lllsample import InvariantViolation, ParameterError, RegionError, SamplerConfig, load_bundled
from lllsample.augmentation import augment
from lllsample.core import LLLInstance, Variable, extend_instance
from lllsample.oracle import avoid_probability, exact_distribution, sample_marginal
from lllsample.sampler import (
    LazyUniform,
    _ceil_log2,
    bernoulli,
    filter_probability,
    recursive_sampling,
    recursive_sampling_with_decay,
)
from lllsample.verification import DistributionReport, check_filter, global_filter_probability


class ScriptedBits:
    """Stand-in rng that replays fixed bits and counts how many were used."""

    def __init__(self, bits):
        self.bits = list(bits)
        self.used = 0

    def getrandbits(self, k):
        assert k == 1
        self.used += 1
        return self.bits.pop(0)


class TestLazyUniform:
    def test_one_bit_decides(self):
        rng = ScriptedBits([1])
        assert not LazyUniform().less_than(Fraction(1, 3), rng)
        assert rng.used == 1

    def test_straddling_interval_needs_third_bit(self):
        # after 0, 1 the interval [1/4, 1/2) still contains 1/3; a third bit 1 gives [3/8, 1/2)
        rng = ScriptedBits([0, 1, 1])
        assert not LazyUniform().less_than(Fraction(1, 3), rng)
        assert rng.used == 3

    def test_zero_threshold_draws_nothing(self):
        rng = ScriptedBits([])
        assert not LazyUniform().less_than(Fraction(0), rng)

    def test_reuse_is_consistent(self):
        rng = random.Random(5)
        rho = LazyUniform()
        lo = rho.less_than(Fraction(1, 3), rng)
        assert rho.less_than(Fraction(1, 2), rng) or not lo

    def test_law(self):
        rng = random.Random(11)
        runs = 40000
        hits = sum(LazyUniform().less_than(Fraction(2, 7), rng) for _ in range(runs))
        sigma = (Fraction(2, 7) * Fraction(5, 7) / runs) ** 0.5
        assert abs(hits / runs - 2 / 7) < 4 * float(sigma)


class TestBernoulli:
    def test_point_masses_consume_nothing(self):
        class NoRandom:
            def randrange(self, n):
                raise AssertionError("no randomness expected")

        assert bernoulli(Fraction(1), NoRandom()) and not bernoulli(Fraction(0), NoRandom())

    def test_exact_threshold(self):
        class Fixed:
            def __init__(self, u):
                self.u = u

            def randrange(self, n):
                assert n == 7
                return self.u

        assert [bernoulli(Fraction(3, 7), Fixed(u)) for u in range(7)] == [True] * 3 + [False] * 4


@given(st.integers(1, 10**6), st.integers(1, 10**6))
def test_ceil_log2(a, b):
    q = Fraction(max(a, b), min(a, b))
    k = _ceil_log2(q)
    assert 2**k >= q and (k == 0 or 2 ** (k - 1) < q)


def _augmented(inst, region, eps, gamma, delta, ell, eps0, tag="lambda0"):
    aug = augment(inst, region, eps, gamma, delta, ell, eps0)
    return extend_instance(inst, [aug.to_event(inst, tag)])


class TestFilter:
    def test_covering_ball_accepts(self, pair):
        assert filter_probability(pair, {"a"}, {"x1": 1, "x2": 1}, 1) == 1

    @pytest.mark.parametrize("radius", [0, 2, 3, 4])
    def test_local_equals_global_cex(self, radius):
        inst = load_bundled("chain-cex-6")
        hat = _augmented(inst, {"e1"}, "1/2", "9/10", "1/4", 3, 8)
        rep = check_filter(hat, {"e1"}, radius, "1/2", trials=0, geometry=inst)
        assert rep.ok, rep.failures

    def test_event_past_the_ring_is_refused(self):
        # the augmenting event spans rings 1..3, so at radius 1 it reaches past ring 2
        inst = load_bundled("chain-cex-6")
        hat = _augmented(inst, {"e1"}, "1/2", "9/10", "1/4", 3, 8)
        with pytest.raises(RegionError):
            filter_probability(hat, {"e1"}, dict.fromkeys(hat.variables, 1), 1, geometry=inst)

    @pytest.mark.parametrize("name", ["chain-4", "cycle-5", "chain-6"])
    def test_local_equals_global_bundled(self, name):
        inst = load_bundled(name)
        rep = check_filter(inst, {"e1"}, 1, "1/2", trials=0)
        assert rep.ok, rep.failures

    def test_unbounded_ratio_rejects(self):
        # Y_S = (0, 0) forces zeros along the chain, so the boundary x4 = 1 has no
        # extension under Y_S although μ allows it: sup f is infinite
        inst = chain(5, Fraction(1, 2), forbid=((0, 1),))
        Y = dict.fromkeys(inst.variables, 0)
        assert global_filter_probability(inst, {"e1"}, Y, 1) == 0
        assert filter_probability(inst, {"e1"}, Y, 1) == 0
        Y["x1"] = Y["x2"] = 1
        assert filter_probability(inst, {"e1"}, Y, 1) == global_filter_probability(inst, {"e1"}, Y, 1) > 0

    def test_full_cover_checks_nothing(self):
        # with S ∪ T = U no event is checked in the denominator, so f is the plain ν-ratio
        inst = chain(4, Fraction(1, 2), forbid=((0, 1),))
        Y = dict.fromkeys(inst.variables, 0)
        assert filter_probability(inst, {"e1"}, Y, 0) == global_filter_probability(inst, {"e1"}, Y, 0)

    def test_acceptance_floor(self, chain4):
        rep = check_filter(chain4, {"e1"}, 1, 1, trials=20000, seed=2)
        assert rep.ok, rep.failures
        assert rep.values["correlated"]

    def test_undefined_value_raises(self):
        inst = chain(5, Fraction(1, 2), forbid=((0, 1),))
        Y = {"x1": 0, "x2": 0, "x3": 0, "x4": 1, "x5": 1}  # Y_S rules out Y_T itself
        with pytest.raises(InvariantViolation):
            filter_probability(inst, {"e1"}, Y, 1)


def _with_decay_counts(inst, region, start, runs, seed0=0):
    scope = tuple(inst.variables)
    counts = Counter()
    for s in range(seed0, seed0 + runs):
        rng = random.Random(s)
        Y = dict(start)
        recursive_sampling_with_decay(Y, inst, region, rng)
        counts[tuple(Y[x] for x in scope)] += 1
    return counts


class TestWithDecay:
    def test_pair_from_violated_start(self, pair):
        runs = 2 * 10**5
        counts = _with_decay_counts(pair, {"a"}, {"x1": 1, "x2": 1}, runs)
        rep = DistributionReport.build(exact_distribution(pair), counts, runs, 0)
        assert rep.passed(), (rep.tv, rep.p_value)

    def test_empty_instance_keeps_nu(self):
        inst = LLLInstance([Variable("x", ["1/3", "2/3"])], [])
        Y = {"x": 1}
        assert recursive_sampling_with_decay(Y, inst, set(), random.Random(0)) == 0 and Y == {"x": 1}

    def test_chain_fromgibbs_start(self):
        # Y_S ~ ν on vbl(e1), rest from the conditional: the conditional Gibbs start
        inst = load_bundled("chain-cex-6")
        scope = tuple(inst.variables)
        S = ("x1", "x2")
        rest = [x for x in scope if x not in S]
        counts = Counter()
        runs = 20000
        for s in range(runs):
            rng = random.Random(s)
            while True:
                Y = {x: inst.variables[x].draw(rng) for x in S}
                try:
                    Y.update(sample_marginal(inst, Y, rest, rng))
                    break
                except Exception:
                    continue
            recursive_sampling_with_decay(Y, inst, {"e1"}, rng)
            counts[tuple(Y[x] for x in scope)] += 1
        rep = DistributionReport.build(exact_distribution(inst), counts, runs, 0)
        assert rep.p_value >= 1e-3, rep.p_value


def _recursive_law(inst, region, params, cfg, runs, hat_params):
    hat = _augmented(inst, region, *hat_params)
    scope = tuple(inst.variables)
    counts, branches = Counter(), Counter()
    for s in range(runs):
        rng = random.Random(s)
        Y = gibbs_start(inst, hat, region, rng)
        trace = []
        pot = recursive_sampling(Y, inst, region, *params, rng, cfg, trace)
        assert trace[0].reconstructed() == pot
        for rec in trace[0].walk():
            branches[(rec.depth, rec.branch)] += 1
        counts[tuple(Y[x] for x in scope)] += 1
    return DistributionReport.build(exact_distribution(inst), counts, runs, 0), branches


class TestRecursive:
    def test_degenerate_pair(self, pair):
        eps, g0 = Fraction(1, 16), Fraction(3, 32)
        delta = Fraction(1, 64) * Fraction(3, 4) / 24
        counts = Counter()
        runs = 20000
        for s in range(runs):
            Y = {"x1": 1, "x2": 1}
            trace = []
            assert recursive_sampling(Y, pair, {"a"}, eps, g0, delta, g0, random.Random(s), None, trace) == 0
            assert trace[0].branch == "accept" and trace[0].lo == trace[0].hi
            counts[(Y["x1"], Y["x2"])] += 1
        rep = DistributionReport.build(exact_distribution(pair), counts, runs, 0)
        assert rep.passed(), (rep.tv, rep.p_value)

    def test_whole_graph_is_single_resample(self, path3):
        Y = {"x1": 1, "x2": 1, "x3": 1}
        pot = recursive_sampling(Y, path3, {"a", "b"}, "1/2", "1/2", "1/1000", "1/2", random.Random(0))
        assert pot == 0 and not (Y["x1"] and Y["x2"]) and not (Y["x2"] and Y["x3"])

    def test_filter_failures_keep_law(self):
        inst = load_bundled("chain-cex-6")
        cfg = SamplerConfig(c0=Fraction(1, 10**6))
        params = (Fraction(1, 2), Fraction(1, 8), Fraction(1, 2**12), Fraction(1, 8))
        rep, branches = _recursive_law(inst, {"e1"}, params, cfg, 20000, params[:3] + (1, cfg.eps0))
        assert branches[(0, "filter-fail")] > 0
        assert rep.p_value >= 1e-3 and rep.tv <= 0.02, (rep.tv, rep.p_value)

    def test_complement_branch_keeps_law(self):
        inst = rare_start_chain()
        cfg = SamplerConfig(c0=Fraction(1, 3), eps0=8, zeta0=Fraction(9, 10))
        params = (Fraction(1, 2), Fraction(9, 10), Fraction(2, 5), Fraction(9, 20))
        rep, branches = _recursive_law(inst, {"e1"}, params, cfg, 20000, params[:3] + (3, cfg.eps0))
        assert branches[(0, "complement")] > 0
        assert rep.p_value >= 1e-3 and rep.tv <= 0.02, (rep.tv, rep.p_value)

    def test_golden_complement_trace(self):
        inst = rare_start_chain()
        cfg = SamplerConfig(c0=Fraction(1, 3), eps0=8, zeta0=Fraction(9, 10))
        eps, gamma, delta, alpha = Fraction(1, 2), Fraction(9, 10), Fraction(2, 5), Fraction(9, 20)
        hat = _augmented(inst, {"e1"}, eps, gamma, delta, 3, 8)
        rng = random.Random(46)
        Y = gibbs_start(inst, hat, {"e1"}, rng)
        trace = []
        pot = recursive_sampling(Y, inst, {"e1"}, eps, gamma, delta, alpha, rng, cfg, trace)
        root = trace[0]
        assert (root.branch, root.ell0, root.iterations, root.hi) == ("complement", 3, 1, "27/28")
        # R = 27/28: ⌈log2 28⌉ + 1
        assert root.surcharge == 6 and pot == 6
        # the degenerate interval is the exact avoid-probability of the augmenting event
        assert avoid_probability(inst, hat.events["lambda0"]) == Fraction(27, 28)
        child = root.children[0]
        assert child.delta == str(Fraction(9, 10) * alpha * Fraction(1, 28) / 2) == "81/11200"
        assert child.alpha == "9/560" and child.branch == "accept"

    @pytest.mark.parametrize(
        "params",
        [
            ("0", "1/2", "1/100", "1/2"),
            ("3/4", "1/2", "1/100", "1/2"),
            ("1/2", "1/2", "1/100", "3/4"),
            ("1/2", "1/2", "1/2", "1/2"),
        ],
    )
    def test_parameter_errors(self, path3, params):
        with pytest.raises(ParameterError):
            recursive_sampling({"x1": 0, "x2": 0, "x3": 0}, path3, {"a"}, *params, random.Random(0))

    def test_delta_bound_is_inclusive(self, path3):
        cfg = SamplerConfig()
        delta = cfg.zeta0 * Fraction(1, 2)
        recursive_sampling({"x1": 0, "x2": 0, "x3": 0}, path3, {"a"}, "1/2", "1/2", delta, "1/2",
                           random.Random(0), cfg)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_potential_matches_record_tree(seed):
    inst = load_bundled("chain-cex-6")
    cfg = SamplerConfig(c0=Fraction(1, 10**6))
    hat = _augmented(inst, {"e1"}, "1/2", "1/8", Fraction(1, 2**12), 1, cfg.eps0)
    rng = random.Random(seed)
    Y = gibbs_start(inst, hat, {"e1"}, rng)
    trace = []
    pot = recursive_sampling(Y, inst, {"e1"}, "1/2", "1/8", Fraction(1, 2**12), "1/8", rng, cfg, trace)
    assert trace[0].reconstructed() == pot
    assert not any(ev.occurs(Y) for ev in inst.events.values())
