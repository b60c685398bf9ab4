from __future__ import annotations

import copy
import random

import pytest
from lllsample import InstanceError, InvariantViolation, Network, SamplerConfig, load_bundled
from lllsample.core import BadEvent, LLLInstance, Variable
from lllsample.pipeline import ClusteringPhase, _owners, committed_balls, initialization_phase, phase_parameters
from lllsample.runtime import (
    NodeMemory,
    cluster_diameter_bound,
    derive_rng,
    derive_seed,
    local_round_bound,
    network_decomposition,
    slocal_run_local_sim,
    slocal_run_sequential,
    variable_ownership,
)


def random_graph(n: int, p: float, seed: int) -> Network:
    rng = random.Random(seed)
    nodes = [f"v{i}" for i in range(n)]
    edges = [(a, b) for i, a in enumerate(nodes) for b in nodes[i + 1 :] if rng.random() < p]
    return Network.from_edges(nodes, edges)


def memories_for(net: Network, seed: int = 0) -> dict[str, NodeMemory]:
    return {v: NodeMemory(v, net.rank[v], derive_seed(seed, v)) for v in net.nodes}


class GreedyLabel:
    """Order-sensitive toy algorithm: label = 1 + largest label already written in the 1-ball."""

    scans = 1

    def process(self, ctx, v, scan):
        seen = [ctx.memory(w).state.get("label", 0) for w in ctx.net.ball(v, 1)]
        ctx.memory(v).state["label"] = 1 + max(seen)


class TestSeeds:
    def test_derive_seed_is_stable_and_separates(self):
        assert derive_seed(1, "node", "a") == derive_seed(1, "node", "a")
        assert derive_seed(1, "node", "a") != derive_seed(1, "node", "b")
        assert derive_rng(3, "x").random() == derive_rng(3, "x").random()


class TestDecomposition:
    def test_single_node(self):
        dec = network_decomposition(Network.from_edges(["a"], []))
        assert len(dec.clusters) == 1 and dec.n_colors == 1

    def test_path_fallback(self):
        net = Network.from_edges(["1", "2", "3"], [("1", "2"), ("2", "3")])
        dec = network_decomposition(net)
        assert dec.method == "components" and dec.clusters == (frozenset("123"),) and dec.n_colors == 1
        assert net.diameter(dec.clusters[0]) == 2

    @pytest.mark.parametrize("seed", range(100))
    def test_carving_invariants(self, seed):
        net = random_graph(50, 0.06, seed)
        dec = network_decomposition(net, random.Random(seed))
        assert dec.method == "carving"
        dec.validate(net)

    def test_bound(self):
        assert cluster_diameter_bound(1) == 1
        assert cluster_diameter_bound(16) == 8
        assert all(cluster_diameter_bound(n + 1) >= cluster_diameter_bound(n) for n in range(1, 500))


class TestOwnership:
    def test_path3(self, path3):
        assert variable_ownership(path3) == {"x1": "a", "x2": "a", "x3": "b"}

    def test_single_event(self, pair):
        assert variable_ownership(pair) == {"x1": "a", "x2": "a"}

    def test_orphan(self):
        inst = LLLInstance([Variable("x", ["1/2", "1/2"]), Variable("y", ["1/2", "1/2"])],
                           [BadEvent("a", ["x"], [(1,)])])
        with pytest.raises(InstanceError):
            variable_ownership(inst)

    @pytest.mark.parametrize("name", ["path3", "chain-4", "cycle-5", "chain-6", "two-component"])
    def test_partition(self, name):
        inst = load_bundled(name)
        owners = variable_ownership(inst)
        assert set(owners) == set(inst.variables)
        assert all(x in inst.events[e].vars for x, e in owners.items())


class TestSequential:
    def test_no_active_nodes(self):
        net = random_graph(10, 0.3, 1)
        mem = memories_for(net)
        out, log = slocal_run_sequential(GreedyLabel(), net, mem, [])
        assert out == mem and log.rounds == 0

    def test_replay_determinism(self):
        net = random_graph(20, 0.15, 4)
        for seed in range(100):
            active = sorted(random.Random(seed).sample(net.nodes, 6), key=net.rank.__getitem__)
            a, _ = slocal_run_sequential(GreedyLabel(), net, memories_for(net, seed), active)
            b, _ = slocal_run_sequential(GreedyLabel(), net, memories_for(net, seed), active)
            assert a == b

    def test_clustering_on_pair_commits_one_ball(self, pair):
        cfg = SamplerConfig()
        seed = next(s for s in range(100) if initialization_phase(pair, s, cfg)[2])
        memories, _, chosen, _ = initialization_phase(pair, seed, cfg)
        assert chosen == ("a",)
        net = Network.from_instance(pair)
        prm = phase_parameters(pair.n, 3 / 4, cfg)
        mem, _ = slocal_run_sequential(ClusteringPhase(pair, net, prm, _owners(pair), cfg), net, memories, chosen)
        assert [(v, p) for v, p, _ in committed_balls(net, mem, chosen)] == [("a", "a")]


class TestLocalSimulation:
    @pytest.mark.parametrize("seed", range(50))
    def test_matches_sequential(self, seed):
        rng = random.Random(seed)
        net = random_graph(24, 0.1, seed)
        active = rng.sample(net.nodes, rng.randint(1, 12))
        seq, log = slocal_run_sequential(GreedyLabel(), net, memories_for(net, seed), active)
        loc, rep = slocal_run_local_sim(GreedyLabel(), net, memories_for(net, seed), active)
        assert loc == seq
        assert rep.rounds <= rep.bound == local_round_bound(len(active), log.max_radius, net.n)

    def test_single_active_node(self):
        net = random_graph(12, 0.3, 0)
        _, rep = slocal_run_local_sim(GreedyLabel(), net, memories_for(net), [net.nodes[3]])
        assert not rep.canceled and len(rep.committed) == 1

    def test_does_not_mutate_input(self):
        net = random_graph(12, 0.3, 2)
        mem = memories_for(net)
        before = copy.deepcopy(mem)
        slocal_run_local_sim(GreedyLabel(), net, mem, net.nodes[:5])
        assert mem == before

    def test_unreachable_touch_is_an_error(self):
        net = Network.from_edges(["a", "b"], [])

        class Reach:
            scans = 1

            def process(self, ctx, v, scan):
                ctx.memory("b")

        with pytest.raises(InvariantViolation):
            slocal_run_sequential(Reach(), net, memories_for(net), ["a"])
