import json
import random

import numpy as np
import pytest

from scrubsim.defense_graphs import (
    ANALYSIS,
    RESPONSE,
    AnnotatedGraph,
    AttackType,
    LogicalModule,
    builtin_library,
    build_physical_graph,
    ordered_graphs,
)
from scrubsim.errors import CapacityError, PinConflictError
from scrubsim.orchestration import (
    TagPool,
    assign_tags,
    build_tag_pools,
    load_balance_pick,
    pin_bidirectional,
    pin_bidirectional_for_graph,
    plan_realizes_edges,
    rule_count_comparison,
    synthesize_rules,
    tag_space_bound,
)
from scrubsim.resource_manager import dsp_greedy, place_all
from scrubsim.topology import Datacenter, Pop, Rack, Server, Topology

ATK = AttackType(0, "atk0")


def two_context_graph():
    """Analysis node tagging benign (to customer) vs attack (to a dropper)."""
    return AnnotatedGraph(
        attack=ATK,
        nodes=[LogicalModule(0, "a1", ANALYSIS, 10.0, contexts=2, delivers=True),
               LogicalModule(1, "r_drop", RESPONSE, 10.0, contexts=1)],
        edges=[(0, 1, 0.5)],
    )


def two_branch_graph():
    return AnnotatedGraph(
        attack=ATK,
        nodes=[LogicalModule(0, "a1", ANALYSIS, 10.0, contexts=2),
               LogicalModule(1, "r_ok", RESPONSE, 10.0, contexts=1, delivers=True),
               LogicalModule(2, "r_log", RESPONSE, 10.0, contexts=1)],
        edges=[(0, 1, 0.5), (0, 2, 0.5)],
    )


def small_topo(n_dcs=1):
    racks = (Rack(0, (Server(0, 50), Server(1, 50))),)
    dcs = [Datacenter(id=d, link_capacity_gbps=999.0, racks=racks, attach_pop=0)
           for d in range(n_dcs)]
    return Topology(pops=[Pop(0, "p0")], datacenters=dcs,
                    latency=[[1.0 + d for d in range(n_dcs)]],
                    backbone_links=[],
                    paths={(0, d): [] for d in range(n_dcs)})


class TestAssignTags:
    def test_one_downstream_per_context(self):
        g = two_branch_graph()
        lib = {ATK: g}
        pg = build_physical_graph(g, 0, 10.0, {0: 1, 1: 1, 2: 1})
        pools = assign_tags(pg, lib)
        a1 = (0, 0, 0, 0)
        assert pools.pool(a1, 0) == [1]  # context 0 -> r_ok's instance
        assert pools.pool(a1, 1) == [2]  # context 1 -> r_log's instance

    def test_pool_has_one_tag_per_downstream_instance(self):
        g = two_context_graph()
        lib = {ATK: g}
        pg = build_physical_graph(g, 0, 40.0, {0: 2, 1: 2})
        pools = assign_tags(pg, lib)
        for idx in range(2):
            pool = pools.pool((0, 0, 0, idx), 0)
            assert len(pool) == 2
            assert len(set(pool)) == 2
        # Both upstream instances share the downstream identity tags.
        assert pools.pool((0, 0, 0, 0), 0) == pools.pool((0, 0, 0, 1), 0)

    def test_single_node_single_context(self):
        g = AnnotatedGraph(attack=ATK,
                           nodes=[LogicalModule(0, "m", ANALYSIS, 10.0,
                                                contexts=1, delivers=True)],
                           edges=[])
        pg = build_physical_graph(g, 0, 5.0, {0: 1})
        pools = assign_tags(pg, {ATK: g})
        assert len(pools.pool((0, 0, 0, 0), 0)) == 1

    def test_deterministic_per_seed(self):
        g = two_branch_graph()
        lib = {ATK: g}
        pg = build_physical_graph(g, 0, 40.0, {0: 2, 1: 3, 2: 2})
        a = assign_tags(pg, lib, seed=5)
        b = assign_tags(pg, lib, seed=5)
        assert a.pools == b.pools
        c = assign_tags(pg, lib, seed=6)
        assert a.pools != c.pools  # different numbering, same structure

    def test_tag_space_exhaustion(self):
        g = two_branch_graph()
        pg = build_physical_graph(g, 0, 100.0, {0: 4, 1: 4, 2: 4})
        with pytest.raises(CapacityError):
            assign_tags(pg, {ATK: g}, max_bits=2)

    def test_shared_pool_keeps_tags_unique(self):
        lib = builtin_library()
        topo = small_topo(2)
        graphs = ordered_graphs(lib)
        traffic = np.zeros((1, len(graphs)))
        traffic[0, :] = 20.0
        dsp = dsp_greedy(topo, traffic, lib)
        pools = build_tag_pools(dsp.physical, lib)
        tags = list(pools.instance_tags.values()) + list(pools.egress_tags.values())
        assert len(tags) == len(set(tags))


class TestTagSpaceBound:
    def test_paper_bit_count(self):
        # A graph set whose bound lands exactly on 800 needs 10 bits.
        g = AnnotatedGraph(
            attack=ATK,
            nodes=[LogicalModule(i, f"n{i}", ANALYSIS, 5.0, contexts=2)
                   for i in range(4)] +
                  [LogicalModule(4, "leaf", RESPONSE, 10.0, contexts=1)],
            edges=[(i, i + 1, 1.0) for i in range(4)],
        )
        graphs = [g, g]  # 8 emitting vertices total
        max_tags, bits = tag_space_bound(graphs, l_max=50, k_max=2)
        assert max_tags == 800
        assert bits == 10

    def test_single_node_graph(self):
        g = AnnotatedGraph(attack=ATK,
                           nodes=[LogicalModule(0, "m", ANALYSIS, 5.0,
                                                contexts=1, delivers=True)],
                           edges=[])
        assert tag_space_bound([g], l_max=1, k_max=1) == (1, 0)

    def test_linear_in_l_max(self):
        graphs = list(builtin_library().values())
        m1, _ = tag_space_bound(graphs, l_max=10)
        m2, _ = tag_space_bound(graphs, l_max=20)
        assert m2 == 2 * m1

    def test_builtin_within_budget(self):
        graphs = list(builtin_library().values())
        max_tags, bits = tag_space_bound(graphs, l_max=50, k_max=2)
        assert max_tags <= 800
        assert bits <= 10


class TestSynthesizeRules:
    def _plan(self, g, traffic_gbps=10.0):
        lib = {g.attack: g}
        topo = small_topo()
        traffic = np.array([[traffic_gbps]])
        dsp = dsp_greedy(topo, traffic, lib)
        ssps = place_all(topo, dsp, lib)
        pools = build_tag_pools(dsp.physical, lib)
        plan = synthesize_rules(dsp, ssps, pools, topo, lib)
        return dsp, pools, plan

    def test_two_rules_at_branching_switch(self):
        # 1000 suspicious flows through a 2-way context need exactly two
        # intra-datacenter rules: one per tag value.
        dsp, pools, plan = self._plan(two_context_graph(), traffic_gbps=10.0)
        assert len(plan.dc_tables["dc0"]) == 2

    def test_rule_counts_flow_independent(self):
        _dsp, _pools, plan = self._plan(two_branch_graph())
        counts = [rule_count_comparison(plan, n)[0] for n in (0, 100, 200000)]
        assert counts[0] == counts[1] == counts[2]
        assert rule_count_comparison(plan, 0) == (counts[0], 0)

    def test_empty_assignment_zero_rules(self):
        g = two_branch_graph()
        lib = {ATK: g}
        topo = small_topo()
        dsp = dsp_greedy(topo, np.array([[0.0]]), lib)
        plan = synthesize_rules(dsp, [], TagPool(), topo, lib)
        assert plan.dc_tables == {}
        assert plan.max_switch_rules() == 0

    def test_wide_area_weights_match_fractions(self):
        lib = builtin_library()
        topo = small_topo(2)
        traffic = np.zeros((1, 4))
        traffic[0, :] = 30.0
        dsp = dsp_greedy(topo, traffic, lib)
        ssps = place_all(topo, dsp, lib)
        pools = build_tag_pools(dsp.physical, lib)
        plan = synthesize_rules(dsp, ssps, pools, topo, lib)
        for (e, a), splits in plan.wide_area.items():
            assert sum(w for _d, w in splits) == pytest.approx(float(dsp.f[e, a, :].sum()))

    def test_every_positive_edge_realized(self):
        lib = builtin_library()
        topo = small_topo()
        traffic = np.zeros((1, 4))
        traffic[0, :] = 25.0
        dsp = dsp_greedy(topo, traffic, lib)
        ssps = place_all(topo, dsp, lib)
        pools = build_tag_pools(dsp.physical, lib)
        plan = synthesize_rules(dsp, ssps, pools, topo, lib)
        for pg in dsp.physical.values():
            assert plan_realizes_edges(plan, pg, pools, lib) == []

    def test_golden_stable_serialization(self, tmp_path):
        _dsp, _pools, plan = self._plan(two_branch_graph())
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        plan.dump(str(p1))
        plan.dump(str(p2))
        assert p1.read_bytes() == p2.read_bytes()
        data = json.loads(p1.read_text())
        assert set(data) == {"wide_area", "dc_tables", "tag_bits", "bidi_pins"}


class TestLoadBalancePick:
    def test_single_tag_pool(self):
        g = two_branch_graph()
        pg = build_physical_graph(g, 0, 10.0, {0: 1, 1: 1, 2: 1})
        pools = assign_tags(pg, {ATK: g})
        rng = random.Random(1)
        vm = (0, 0, 0, 0)
        tags = {load_balance_pick(pools, vm, 0, rng) for _ in range(50)}
        assert tags == set(pools.pool(vm, 0))
        assert len(tags) == 1

    def test_uniform_over_two_tags(self):
        g = two_context_graph()
        pg = build_physical_graph(g, 0, 40.0, {0: 1, 1: 2})
        pools = assign_tags(pg, {ATK: g})
        rng = random.Random(123)
        vm = (0, 0, 0, 0)
        pool = pools.pool(vm, 0)
        n = 10_000
        counts = {t: 0 for t in pool}
        for _ in range(n):
            counts[load_balance_pick(pools, vm, 0, rng)] += 1
        for t in pool:
            assert 0.47 <= counts[t] / n <= 0.53

    def test_reproducible_per_seed(self):
        g = two_context_graph()
        pg = build_physical_graph(g, 0, 40.0, {0: 1, 1: 2})
        pools = assign_tags(pg, {ATK: g})
        vm = (0, 0, 0, 0)

        def draws(seed):
            rng = random.Random(seed)
            return [load_balance_pick(pools, vm, 0, rng) for _ in range(20)]

        assert draws(9) == draws(9)
        assert draws(9) != draws(10)

    def test_empty_pool_raises(self):
        pools = TagPool()
        with pytest.raises(CapacityError):
            load_balance_pick(pools, (0, 0, 0, 0), 0, random.Random(0))


class TestBidirectionalPins:
    def _dns_setup(self):
        lib = builtin_library()
        dns = [g for g in lib.values() if g.attack.name == "dns_amplification"][0]
        topo = small_topo()
        traffic = np.zeros((1, 4))
        traffic[0, dns.attack.id] = 20.0
        dsp = dsp_greedy(topo, traffic, lib)
        ssps = place_all(topo, dsp, lib)
        pools = build_tag_pools(dsp.physical, lib)
        plan = synthesize_rules(dsp, ssps, pools, topo, lib)
        return lib, dns, dsp, pools, plan

    def test_pin_then_lookup(self):
        _lib, _dns, _dsp, _pools, plan = self._dns_setup()
        vm = (1, 0, 1, 0)
        pin_bidirectional(plan, 42, 0, vm)
        assert plan.bidi_pins[42] == (0, vm)

    def test_idempotent_and_conflict(self):
        _lib, _dns, _dsp, _pools, plan = self._dns_setup()
        vm = (1, 0, 1, 0)
        pin_bidirectional(plan, 42, 0, vm)
        pin_bidirectional(plan, 42, 0, vm)
        assert len([t for t in plan.bidi_pins if t == 42]) == 1
        with pytest.raises(PinConflictError):
            pin_bidirectional(plan, 42, 0, (1, 0, 1, 1))

    def test_dns_pins_analysis_tags_udp_pins_nothing(self):
        lib = builtin_library()
        topo = small_topo()
        traffic = np.zeros((1, 4))
        dns_id = [g.attack.id for g in lib.values()
                  if g.attack.name == "dns_amplification"][0]
        udp_id = [g.attack.id for g in lib.values()
                  if g.attack.name == "udp_flood"][0]
        traffic[0, dns_id] = 20.0
        traffic[0, udp_id] = 20.0
        dsp = dsp_greedy(topo, traffic, lib)
        ssps = place_all(topo, dsp, lib)
        pools = build_tag_pools(dsp.physical, lib)
        plan = synthesize_rules(dsp, ssps, pools, topo, lib)
        graphs = ordered_graphs(lib)
        pins = {a: pin_bidirectional_for_graph(plan, pg, pools, lib)
                for (a, d), pg in dsp.physical.items()}
        assert pins[dns_id] > 0
        assert pins[udp_id] == 0
        # Every analysis VM's outbound tags are pinned for the DNS graph.
        dns_graph = graphs[dns_id]
        pg = dsp.physical[(dns_id, 0)]
        for node in pg.instances:
            if dns_graph.node(node).kind != "analysis":
                continue
            for inst in pg.instances[node]:
                vm = (dns_id, 0, node, inst.index)
                for c in range(len(dns_graph.successors(node))):
                    for tag in pools.pools.get((vm, c), []):
                        assert tag in plan.bidi_pins
