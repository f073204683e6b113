from __future__ import annotations

import numpy as np
import pytest

from graphabm import (
    AgentTypeDecl,
    EdgePlan,
    EdgeTypeDecl,
    Hint,
    HintViolation,
    Schema,
    Simulation,
)
from graphabm.storage import build_read_container, make_shard

from test_schema import all_hint_sets, is_legal


def build_sim(edge_decl: EdgeTypeDecl, n_agents: int = 8, checks="on") -> Simulation:
    schema = Schema()
    schema.register_agent_type(AgentTypeDecl("A", (("v", "float64"),), immortal=True))
    schema.register_edge_type(edge_decl)
    sim = Simulation(schema, checks=checks)
    sim.add_agents("A", n_agents, {"v": np.arange(n_agents, dtype=float)})
    return sim


class TestListContainers:
    def test_insertion_order_per_target(self):
        sim = build_sim(EdgeTypeDecl("E", (("w", "float64"),)))
        t, a, b, c = 0, 1, 2, 3
        sim.add_edge("E", t, a, (1.0,))
        sim.add_edge("E", t, b, (2.0,))
        sim.add_edge("E", t, c, (3.0,))
        sim.commit_initial()
        records = sim.edge_container("E").records_for(t)
        assert [r.source for r in records] == [a, b, c]
        assert [r.state for r in records] == [(1.0,), (2.0,), (3.0,)]

    def test_empty_target(self):
        sim = build_sim(EdgeTypeDecl("E"))
        sim.commit_initial()
        c = sim.edge_container("E")
        assert c.records_for(5) == []
        assert c.count_for(5) == 0
        assert not c.has_for(5)

    def test_duplicate_edges_kept(self):
        sim = build_sim(EdgeTypeDecl("E"))
        sim.add_edge("E", 0, 1)
        sim.add_edge("E", 0, 1)
        sim.commit_initial()
        assert sim.edge_container("E").count_for(0) == 2

    def test_bulk_matches_scalar(self):
        decl = EdgeTypeDecl("E", (("w", "float64"),))
        sim_a = build_sim(decl)
        sim_b = build_sim(decl)
        targets = [0, 2, 0, 1]
        sources = [3, 4, 5, 6]
        states = [(0.5,), (1.5,), (2.5,), (3.5,)]
        for t, s, st in zip(targets, sources, states):
            sim_a.add_edge("E", t, s, st)
        sim_b.add_edges(
            "E",
            np.array(targets, dtype=np.uint64),
            np.array(sources, dtype=np.uint64),
            states,
        )
        sim_a.commit_initial()
        sim_b.commit_initial()
        for t in range(8):
            ra = sim_a.edge_container("E").records_for(t)
            rb = sim_b.edge_container("E").records_for(t)
            assert ra == rb


class TestPlanRestrictions:
    def test_count_only_answers_counts_not_records(self):
        sim = build_sim(EdgeTypeDecl("E", hints=Hint.STATELESS | Hint.IGNORE_FROM))
        for _ in range(4):
            sim.add_edge("E", 0, 1)
        sim.commit_initial()
        c = sim.edge_container("E")
        assert c.count_for(0) == 4
        assert c.has_for(0)
        with pytest.raises(HintViolation):
            c.records_for(0)
        with pytest.raises(HintViolation):
            c.sources_for(0)

    def test_existence_bit_answers_only_presence(self):
        sim = build_sim(
            EdgeTypeDecl(
                "E",
                hints=Hint.STATELESS | Hint.IGNORE_FROM | Hint.SINGLE_EDGE,
            ),
            checks="off",
        )
        for _ in range(4):
            sim.add_edge("E", 0, 1)
        sim.commit_initial()
        c = sim.edge_container("E")
        assert c.has_for(0)
        assert not c.has_for(1)
        with pytest.raises(HintViolation):
            c.count_for(0)
        with pytest.raises(HintViolation):
            c.records_for(0)

    def test_single_edge_forbids_count(self):
        sim = build_sim(EdgeTypeDecl("E", hints=Hint.SINGLE_EDGE))
        sim.add_edge("E", 0, 1)
        sim.commit_initial()
        c = sim.edge_container("E")
        with pytest.raises(HintViolation):
            c.count_for(0)
        assert c.has_for(0)
        assert [r.source for r in c.records_for(0)] == [1]

    def test_ignore_from_drops_sources(self):
        sim = build_sim(EdgeTypeDecl("E", (("w", "float64"),), hints=Hint.IGNORE_FROM))
        sim.add_edge("E", 0, 1, (2.0,))
        sim.commit_initial()
        c = sim.edge_container("E")
        with pytest.raises(HintViolation):
            c.sources_for(0)
        assert c.records_for(0) == [type(c.records_for(0)[0])(None, (2.0,), "E")]

    def test_stateless_drops_states(self):
        sim = build_sim(EdgeTypeDecl("E", hints=Hint.STATELESS))
        sim.add_edge("E", 0, 1)
        sim.commit_initial()
        c = sim.edge_container("E")
        with pytest.raises(HintViolation):
            c.states_for(0)
        assert c.records_for(0)[0].state is None
        assert c.records_for(0)[0].source == 1


def reference_queries(full, hints: Hint, plan: EdgePlan, targets):
    """What a hinted container must agree on with a FullEdgeList reference."""
    out = {}
    for t in targets:
        row = {"has": full.has_for(t)}
        if plan not in (EdgePlan.EXISTENCE_BIT, EdgePlan.SINGLE_FULL_EDGE):
            row["count"] = full.count_for(t)
        if Hint.IGNORE_FROM not in hints and plan is not EdgePlan.COUNT_ONLY and plan is not EdgePlan.EXISTENCE_BIT:
            row["sources"] = full.sources_for(t).tolist()
        if (
            Hint.STATELESS not in hints
            and plan not in (EdgePlan.COUNT_ONLY, EdgePlan.EXISTENCE_BIT)
        ):
            row["states"] = full.states_for(t)
        out[t] = row
    return out


def hinted_queries(container, hints: Hint, plan: EdgePlan, targets):
    out = {}
    for t in targets:
        row = {"has": container.has_for(t)}
        if plan not in (EdgePlan.EXISTENCE_BIT, EdgePlan.SINGLE_FULL_EDGE):
            row["count"] = container.count_for(t)
        if Hint.IGNORE_FROM not in hints and plan is not EdgePlan.COUNT_ONLY and plan is not EdgePlan.EXISTENCE_BIT:
            row["sources"] = container.sources_for(t).tolist()
        if (
            Hint.STATELESS not in hints
            and plan not in (EdgePlan.COUNT_ONLY, EdgePlan.EXISTENCE_BIT)
        ):
            row["states"] = container.states_for(t)
        out[t] = row
    return out


class TestObservationalEquivalence:
    """Any query legal under a hint set answers identically whether the
    edges live in the hinted representation or in a FullEdgeList."""

    @pytest.mark.parametrize("hints", [h for h in all_hint_sets() if is_legal(h)],
                             ids=lambda h: str(h))
    def test_hinted_matches_full(self, hints):
        from graphabm.schema import storage_plan_for

        plan = storage_plan_for(hints)
        rng = np.random.default_rng(int(hints.value) + 17)
        n = 10
        single = Hint.SINGLE_EDGE in hints
        edges = []
        used_targets = set()
        for _ in range(24):
            t = int(rng.integers(0, n))
            if single:
                if t in used_targets:
                    continue
                used_targets.add(t)
            edges.append((t, int(rng.integers(0, n)), (float(rng.random()),)))

        decl_kw = {}
        if Hint.SINGLE_TYPE in hints:
            decl_kw["single_type_target"] = "A"
        hinted = build_sim(
            EdgeTypeDecl("E", (("w", "float64"),), hints=hints, **decl_kw), n_agents=n
        )
        full = build_sim(EdgeTypeDecl("E", (("w", "float64"),)), n_agents=n)
        for t, s, st in edges:
            hinted.add_edge("E", t, s, st)
            full.add_edge("E", t, s, st)
        hinted.commit_initial()
        full.commit_initial()

        targets = range(n)
        expected = reference_queries(full.edge_container("E"), hints, plan, targets)
        actual = hinted_queries(hinted.edge_container("E"), hints, plan, targets)
        assert actual == expected


class TestDeterministicMerge:
    def _schema_info(self, hints=Hint.NONE):
        schema = Schema()
        schema.register_agent_type(AgentTypeDecl("A", (), immortal=True))
        schema.register_edge_type(EdgeTypeDecl("E", hints=hints))
        return schema.edge_type("E")

    def test_merge_orders_by_producer_across_shards(self):
        info = self._schema_info()
        # Worker shards hold interleaved producer ranges (round-robin style).
        s0 = make_shard(info, record_producers=True)
        s1 = make_shard(info, record_producers=True)
        s0.add(7, 100, None, 0)
        s0.add(7, 102, None, 2)
        s1.add(7, 101, None, 1)
        s1.add(7, 103, None, 3)
        merged = build_read_container(info, [s0, s1])
        assert merged.sources_for(7).tolist() == [100, 101, 102, 103]

    def test_same_producer_insertion_order_preserved(self):
        info = self._schema_info()
        s0 = make_shard(info, record_producers=True)
        s0.add(7, 100, None, 5)
        s0.add(7, 101, None, 5)
        s1 = make_shard(info, record_producers=True)
        s1.add(7, 102, None, 9)
        merged = build_read_container(info, [s0, s1])
        assert merged.sources_for(7).tolist() == [100, 101, 102]

    def test_count_merge_is_order_free(self):
        info = self._schema_info(Hint.STATELESS | Hint.IGNORE_FROM)
        s0 = make_shard(info)
        s1 = make_shard(info)
        s0.add(3)
        s1.add(3)
        s1.add(3)
        merged = build_read_container(info, [s0, s1])
        assert merged.count_for(3) == 3
