"""Acceptance suite.

Each test exercises one acceptance criterion end to end at its stated
tolerance and prints one PASS/FAIL line (visible with ``pytest -s`` or in
the captured output). Run the whole file with::

    pytest tests/test_acceptance.py -v -s
"""

from __future__ import annotations

import os
import time

import numpy as np
import pytest

from graphabm import (
    AgentTypeDecl,
    ContractViolation,
    EdgeTypeDecl,
    Hint,
    Schema,
    Simulation,
    TransitionSpec,
    apply_transition,
    cut_edge_counts,
    cut_fraction,
    finalize_step,
    partition_graph,
    run,
)
from graphabm.cli import measure_edge_adds
from graphabm.models.episim import (
    EpiConfig,
    copresence_closure,
    epi_run,
    random_schedule,
)
from graphabm.models.hk import (
    HK_SPEC,
    HKConfig,
    hk_run,
    hk_transition,
    opinions,
)
from graphabm.models.topology import Cliques, Complete, Regular
from graphabm.spatial import neighbor_pairs


def report(number: int, title: str, ok: bool, note: str = ""):
    status = "PASS" if ok else "FAIL"
    suffix = f" ({note})" if note else ""
    print(f"ACCEPTANCE {number:2d} {title}: {status}{suffix}", flush=True)
    assert ok, f"criterion {number} failed: {title}{suffix}"


def test_01_worker_count_independence():
    t0 = time.perf_counter()
    cfg = HKConfig(n=1000, epsilon=0.2, topology=Complete(), seed=2024)
    base = hk_run(cfg, 50, workers=1, collect_metrics=False)
    ok = True
    for w in (2, 4, 8):
        result = hk_run(cfg, 50, workers=w, collect_metrics=False)
        ok = ok and np.array_equal(result.final_opinions, base.final_opinions)
        ok = ok and result.checksum == base.checksum
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 30.0
    report(1, "bit-identical opinion vectors for 1/2/4/8 workers", ok,
           f"{elapsed:.1f}s")


def test_02_hint_equivalence_oracle():
    t0 = time.perf_counter()
    hinted = hk_run(HKConfig(n=1000, epsilon=0.2, seed=7, hints=True), 50,
                    collect_metrics=False)
    plain = hk_run(HKConfig(n=1000, epsilon=0.2, seed=7, hints=False), 50,
                   collect_metrics=False)
    elapsed = time.perf_counter() - t0
    ok = np.array_equal(hinted.final_opinions, plain.final_opinions)
    ok = ok and elapsed < 30.0
    report(2, "hinted storage bit-equal to unhinted oracle run", ok,
           f"{elapsed:.1f}s")


def test_03_contraction_and_consensus():
    # (a) per-step contraction on 200 random instances
    rng = np.random.default_rng(99)
    contraction_ok = True
    for _ in range(200):
        eps = float(rng.uniform(np.nextafter(0.0, 1.0), 1.0))
        res = hk_run(
            HKConfig(n=50, epsilon=eps, seed=int(rng.integers(1 << 30))), 5
        )
        mins = [m["min"] for m in res.metrics]
        maxs = [m["max"] for m in res.metrics]
        contraction_ok = contraction_ok and all(
            a <= b for a, b in zip(mins, mins[1:])
        ) and all(a >= b for a, b in zip(maxs, maxs[1:]))

    # (b) eps = 1.0 on a complete graph: consensus after exactly one step
    res = hk_run(HKConfig(n=64, epsilon=1.0, seed=5), 1, record_trajectory=True)
    first = res.trajectory[0]
    consensus_ok = bool(np.all(first == first[0]))

    # (c) 5-agent hand-computed step
    schema = Schema()
    schema.register_agent_type(
        AgentTypeDecl("Person", (("opinion", "float64"),), immortal=True)
    )
    schema.register_edge_type(
        EdgeTypeDecl("Sees", hints=Hint.STATELESS | Hint.SINGLE_TYPE,
                     single_type_target="Person")
    )
    sim = Simulation(schema, params={"epsilon": 0.15})
    start = np.array([0.1, 0.2, 0.32, 0.6, 0.65])
    sim.add_agents("Person", 5, {"opinion": start})
    n = 5
    sim.add_edges(
        "Sees",
        np.repeat(np.arange(n, dtype=np.uint64), n),
        np.tile(np.arange(n, dtype=np.uint64), n),
    )
    run(sim, 1, [(hk_transition, HK_SPEC)])
    expected = np.array([0.15, 0.62 / 3, 0.26, 0.625, 0.625])
    hand_ok = bool(np.all(np.abs(opinions(sim) - expected) <= 1e-15))

    report(3, "contraction, one-step consensus, hand-computed step",
           contraction_ok and consensus_ok and hand_ok)


def test_04_execution_order_independence():
    # HK
    hk_ok = True
    cfg = HKConfig(n=50, epsilon=0.25, seed=3)
    from graphabm.models.hk import build_hk

    base = build_hk(cfg)
    apply_transition(base, hk_transition, HK_SPEC)
    finalize_step(base)
    expected = base.state_checksum()
    for trial in range(10):
        sim = build_hk(cfg)
        apply_transition(sim, hk_transition, HK_SPEC,
                         shuffle=np.random.default_rng(trial))
        finalize_step(sim)
        hk_ok = hk_ok and sim.state_checksum() == expected

    # epidemic: one full day under shuffled execution
    from graphabm.models.episim import build_epi, day_program

    epi_cfg = EpiConfig(persons=20, locations=5, theta=1.0, seed=6)
    base_model = build_epi(epi_cfg)
    for fn, spec in day_program(base_model):
        apply_transition(base_model.sim, fn, spec)
        finalize_step(base_model.sim)
    expected_epi = base_model.sim.state_checksum()
    epi_ok = True
    for trial in range(10):
        model = build_epi(epi_cfg)
        for fn, spec in day_program(model):
            apply_transition(model.sim, fn, spec,
                             shuffle=np.random.default_rng(100 + trial))
            finalize_step(model.sim)
        epi_ok = epi_ok and model.sim.state_checksum() == expected_epi

    report(4, "agent execution order cannot change the constructed graph",
           hk_ok and epi_ok)


def test_05_dangling_edge_removal():
    schema = Schema()
    schema.register_agent_type(AgentTypeDecl("P", (("x", "float64"),)))
    schema.register_edge_type(EdgeTypeDecl("Tracked"))
    schema.register_edge_type(EdgeTypeDecl("Blind", hints=Hint.IGNORE_FROM))
    sim = Simulation(schema)
    a = sim.add_agent("P", 0.0)
    b = sim.add_agent("P", 1.0)
    c = sim.add_agent("P", 2.0)
    sim.add_edge("Tracked", b, a)  # a -> b
    sim.add_edge("Tracked", a, c)  # c -> a
    sim.add_edge("Tracked", c, b)  # b -> c (untouched by the death)
    sim.add_edge("Blind", b, a)    # source dropped: survives a's death
    sim.add_edge("Blind", a, c)    # target dies: swept

    def kill_a(view, params, g):
        return None if view.agent_id == a else view.state

    apply_transition(sim, kill_a, TransitionSpec(callable_types=("P",),
                                                 write_types=("P",)))
    finalize_step(sim)
    tracked = sim.edge_container("Tracked")
    blind = sim.edge_container("Blind")
    ok = (
        tracked.count_for(b) == 0          # a -> b dropped with its source
        and tracked.count_for(a) == 0      # c -> a dropped with its target
        and tracked.count_for(c) == 1      # unrelated edge intact
        and blind.count_for(b) == 1        # source death invisible: retained
        and blind.count_for(a) == 0        # target death swept
    )
    report(5, "edges touching a dead agent vanish; source-blind edges persist", ok)


def test_06_contract_checks():
    def single_edge_sim(checks):
        schema = Schema()
        schema.register_agent_type(AgentTypeDecl("A", (), immortal=True))
        schema.register_edge_type(
            EdgeTypeDecl("E", hints=Hint.STATELESS | Hint.IGNORE_FROM | Hint.SINGLE_EDGE)
        )
        sim = Simulation(schema, checks=checks)
        ids = sim.add_agents("A", 3, {})
        return sim, ids.tolist()

    sim, ids = single_edge_sim("on")
    sim.add_edge("E", ids[0], ids[1])
    try:
        sim.add_edge("E", ids[0], ids[2])
        double_flagged = False
    except ContractViolation:
        double_flagged = True

    sim_off, ids_off = single_edge_sim("off")
    sim_off.add_edge("E", ids_off[0], ids_off[1])
    sim_off.add_edge("E", ids_off[0], ids_off[2])  # silently accepted
    sim_off.commit_initial()

    def single_type_sim(checks):
        schema = Schema()
        schema.register_agent_type(AgentTypeDecl("A", (), immortal=True))
        schema.register_agent_type(AgentTypeDecl("B", (), immortal=True))
        schema.register_edge_type(
            EdgeTypeDecl("E", hints=Hint.STATELESS | Hint.SINGLE_TYPE,
                         single_type_target="A")
        )
        sim = Simulation(schema, checks=checks)
        a = sim.add_agents("A", 2, {}).tolist()
        b = sim.add_agents("B", 2, {}).tolist()
        return sim, a, b

    st_sim, a, b = single_type_sim("on")
    try:
        st_sim.add_edge("E", b[0], a[0])
        mismatch_flagged = False
    except ContractViolation:
        mismatch_flagged = True
    st_off, a2, b2 = single_type_sim("off")
    st_off.add_edge("E", b2[0], a2[0])  # silently accepted
    st_off.commit_initial()

    respecting_on = hk_run(HKConfig(n=300, epsilon=0.3, seed=11), 20, checks="on",
                           collect_metrics=False)
    respecting_off = hk_run(HKConfig(n=300, epsilon=0.3, seed=11), 20, checks="off",
                            collect_metrics=False)
    neutral = respecting_on.checksum == respecting_off.checksum

    report(6, "contract breaches flagged when on, silent when off, neutral otherwise",
           double_flagged and mismatch_flagged and neutral)


def test_07_cut_edge_math():
    # Complete graph with self-loops, evenly split: exact closed form.
    n, workers = 100, 4
    schema = Schema()
    schema.register_agent_type(AgentTypeDecl("P", (), immortal=True))
    schema.register_edge_type(EdgeTypeDecl("E"))
    sim = Simulation(schema)
    sim.add_agents("P", n, {})
    sim.add_edges(
        "E",
        np.repeat(np.arange(n, dtype=np.uint64), n),
        np.tile(np.arange(n, dtype=np.uint64), n),
    )
    sim.commit_initial()
    part = partition_graph(sim, workers, "contiguous")
    expected_cut = n * n * (workers - 1) // workers  # cross pairs, never self-loops
    total_edges = n * n  # n*(n-1) ordered pairs + n self-loops
    complete_ok = cut_fraction(sim, part) == expected_cut / total_edges

    # Ring of cliques, clique count divisible by W, greedily grown blocks:
    # at most one directed cut edge per ordered worker boundary.
    topo = Cliques(8, 6)
    targets, sources = topo.build()
    csim = Simulation(_clique_schema())
    csim.add_agents("P", topo.size(), {})
    csim.add_edges("E", targets, sources)
    csim.commit_initial()
    greedy = partition_graph(csim, 4, "greedy_edge_cut")
    counts = cut_edge_counts(csim, greedy)
    clique_ok = (
        greedy.sizes.tolist() == [12, 12, 12, 12]
        and max(counts.values()) <= 1
    )
    report(7, "closed-form complete-graph cut; one cut edge per clique boundary",
           complete_ok and clique_ok)


def _clique_schema():
    schema = Schema()
    schema.register_agent_type(AgentTypeDecl("P", (), immortal=True))
    schema.register_edge_type(EdgeTypeDecl("E"))
    return schema


def test_08_microbenchmark_direction():
    results = measure_edge_adds(10_000_000,
                                plans=("full_edge_list", "existence_bit"))
    ratio = results["full_edge_list"] / results["existence_bit"]
    report(8, "existence-bit insertion at least twice as fast as full records",
           ratio >= 2.0,
           f"{results['full_edge_list']:.0f}ns vs {results['existence_bit']:.0f}ns, "
           f"{ratio:.2f}x")


def test_09_desk_scale_speedup():
    t0 = time.perf_counter()
    cfg = HKConfig(n=100_000, epsilon=0.2, topology=Regular(100), seed=1)
    base = hk_run(cfg, 10, workers=1, collect_metrics=False)
    quad = hk_run(cfg, 10, workers=4, collect_metrics=False)
    elapsed = time.perf_counter() - t0
    deterministic = quad.checksum == base.checksum
    ratio = quad.transition_wall_s / base.transition_wall_s
    cores = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count()
    if cores >= 4:
        ok = deterministic and ratio <= 0.6 and elapsed < 120.0
        note = f"wall ratio {ratio:.2f} on {cores} cores, {elapsed:.0f}s"
    else:
        # The timing bound presupposes >= 4 usable cores; on fewer the
        # determinism and runtime budget still hold.
        ok = deterministic and elapsed < 120.0
        note = (f"timing bound not assessable on {cores} core(s); "
                f"ratio {ratio:.2f}, {elapsed:.0f}s, checksums equal")
    report(9, "4-worker wall time at most 0.6x of 1 worker at n=100k", ok, note)


def test_10_raster_counts():
    non_periodic = len(neighbor_pairs((10, 10), "von_neumann", False))
    periodic = len(neighbor_pairs((10, 10), "von_neumann", True))
    counts_ok = non_periodic == 360 and periodic == 400

    rng = np.random.default_rng(14)
    property_ok = True
    for _ in range(50):
        ndim = int(rng.integers(1, 4))
        dims = tuple(int(rng.integers(1, 9)) for _ in range(ndim))
        topology = ("von_neumann", "moore")[int(rng.integers(0, 2))]
        periodic_flag = bool(rng.integers(0, 2))
        got = set(neighbor_pairs(dims, topology, periodic_flag))
        expected = _brute_force_adjacency(dims, topology, periodic_flag)
        property_ok = property_ok and got == expected
    report(10, "von Neumann edge counts and adjacency oracle over random dims",
           counts_ok and property_ok)


def _brute_force_adjacency(dims, topology, periodic):
    import itertools

    ndim = len(dims)
    if topology == "von_neumann":
        offsets = [
            tuple(d if i == axis else 0 for i in range(ndim))
            for axis in range(ndim)
            for d in (-1, 1)
        ]
    else:
        offsets = [o for o in itertools.product((-1, 0, 1), repeat=ndim) if any(o)]
    pairs = set()
    for idx in itertools.product(*[range(d) for d in dims]):
        for off in offsets:
            nb = tuple(a + b for a, b in zip(idx, off))
            if periodic:
                nb = tuple(v % d for v, d in zip(nb, dims))
            elif not all(0 <= v < d for v, d in zip(nb, dims)):
                continue
            if nb != idx:
                pairs.add(
                    (
                        int(np.ravel_multi_index(idx, dims)),
                        int(np.ravel_multi_index(nb, dims)),
                    )
                )
    return pairs


def test_11_epidemic_oracle():
    rng = np.random.default_rng(77)
    closure_ok = True
    for trial in range(100):
        schedule = random_schedule(20, 5, rng, visits_per_person=3)
        cfg = EpiConfig(persons=20, locations=5, theta=1.0,
                        seed=trial, schedule=schedule, initial_infected=(0,))
        res = epi_run(cfg, 22)
        closure_ok = closure_ok and (
            set(res.infected_persons.tolist()) == copresence_closure(cfg)
        )

    zero = epi_run(EpiConfig(persons=20, locations=5, theta=0.0, seed=1), 10)
    zero_ok = zero.infected_persons.tolist() == [0] and all(
        m["new_infections"] == 0 for m in zero.metrics
    )
    report(11, "theta=1 infections equal co-presence closure; theta=0 inert",
           closure_ok and zero_ok)
