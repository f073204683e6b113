"""Synchronous transition execution.

``apply_transition`` runs one transition function over every alive agent of
the callable types, always against the time-t read buffers, and stages the
constructed t+1 graph. ``finalize_step`` sweeps edges with dead endpoints,
swaps buffers, and advances the step counter. ``run`` drives a per-step
program of transitions and globals updates.

A transition function has the signature ``fn(view, params, globals) ->
state | None``. Returning a state tuple re-adds the executing agent with
that state; returning None drops it (for mortal, written, non-retained
types) or is a no-op otherwise. Additional agents and edges are created
through the view. Because every function sees only time-t data and write
effects are merged by producing-agent id, the outcome is independent of
the order in which agents execute and of the worker count.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .checks import ViolationSink
from .errors import TypeNotWritable, UsageError
from .schema import AgentTypeInfo
from .sim import Simulation
from .storage import (
    AgentSegment,
    build_read_container,
    make_checked_adder,
    make_shard,
    validate_endpoints,
)
from .view import NeighborhoodView


@dataclass(frozen=True)
class TransitionSpec:
    """Which types a transition touches.

    ``callable_types``: agent types whose transition function runs.
    ``read_types``: agent and edge types the view may query.
    ``write_types``: agent and edge types the transition may change; all
    others pass through untouched.
    ``keep_existing``: written types whose current contents are retained,
    with the transition only adding new instances.
    """

    callable_types: tuple[str, ...]
    read_types: tuple[str, ...] = ()
    write_types: tuple[str, ...] = ()
    keep_existing: tuple[str, ...] = ()

    def __post_init__(self):
        for attr in ("callable_types", "read_types", "write_types", "keep_existing"):
            value = getattr(self, attr)
            if isinstance(value, str):
                object.__setattr__(self, attr, (value,))
            else:
                object.__setattr__(self, attr, tuple(value))
        extra = set(self.keep_existing) - set(self.write_types)
        if extra:
            raise UsageError(
                f"keep_existing types {sorted(extra)} are not in write_types"
            )


class RuntimeSpec:
    """A TransitionSpec resolved against a schema, plus per-step context."""

    __slots__ = (
        "spec", "callable_tags", "readable_edges", "readable_agent_tags",
        "all_agents_readable", "written_agent", "written_edge",
        "check_single_edge", "check_single_type", "mode", "globals",
    )

    def __init__(self, sim: Simulation, spec: TransitionSpec):
        schema = sim.schema
        self.spec = spec
        tags = []
        for name in spec.callable_types:
            info = schema.type_by_name(name)
            if not isinstance(info, AgentTypeInfo):
                raise UsageError(f"callable type {name!r} is not an agent type")
            tags.append(info.tag)
        if len(set(tags)) != len(tags):
            raise UsageError("duplicate callable types")
        self.callable_tags = sorted(tags)

        self.readable_edges = {}
        agent_tags = set()
        for name in spec.read_types:
            info = schema.type_by_name(name)
            if isinstance(info, AgentTypeInfo):
                agent_tags.add(info.tag)
            else:
                self.readable_edges[name] = info.tag
        self.readable_agent_tags = frozenset(agent_tags)
        self.all_agents_readable = agent_tags >= {
            i.tag for i in schema.agent_types
        }

        keep = set(spec.keep_existing)
        self.written_agent = {}
        self.written_edge = {}
        for name in spec.write_types:
            info = schema.type_by_name(name)
            if isinstance(info, AgentTypeInfo):
                self.written_agent[info.tag] = name in keep
            else:
                self.written_edge[info.tag] = name in keep
        for tag, kept in self.written_agent.items():
            info = schema.agent_types[tag]
            if info.immortal and not kept and tag not in self.callable_tags:
                raise UsageError(
                    f"immortal agent type {info.name!r} is written without "
                    "keep_existing but has no transition to re-create it"
                )

        cfg = sim.checks
        self.check_single_edge = cfg.check_single_edge()
        self.check_single_type = cfg.check_single_type()
        self.mode = cfg.mode
        self.globals = None  # snapshot installed by apply_transition


@dataclass
class StagedCommit:
    segments: dict            # tag -> {part: AgentSegment} replacements
    edges: dict               # etag -> read container replacements
    deaths_occurred: bool
    reports: list


# ---------------------------------------------------------------------------
# Worker-side execution
# ---------------------------------------------------------------------------


def _run_shard(sim, fn, rt: RuntimeSpec, partition, worker: int, nworkers: int,
               shuffle=None) -> dict:
    """Run ``fn`` over this worker's agents; return its write shard."""
    schema = sim.schema
    sink = ViolationSink(rt.mode, sim.step)

    shards = {}
    writers = {}
    for etag, _keep in rt.written_edge.items():
        info = schema.edge_types[etag]
        shard = make_shard(info, record_producers=True)
        shards[etag] = shard
        adder = make_checked_adder(
            shard, info, sink, rt.check_single_edge, rt.check_single_type
        )
        writers[info.name] = (adder, info.has_state, len(info.decl.state_layout))

    read_containers = {
        name: sim._edges[etag] for name, etag in rt.readable_edges.items()
    }
    view = NeighborhoodView(sim, rt, read_containers, writers, worker)
    params = sim.params
    glob = rt.globals

    # (tag, part) -> ([slots], [state tuples]) of agents re-added by their own fn
    returns: dict = {}

    tasks = _agent_tasks(sim, rt, partition, worker, nworkers)
    if shuffle is not None:
        flat = [(tag, part, slot) for tag, part, slots in tasks for slot in slots]
        shuffle.shuffle(flat)
        tasks = [(tag, part, [slot]) for tag, part, slot in flat]

    for tag, part, slots in tasks:
        info = schema.agent_types[tag]
        seg = sim._segments[tag][part]
        writes_self = tag in rt.written_agent
        kept = rt.written_agent.get(tag, False)
        if writes_self and not kept:
            rec = returns.setdefault((tag, part), ([], []))
        view._bind_segment(tag, part, seg)
        base = (tag << 56) | (part << 36)
        for slot in slots:
            view._set_agent(slot, base | slot)
            ret = fn(view, params, glob)
            if ret is None:
                if writes_self and not kept and info.immortal:
                    raise UsageError(
                        f"immortal agent {base | slot:#x} must return a state"
                    )
                continue
            if not writes_self:
                raise TypeNotWritable(
                    f"agent type {info.name!r} is not in this transition's "
                    "write set but its function returned a state"
                )
            if kept:
                raise UsageError(
                    f"agent type {info.name!r} is retained (keep_existing); "
                    "its function must return None"
                )
            if len(ret) != len(info.field_names):
                raise UsageError(
                    f"agent type {info.name!r} takes {len(info.field_names)} "
                    f"state fields, got {len(ret)}"
                )
            rec[0].append(slot)
            rec[1].append(ret)

    agents_payload = {}
    for (tag, part), (slots, rets) in returns.items():
        info = schema.agent_types[tag]
        cols = list(zip(*rets)) if rets else [[] for _ in info.field_names]
        agents_payload[(tag, part)] = {
            "slots": np.asarray(slots, dtype=np.int64),
            "fields": {
                name: np.asarray(col, dtype=dt)
                for name, dt, col in zip(info.field_names, info.dtypes, cols)
            },
        }

    new_payload = {}
    for tag, alloc in view._alloc.items():
        info = schema.agent_types[tag]
        slots, states = alloc[2], alloc[3]
        cols = list(zip(*states)) if states else [[] for _ in info.field_names]
        new_payload[tag] = {
            "slots": np.asarray(slots, dtype=np.int64),
            "fields": {
                name: np.asarray(col, dtype=dt)
                for name, dt, col in zip(info.field_names, info.dtypes, cols)
            },
            "n_popped": alloc[4] - len(alloc[1]),
        }

    return {
        "worker": worker,
        "agents": agents_payload,
        "new": new_payload,
        "edges": shards,
        "reports": sink.reports,
    }


def _agent_tasks(sim, rt, partition, worker, nworkers):
    """(tag, part, slot list) work items in ascending agent-id order."""
    tasks = []
    for tag in rt.callable_tags:
        for part in sorted(sim._segments[tag]):
            seg = sim._segments[tag][part]
            slots = seg.alive_slots()
            if nworkers > 1:
                owners = partition.worker_for_slots(tag, part, slots)
                slots = slots[owners == worker]
            if slots.size:
                tasks.append((tag, part, slots.tolist()))
    return tasks


# ---------------------------------------------------------------------------
# Control-side merge
# ---------------------------------------------------------------------------


def _merge_and_stage(sim, rt: RuntimeSpec, payloads: list) -> None:
    schema = sim.schema
    sink = ViolationSink(rt.mode, sim.step)
    reports = []
    for p in payloads:
        reports.extend(p["reports"])

    staged_segments = {}
    deaths_occurred = False
    for tag, kept in rt.written_agent.items():
        info = schema.agent_types[tag]
        old_parts = sim._segments[tag]
        new_parts = {}
        for part, old in old_parts.items():
            if kept:
                new_parts[part] = old.clone()
            else:
                new_parts[part] = _fresh_like(info, old)

        n_returned = 0
        for p in payloads:
            for (rtag, part), rec in p["agents"].items():
                if rtag != tag:
                    continue
                seg = new_parts[part]
                slots = rec["slots"]
                n_returned += slots.size
                for name, vals in rec["fields"].items():
                    seg.fields[name][slots] = vals
                if seg.alive is not None:
                    seg.alive[slots] = True
        if info.immortal and not kept and tag in rt.callable_tags:
            expected = sum(seg.n_alive for seg in old_parts.values())
            if n_returned != expected:
                raise UsageError(
                    f"immortal agent type {info.name!r}: {n_returned} of "
                    f"{expected} agents returned a state"
                )

        for p in payloads:
            rec = p["new"].get(tag)
            if rec is None or not rec["slots"].size:
                continue
            part = p["worker"]
            seg = new_parts.get(part)
            if seg is None:
                seg = new_parts[part] = AgentSegment(info)
            if rec["n_popped"]:
                del seg.free[-rec["n_popped"]:]
            slots = rec["slots"]
            top = int(slots.max()) + 1
            seg.ensure_capacity(top)
            seg.count = max(seg.count, top)
            for name, vals in rec["fields"].items():
                seg.fields[name][slots] = vals
            if seg.alive is not None:
                seg.alive[slots] = True

        for part, seg in new_parts.items():
            old = old_parts.get(part)
            if old is None or seg.alive is None or kept:
                continue
            limit = old.count
            freed = np.flatnonzero(old.alive[:limit] & ~seg.alive[:limit])
            if freed.size:
                deaths_occurred = True
                seg.free.extend(freed.tolist())
        staged_segments[tag] = new_parts

    exists_fn = sim._exists_lookup_staged(staged_segments)
    staged_edges = {}
    for etag, kept in rt.written_edge.items():
        info = schema.edge_types[etag]
        shards = [p["edges"][etag] for p in payloads]
        carry = sim._edges[etag] if kept else None
        container = build_read_container(
            info, shards, carry, sink, rt.check_single_edge
        )
        validate_endpoints(container, exists_fn)
        staged_edges[etag] = container
    reports.extend(sink.reports)

    sim._staged = StagedCommit(
        segments=staged_segments,
        edges=staged_edges,
        deaths_occurred=deaths_occurred,
        reports=reports,
    )


def _fresh_like(info: AgentTypeInfo, old: AgentSegment) -> AgentSegment:
    """An all-dead segment with the same slot space as ``old``.

    Zero-filled so that never-written slots hash identically across runs.
    """
    seg = AgentSegment(info)
    seg.count = old.count
    seg.fields = {
        name: np.zeros(old.count, dtype=dt)
        for name, dt in zip(info.field_names, info.dtypes)
    }
    if not info.immortal:
        seg.alive = np.zeros(old.count, dtype=bool)
    seg.free = list(old.free)
    return seg


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def apply_transition(sim: Simulation, fn, spec: TransitionSpec, *,
                     workers: int = 1, partition=None, shuffle=None) -> None:
    """Run one synchronous transition and stage the constructed graph.

    Every alive agent of the callable types executes ``fn`` exactly once
    against time-t data. Call :func:`finalize_step` to commit. ``shuffle``
    (a numpy Generator) randomizes agent execution order; results must not
    depend on it.
    """
    if sim._staged is not None:
        raise UsageError("previous transition not finalized")
    if sim._in_transition:
        raise UsageError("transition already in flight")
    sim.commit_initial()
    sim._params_frozen = True
    rt = RuntimeSpec(sim, spec)
    rt.globals = sim.globals_snapshot()
    if workers > 1 and partition is None:
        from .parallel import partition_graph

        partition = partition_graph(sim, workers)
    sim._in_transition = True
    try:
        if workers <= 1:
            payloads = [_run_shard(sim, fn, rt, partition, 0, 1, shuffle=shuffle)]
        else:
            from .parallel import fork_payloads

            payloads = fork_payloads(sim, fn, rt, partition, workers)
        _merge_and_stage(sim, rt, payloads)
    except BaseException:
        sim._in_transition = False
        sim._staged = None
        raise


def finalize_step(sim: Simulation) -> None:
    """Commit the staged graph: sweep dangling edges, swap buffers.

    Edges whose target slot died are dropped, as are edges whose stored
    source died. Edge types that do not store the source cannot see a
    source death and deliberately retain such edges.
    """
    staged = sim._staged
    if staged is None:
        raise UsageError("no transition staged; call apply_transition first")
    for tag, parts in staged.segments.items():
        sim._segments[tag] = parts
    for etag, container in staged.edges.items():
        sim._edges[etag] = container
    if staged.deaths_occurred:
        sim._edges = [c.filtered(sim._alive_lookup) for c in sim._edges]
    sim.check_reports.extend(staged.reports)
    sim.step += 1
    sim._staged = None
    sim._in_transition = False


def run(sim: Simulation, steps: int, program, *, workers: int = 1,
        partition=None, strategy: str = "contiguous", on_step=None) -> None:
    """Execute a step program ``steps`` times.

    ``program`` is an ordered list whose items are either ``(fn, spec)``
    transitions or callables taking the simulation (run on the control
    thread between transitions, e.g. globals updates). Per-step wall time
    lands in ``sim.step_metrics``.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    items = []
    for item in program:
        if isinstance(item, tuple):
            fn, spec = item
            items.append(("t", fn, spec))
        elif callable(item):
            items.append(("g", item, None))
        else:
            raise UsageError(f"program item {item!r} is neither (fn, spec) nor callable")
    sim.commit_initial()
    if workers > 1 and partition is None:
        from .parallel import partition_graph

        partition = partition_graph(sim, workers, strategy)
    for index in range(steps):
        t0 = time.perf_counter()
        for kind, a, b in items:
            if kind == "t":
                apply_transition(sim, a, b, workers=workers, partition=partition)
                finalize_step(sim)
            else:
                a(sim)
        sim.step_metrics.append(
            {"step_index": index, "wall_ms": (time.perf_counter() - t0) * 1e3}
        )
        if on_step is not None:
            on_step(sim)
