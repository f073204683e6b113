"""The 1-neighborhood handed to a transition function.

A view exposes exactly what an agent may observe at time t: its own state,
its incoming edges (per readable edge type), and the time-t states of the
agents at those edges' sources. Write effects (new agents, new edges) go
into the executing worker's private shard; they become visible only after
the step commits.

One view object is reused for every agent a worker executes; the engine
rebinds it per agent, so transition functions must not retain it.
"""

from __future__ import annotations

import numpy as np

from .errors import HintViolation, TypeNotReadable, TypeNotWritable, UnknownName, UsageError
from .ids import COMP_SHIFT, INDEX_MASK, PART_BITS, PART_MASK, agent_id


class NeighborhoodView:
    __slots__ = (
        "_sim", "_rt", "_worker", "_read", "_writers", "_alloc", "_step",
        "_tag", "_part", "_seg", "_fields", "_field_list",
        "_slot", "_aid", "_rng", "_gather_cache",
    )

    def __init__(self, sim, rt, read_containers, writers, worker: int):
        self._sim = sim
        self._rt = rt
        self._worker = worker
        self._read = read_containers  # name -> read container
        self._writers = writers       # name -> (adder, has_state, arity)
        self._alloc: dict[int, list] = {}
        self._step = sim.step
        self._gather_cache: dict = {}
        self._rng = None

    # -- engine-side binding -------------------------------------------------

    def _bind_segment(self, tag, part, seg):
        self._tag = tag
        self._part = part
        self._seg = seg
        self._fields = seg.fields
        self._field_list = list(seg.fields.values())

    def _set_agent(self, slot, aid):
        self._slot = slot
        self._aid = aid
        self._rng = None

    # -- own state -------------------------------------------------------------

    @property
    def agent_id(self) -> int:
        return self._aid

    @property
    def step(self) -> int:
        return self._step

    @property
    def state(self) -> tuple:
        slot = self._slot
        return tuple(arr[slot] for arr in self._field_list)

    def field(self, name: str):
        try:
            return self._fields[name][self._slot]
        except KeyError:
            raise UnknownName(f"agent has no field {name!r}") from None

    # -- incoming edges --------------------------------------------------------

    def _container(self, edge_type: str):
        c = self._read.get(edge_type)
        if c is None:
            raise TypeNotReadable(
                f"edge type {edge_type!r} is not in this transition's read set"
            )
        return c

    def edges(self, edge_type: str) -> list:
        """Incoming edge records, in producing-agent order."""
        return self._container(edge_type).records_for(self._aid)

    def sources(self, edge_type: str) -> np.ndarray:
        """Source agent ids of incoming edges."""
        return self._container(edge_type).sources_for(self._aid)

    def edge_states(self, edge_type: str) -> list:
        return self._container(edge_type).states_for(self._aid)

    def num_edges(self, edge_type: str) -> int:
        return self._container(edge_type).count_for(self._aid)

    def has_edge(self, edge_type: str) -> bool:
        return self._container(edge_type).has_for(self._aid)

    # -- source agent state ------------------------------------------------------

    def _check_agent_readable(self, tag: int):
        rt = self._rt
        if not rt.all_agents_readable and tag not in rt.readable_agent_tags:
            name = self._sim.schema.agent_types[tag].name
            raise TypeNotReadable(
                f"agent type {name!r} is not in this transition's read set"
            )

    def source_state(self, record) -> tuple:
        """Time-t state of the agent at an edge record's source."""
        info = self._sim.schema.edge_type(record.edge_type)
        if not info.source_state_readable:
            raise HintViolation(
                f"edge type {info.name!r} forbids reading source-agent state"
            )
        src = record.source
        if src is None:
            raise HintViolation(
                f"edge type {info.name!r} does not store source ids"
            )
        tag = src >> (COMP_SHIFT + PART_BITS)
        self._check_agent_readable(tag)
        part = (src >> COMP_SHIFT) & PART_MASK
        try:
            seg = self._sim._segments[tag][part]
        except (KeyError, IndexError):
            raise UnknownName(f"source agent {src:#x} does not exist") from None
        return seg.state_tuple(src & INDEX_MASK)

    def neighbor_field(self, edge_type: str, field: str) -> np.ndarray:
        """One state field of all incoming edges' source agents.

        Values are time-t reads in producing-agent order, aligned with
        ``sources(edge_type)``.
        """
        cached = self._gather_cache.get((edge_type, field))
        if cached is not None:
            arr, locals_, index = cached
            sl = index.get(self._aid)
            if sl is None:
                return arr[:0]
            return arr[locals_[sl[0]: sl[1]]]
        c = self._container(edge_type)
        if not c.info.source_state_readable:
            raise HintViolation(
                f"edge type {edge_type!r} forbids reading source-agent state"
            )
        comp = getattr(c, "single_source_comp", None)
        if comp is not None:
            tag, part = comp >> PART_BITS, comp & PART_MASK
            self._check_agent_readable(tag)
            seg = self._sim._segments[tag][part]
            try:
                arr = seg.fields[field]
            except KeyError:
                raise UnknownName(
                    f"agent type {self._sim.schema.agent_types[tag].name!r} "
                    f"has no field {field!r}"
                ) from None
            self._gather_cache[(edge_type, field)] = (arr, c.sources_local, c.index)
            sl = c.index.get(self._aid)
            if sl is None:
                return arr[:0]
            return arr[c.sources_local[sl[0]: sl[1]]]
        return self._gather_general(c, field)

    def _gather_general(self, c, field: str) -> np.ndarray:
        sources = c.sources_for(self._aid)
        if not sources.size:
            return np.empty(0)
        comps = sources >> np.uint64(COMP_SHIFT)
        locals_ = (sources & np.uint64(INDEX_MASK)).astype(np.intp)
        out = None
        for comp in np.unique(comps):
            tag, part = int(comp) >> PART_BITS, int(comp) & PART_MASK
            self._check_agent_readable(tag)
            seg = self._sim._segments[tag][part]
            try:
                arr = seg.fields[field]
            except KeyError:
                raise UnknownName(
                    f"agent type {self._sim.schema.agent_types[tag].name!r} "
                    f"has no field {field!r}"
                ) from None
            sel = comps == comp
            if out is None:
                out = np.empty(sources.size, dtype=arr.dtype)
            out[sel] = arr[locals_[sel]]
        return out

    # -- write effects ----------------------------------------------------------

    def add_agent(self, type_name: str, *state) -> int:
        """Create an agent of a writable type; returns its id (alive at t+1)."""
        sim = self._sim
        info = sim.schema.agent_type(type_name)
        tag = info.tag
        if tag not in self._rt.written_agent:
            raise TypeNotWritable(
                f"agent type {type_name!r} is not in this transition's write set"
            )
        if len(state) != len(info.field_names):
            raise UsageError(
                f"agent type {type_name!r} takes {len(info.field_names)} "
                f"state fields, got {len(state)}"
            )
        alloc = self._alloc.get(tag)
        if alloc is None:
            seg = sim._segments[tag].get(self._worker)
            free = list(seg.free) if seg is not None else []
            nxt = seg.count if seg is not None else 0
            alloc = self._alloc[tag] = [nxt, free, [], [], len(free)]
        if alloc[1]:
            slot = alloc[1].pop()
        else:
            slot = alloc[0]
            alloc[0] = slot + 1
        alloc[2].append(slot)
        alloc[3].append(state)
        return agent_id(tag, self._worker, slot)

    def add_edge(self, edge_type: str, target: int, state: tuple = (), source=None) -> None:
        """Add an edge to the graph under construction.

        ``source`` defaults to the executing agent. Only information the
        edge type's hints retain is stored.
        """
        w = self._writers.get(edge_type)
        if w is None:
            raise TypeNotWritable(
                f"edge type {edge_type!r} is not in this transition's write set"
            )
        adder, has_state, arity = w
        if has_state:
            st = tuple(state)
            if len(st) != arity:
                raise UsageError(
                    f"edge type {edge_type!r} takes {arity} state fields, "
                    f"got {len(st)}"
                )
        else:
            st = None
        adder(target, self._aid if source is None else source, st, self._aid)

    # -- randomness ---------------------------------------------------------------

    @property
    def rng(self) -> np.random.Generator:
        """Deterministic per-agent random stream for this step.

        Seeded by (simulation seed, step counter, agent id), so draws are
        independent of worker count and of agent execution order.
        """
        r = self._rng
        if r is None:
            r = self._rng = np.random.Generator(
                np.random.Philox(
                    counter=[self._step, 0, 0, 0],
                    key=[self._sim.seed, self._aid],
                )
            )
        return r
