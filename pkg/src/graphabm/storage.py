"""Data-oriented storage for agents and edges.

Agents of one type created on one partition live in an :class:`AgentSegment`
(structure-of-arrays plus a liveness mask for mortal types). Edges are
always stored under their *target*: while a transition runs, every worker
appends into its own write shard; at commit the shards are merged into an
immutable read container whose shape is chosen by the edge type's storage
plan.

Merge determinism: within a shard, adds appear in producing-agent order
(workers iterate their agents by ascending id); the merge stable-sorts the
concatenated shards by producer and then by target, so every per-target
edge list is ordered by producing-agent id no matter how many workers ran
or in which order agents executed.
"""

from __future__ import annotations

import array
from typing import Callable, NamedTuple

import numpy as np

from .checks import ViolationSink
from .errors import ContractViolation, HintViolation, IndexOverflow
from .ids import COMP_SHIFT, INDEX_MASK, MAX_INDEX, PART_BITS
from .schema import AgentTypeInfo, EdgePlan, EdgeTypeInfo

_U64 = np.uint64
_EMPTY_U64 = np.empty(0, dtype=_U64)
_EMPTY_IDX = np.empty(0, dtype=np.intp)

# Initial byte length of an existence bitmap bucket; grows on demand.
_EB_BUCKET_START = 1 << 12


class EdgeRecord(NamedTuple):
    """One stored incoming edge, as handed to transition functions.

    ``source`` is None when the type drops source ids (IGNORE_FROM);
    ``state`` is None when the type is STATELESS.
    """

    source: int | None
    state: tuple | None
    edge_type: str


# ---------------------------------------------------------------------------
# Agent storage
# ---------------------------------------------------------------------------


class AgentSegment:
    """Agents of one type created on one partition.

    Slots are allocated densely; for mortal types a liveness mask marks dead
    slots and a LIFO free list recycles them.
    """

    __slots__ = ("count", "fields", "alive", "free", "immortal")

    def __init__(self, info: AgentTypeInfo, capacity: int = 0):
        self.count = 0
        self.immortal = info.immortal
        self.fields = {
            name: np.empty(capacity, dtype=dt)
            for name, dt in zip(info.field_names, info.dtypes)
        }
        self.alive = None if info.immortal else np.zeros(capacity, dtype=bool)
        self.free: list[int] = []

    # -- capacity ----------------------------------------------------------

    def _grow_to(self, capacity: int):
        for name, arr in self.fields.items():
            new = np.empty(capacity, dtype=arr.dtype)
            new[: self.count] = arr[: self.count]
            self.fields[name] = new
        if self.alive is not None:
            new = np.zeros(capacity, dtype=bool)
            new[: self.count] = self.alive[: self.count]
            self.alive = new

    def ensure_capacity(self, n: int):
        cap = self.count if not self.fields else len(next(iter(self.fields.values())))
        if self.alive is not None:
            cap = len(self.alive)
        if n > cap:
            self._grow_to(max(n, cap * 2, 16))

    # -- allocation ----------------------------------------------------------

    def allocate(self) -> int:
        """Take a slot: reuse the most recently freed one, else extend."""
        if self.free:
            slot = self.free.pop()
        else:
            slot = self.count
            if slot >= MAX_INDEX:
                raise IndexOverflow("agent index space exhausted for this partition")
            self.ensure_capacity(slot + 1)
            self.count = slot + 1
        if self.alive is not None:
            self.alive[slot] = True
        return slot

    def set_state(self, slot: int, state: tuple):
        for value, arr in zip(state, self.fields.values()):
            arr[slot] = value

    # -- queries ---------------------------------------------------------------

    @property
    def n_alive(self) -> int:
        if self.alive is None:
            return self.count
        return int(np.count_nonzero(self.alive[: self.count]))

    def alive_slots(self) -> np.ndarray:
        if self.alive is None:
            return np.arange(self.count, dtype=np.intp)
        return np.flatnonzero(self.alive[: self.count])

    def is_alive(self, slot: int) -> bool:
        if slot >= self.count or slot < 0:
            return False
        return True if self.alive is None else bool(self.alive[slot])

    def state_tuple(self, slot: int) -> tuple:
        return tuple(arr[slot].item() for arr in self.fields.values())

    def clone(self) -> "AgentSegment":
        dup = object.__new__(AgentSegment)
        dup.count = self.count
        dup.immortal = self.immortal
        dup.fields = {k: v[: self.count].copy() for k, v in self.fields.items()}
        dup.alive = None if self.alive is None else self.alive[: self.count].copy()
        dup.free = list(self.free)
        return dup

    def checksum_update(self, h):
        h.update(self.count.to_bytes(8, "little"))
        if self.alive is not None:
            h.update(np.packbits(self.alive[: self.count]).tobytes())
        for name in sorted(self.fields):
            h.update(name.encode())
            h.update(self.fields[name][: self.count].tobytes())


# ---------------------------------------------------------------------------
# Write shards (one per edge type per worker per transition)
# ---------------------------------------------------------------------------


class FullEdgeShard:
    plan = EdgePlan.FULL_EDGE_LIST

    __slots__ = ("targets", "sources", "states", "producers")

    def __init__(self, record_producers: bool = False):
        self.targets = array.array("Q")
        self.sources = array.array("Q")
        self.states: list = []
        self.producers = array.array("Q") if record_producers else None

    def add(self, target, source, state=None, producer=0):
        self.targets.append(target)
        self.sources.append(source)
        self.states.append(state)
        p = self.producers
        if p is not None:
            p.append(producer)

    def extend(self, targets, sources, states=None, producer=0):
        n = len(targets)
        self.targets.frombytes(np.ascontiguousarray(targets, dtype=_U64).tobytes())
        self.sources.frombytes(np.ascontiguousarray(sources, dtype=_U64).tobytes())
        self.states.extend(states if states is not None else [None] * n)
        if self.producers is not None:
            self.producers.extend([producer] * n)

    def __len__(self):
        return len(self.targets)


class SourceOnlyShard:
    plan = EdgePlan.SOURCE_ONLY_LIST

    __slots__ = ("targets", "sources", "producers")
    states = None

    def __init__(self, record_producers: bool = False):
        self.targets = array.array("Q")
        self.sources = array.array("Q")
        self.producers = array.array("Q") if record_producers else None

    def add(self, target, source, state=None, producer=0):
        self.targets.append(target)
        self.sources.append(source)
        p = self.producers
        if p is not None:
            p.append(producer)

    def extend(self, targets, sources, states=None, producer=0):
        self.targets.frombytes(np.ascontiguousarray(targets, dtype=_U64).tobytes())
        self.sources.frombytes(np.ascontiguousarray(sources, dtype=_U64).tobytes())
        if self.producers is not None:
            self.producers.extend([producer] * len(targets))

    def __len__(self):
        return len(self.targets)


class StateOnlyShard:
    plan = EdgePlan.STATE_ONLY_LIST

    __slots__ = ("targets", "states", "producers")
    sources = None

    def __init__(self, record_producers: bool = False):
        self.targets = array.array("Q")
        self.states: list = []
        self.producers = array.array("Q") if record_producers else None

    def add(self, target, source, state=None, producer=0):
        self.targets.append(target)
        self.states.append(state)
        p = self.producers
        if p is not None:
            p.append(producer)

    def extend(self, targets, sources, states=None, producer=0):
        n = len(targets)
        self.targets.frombytes(np.ascontiguousarray(targets, dtype=_U64).tobytes())
        self.states.extend(states if states is not None else [None] * n)
        if self.producers is not None:
            self.producers.extend([producer] * n)

    def __len__(self):
        return len(self.targets)


class CountShard:
    plan = EdgePlan.COUNT_ONLY

    __slots__ = ("targets",)
    sources = None
    states = None
    producers = None

    def __init__(self, record_producers: bool = False):
        self.targets = array.array("Q")

    def add(self, target, source=0, state=None, producer=0):
        self.targets.append(target)

    def extend(self, targets, sources=None, states=None, producer=0):
        self.targets.frombytes(np.ascontiguousarray(targets, dtype=_U64).tobytes())

    def __len__(self):
        return len(self.targets)


class ExistenceShard:
    """One presence bit per target, bucketed by (type tag, partition).

    The bucket of the most recent target is cached; with SINGLE_TYPE and a
    single partition every add after the first takes the two-instruction
    path (mask, set bit).
    """

    plan = EdgePlan.EXISTENCE_BIT

    __slots__ = ("buckets", "_comp", "_bits")

    def __init__(self, record_producers: bool = False):
        self.buckets: dict[int, bytearray] = {}
        self._comp = -1
        self._bits: bytearray | None = None

    def add(self, target, source=0, state=None, producer=0):
        if target >> COMP_SHIFT == self._comp:
            try:
                self._bits[target & INDEX_MASK] = 1
                return
            except IndexError:
                pass
        self._slow_add(target)

    def _slow_add(self, target):
        comp = target >> COMP_SHIFT
        idx = target & INDEX_MASK
        bucket = self.buckets.get(comp)
        if bucket is None:
            bucket = self.buckets[comp] = bytearray(max(_EB_BUCKET_START, idx + 1))
        elif idx >= len(bucket):
            bucket.extend(b"\x00" * (idx + 1 - len(bucket)))
        bucket[idx] = 1
        self._comp = comp
        self._bits = bucket

    def specialized_adder(self, comp: int):
        """A single-bucket adder: one masked store per call.

        Valid only when every target shares ``comp``'s (tag, partition)
        composite, which SINGLE_TYPE plus a single target partition
        guarantees; the caller is responsible for that guarantee.
        """
        bucket = self.buckets.get(comp)
        if bucket is None:
            bucket = self.buckets[comp] = bytearray(_EB_BUCKET_START)
        self._comp = comp
        self._bits = bucket

        def add(target, source=0, state=None, producer=0):
            try:
                bucket[target & INDEX_MASK] = 1
            except IndexError:
                idx = target & INDEX_MASK
                bucket.extend(b"\x00" * (idx + 1 - len(bucket)))
                bucket[idx] = 1

        return add

    def has(self, target) -> bool:
        bucket = self.buckets.get(target >> COMP_SHIFT)
        if bucket is None:
            return False
        idx = target & INDEX_MASK
        return idx < len(bucket) and bucket[idx] != 0

    def extend(self, targets, sources=None, states=None, producer=0):
        targets = np.ascontiguousarray(targets, dtype=_U64)
        comps = targets >> _U64(COMP_SHIFT)
        idxs = (targets & _U64(INDEX_MASK)).astype(np.intp)
        for comp in np.unique(comps):
            sel = idxs[comps == comp]
            top = int(sel.max()) + 1
            key = int(comp)
            bucket = self.buckets.get(key)
            if bucket is None:
                bucket = self.buckets[key] = bytearray(max(_EB_BUCKET_START, top))
            elif top > len(bucket):
                bucket.extend(b"\x00" * (top - len(bucket)))
            view = np.frombuffer(bucket, dtype=np.uint8)
            # bytearray buffers are writable through frombuffer views
            view.flags.writeable = True
            view[sel] = 1

    def __len__(self):
        return sum(int(np.count_nonzero(np.frombuffer(b, dtype=np.uint8))) for b in self.buckets.values())


class SingleEdgeShard:
    """At most one edge per target: a target-keyed mapping."""

    plan = EdgePlan.SINGLE_FULL_EDGE

    __slots__ = ("entries",)

    def __init__(self, record_producers: bool = False):
        # target -> (producer, source, state); later adds overwrite.
        self.entries: dict[int, tuple] = {}

    def add(self, target, source=0, state=None, producer=0):
        self.entries[target] = (producer, source, state)

    def has(self, target) -> bool:
        return target in self.entries

    def extend(self, targets, sources=None, states=None, producer=0):
        n = len(targets)
        sources = sources if sources is not None else [0] * n
        states = states if states is not None else [None] * n
        for t, s, st in zip(targets, sources, states):
            self.entries[int(t)] = (producer, int(s), st)

    def __len__(self):
        return len(self.entries)


_SHARD_CLASSES = {
    EdgePlan.FULL_EDGE_LIST: FullEdgeShard,
    EdgePlan.SOURCE_ONLY_LIST: SourceOnlyShard,
    EdgePlan.STATE_ONLY_LIST: StateOnlyShard,
    EdgePlan.COUNT_ONLY: CountShard,
    EdgePlan.EXISTENCE_BIT: ExistenceShard,
    EdgePlan.SINGLE_FULL_EDGE: SingleEdgeShard,
}


def make_shard(info: EdgeTypeInfo, record_producers: bool = False):
    return _SHARD_CLASSES[info.plan](record_producers)


def plan_specialized_adder(shard, info: EdgeTypeInfo, target_parts):
    """The leanest raw adder the plan and hints allow for this shard.

    An EXISTENCE_BIT type whose SINGLE_TYPE target population lives on a
    single partition collapses to one masked store per call; everything
    else uses the shard's general add. ``target_parts`` is the sorted list
    of partitions currently holding the target type's agents (ignored
    unless SINGLE_TYPE is set).
    """
    if (
        info.plan is EdgePlan.EXISTENCE_BIT
        and info.single_type_tag is not None
        and list(target_parts) in ([], [0])
    ):
        return shard.specialized_adder(info.single_type_tag << PART_BITS)
    return shard.add


def make_checked_adder(
    shard,
    info: EdgeTypeInfo,
    sink: ViolationSink,
    check_single_edge: bool,
    check_single_type: bool,
) -> Callable:
    """Wrap a shard's add with the contract checks that apply to its type."""
    st_tag = info.single_type_tag if check_single_type else None
    se = check_single_edge and info.plan in (
        EdgePlan.EXISTENCE_BIT,
        EdgePlan.SINGLE_FULL_EDGE,
    )
    if st_tag is None and not se:
        return shard.add
    name = info.name
    raw_add = shard.add

    def add(target, source=0, state=None, producer=0):
        if st_tag is not None and target >> 56 != st_tag:
            sink.report(
                "single_type", name, target, producer,
                f"edge targets an agent of the wrong type (expected tag {st_tag})",
            )
        if se and shard.has(target):
            sink.report(
                "single_edge", name, target, producer,
                "second edge added to a SINGLE_EDGE target",
            )
        raw_add(target, source, state, producer)

    return add


def checked_extend(
    shard,
    info: EdgeTypeInfo,
    sink: ViolationSink,
    check_single_edge: bool,
    check_single_type: bool,
    targets,
    sources=None,
    states=None,
    producer=0,
):
    """Bulk add with vectorized contract checks."""
    targets_arr = np.ascontiguousarray(targets, dtype=_U64)
    if check_single_type and info.single_type_tag is not None:
        bad = np.flatnonzero((targets_arr >> _U64(56)) != _U64(info.single_type_tag))
        if bad.size:
            sink.report(
                "single_type", info.name, int(targets_arr[bad[0]]), producer,
                f"edge targets an agent of the wrong type (expected tag {info.single_type_tag})",
            )
    if check_single_edge and info.plan in (EdgePlan.EXISTENCE_BIT, EdgePlan.SINGLE_FULL_EDGE):
        uniq, counts = np.unique(targets_arr, return_counts=True)
        dup = np.flatnonzero(counts > 1)
        if dup.size:
            sink.report(
                "single_edge", info.name, int(uniq[dup[0]]), producer,
                "second edge added to a SINGLE_EDGE target",
            )
        for t in uniq.tolist():
            if shard.has(t):
                sink.report(
                    "single_edge", info.name, t, producer,
                    "second edge added to a SINGLE_EDGE target",
                )
                break
    shard.extend(targets_arr, sources, states, producer)


# ---------------------------------------------------------------------------
# Read containers (immutable between commits)
# ---------------------------------------------------------------------------


def _concat_u64(parts: list) -> np.ndarray:
    arrays = [np.frombuffer(p, dtype=_U64) if isinstance(p, array.array) else np.asarray(p, dtype=_U64) for p in parts]
    arrays = [a for a in arrays if a.size]
    if not arrays:
        return _EMPTY_U64
    if len(arrays) == 1:
        return arrays[0].copy()
    return np.concatenate(arrays)


def _is_nondecreasing(a: np.ndarray) -> bool:
    return a.size < 2 or bool(np.all(a[1:] >= a[:-1]))


class ListEdgeRead:
    """CSR-style read container for the three list plans.

    Arrays are sorted by target; per-target runs are ordered by producing
    agent. ``index`` maps a target id to its (start, end) run.
    """

    __slots__ = (
        "info", "targets", "sources", "states", "index",
        "sources_local", "single_source_comp",
    )

    def __init__(self, info: EdgeTypeInfo, targets, sources, states):
        self.info = info
        self.targets = targets
        self.sources = sources
        self.states = states
        self.index: dict[int, tuple[int, int]] = {}
        self._build_index()
        self.sources_local = None
        self.single_source_comp = None
        if sources is not None and sources.size:
            comps = sources >> _U64(COMP_SHIFT)
            first = comps[0]
            if np.all(comps == first):
                self.single_source_comp = int(first)
                self.sources_local = (sources & _U64(INDEX_MASK)).astype(np.intp)

    def _build_index(self):
        t = self.targets
        if not t.size:
            return
        starts = np.flatnonzero(np.r_[True, t[1:] != t[:-1]])
        ends = np.r_[starts[1:], t.size]
        self.index = dict(zip(t[starts].tolist(), zip(starts.tolist(), ends.tolist())))

    # -- queries -------------------------------------------------------------

    @property
    def plan(self):
        return self.info.plan

    def n_stored(self) -> int:
        return int(self.targets.size)

    def slice_for(self, aid: int):
        return self.index.get(aid)

    def has_for(self, aid: int) -> bool:
        return aid in self.index

    def count_for(self, aid: int) -> int:
        sl = self.index.get(aid)
        return 0 if sl is None else sl[1] - sl[0]

    def sources_for(self, aid: int) -> np.ndarray:
        if self.sources is None:
            raise HintViolation(
                f"edge type {self.info.name!r} does not store source ids (IGNORE_FROM)"
            )
        sl = self.index.get(aid)
        return _EMPTY_U64 if sl is None else self.sources[sl[0]: sl[1]]

    def states_for(self, aid: int) -> list:
        if self.info.stateless:
            raise HintViolation(
                f"edge type {self.info.name!r} is STATELESS; edges carry no state"
            )
        sl = self.index.get(aid)
        if sl is None:
            return []
        if self.states is None:
            return [()] * (sl[1] - sl[0])
        return self.states[sl[0]: sl[1]]

    def records_for(self, aid: int) -> list[EdgeRecord]:
        sl = self.index.get(aid)
        if sl is None:
            return []
        lo, hi = sl
        name = self.info.name
        srcs = self.sources
        sts = self.states
        default_state = None if self.info.stateless else ()
        out = []
        for k in range(lo, hi):
            out.append(
                EdgeRecord(
                    int(srcs[k]) if srcs is not None else None,
                    sts[k] if sts is not None else default_state,
                    name,
                )
            )
        return out

    def edge_endpoints(self):
        if self.sources is None:
            return None
        return self.targets, self.sources

    # -- maintenance -----------------------------------------------------------

    def filtered(self, alive_fn) -> "ListEdgeRead":
        if not self.targets.size:
            return self
        keep = alive_fn(self.targets)
        if self.sources is not None:
            keep &= alive_fn(self.sources)
        if bool(keep.all()):
            return self
        idx = np.flatnonzero(keep)
        return ListEdgeRead(
            self.info,
            self.targets[idx],
            self.sources[idx] if self.sources is not None else None,
            [self.states[i] for i in idx.tolist()] if self.states is not None else None,
        )

    def checksum_update(self, h):
        h.update(self.targets.tobytes())
        if self.sources is not None:
            h.update(self.sources.tobytes())
        if self.states is not None:
            h.update(repr(self.states).encode())


class CountEdgeRead:
    __slots__ = ("info", "counts")

    def __init__(self, info: EdgeTypeInfo, counts: dict[int, int]):
        self.info = info
        self.counts = counts

    @property
    def plan(self):
        return self.info.plan

    def n_stored(self) -> int:
        return sum(self.counts.values())

    def has_for(self, aid: int) -> bool:
        return aid in self.counts

    def count_for(self, aid: int) -> int:
        return self.counts.get(aid, 0)

    def sources_for(self, aid: int):
        raise HintViolation(
            f"edge type {self.info.name!r} stores only per-target counts"
        )

    states_for = sources_for

    def records_for(self, aid: int):
        raise HintViolation(
            f"edge type {self.info.name!r} stores only per-target counts; "
            "edge records are not retrievable"
        )

    def edge_endpoints(self):
        return None

    def filtered(self, alive_fn) -> "CountEdgeRead":
        if not self.counts:
            return self
        ids = np.fromiter(self.counts.keys(), dtype=_U64, count=len(self.counts))
        keep = alive_fn(ids)
        if bool(keep.all()):
            return self
        kept = set(ids[keep].tolist())
        return CountEdgeRead(self.info, {k: v for k, v in self.counts.items() if k in kept})

    def checksum_update(self, h):
        for k in sorted(self.counts):
            h.update(k.to_bytes(8, "little"))
            h.update(self.counts[k].to_bytes(8, "little"))


class ExistenceEdgeRead:
    __slots__ = ("info", "buckets")

    def __init__(self, info: EdgeTypeInfo, buckets: dict[int, np.ndarray]):
        self.info = info
        self.buckets = buckets  # comp -> uint8 array of presence bits

    @property
    def plan(self):
        return self.info.plan

    def n_stored(self) -> int:
        return sum(int(np.count_nonzero(b)) for b in self.buckets.values())

    def has_for(self, aid: int) -> bool:
        bucket = self.buckets.get(aid >> COMP_SHIFT)
        if bucket is None:
            return False
        idx = aid & INDEX_MASK
        return idx < bucket.size and bucket[idx] != 0

    def count_for(self, aid: int):
        raise HintViolation(
            f"edge type {self.info.name!r} stores only an existence bit; "
            "edge multiplicity is not retrievable"
        )

    def sources_for(self, aid: int):
        raise HintViolation(
            f"edge type {self.info.name!r} stores only an existence bit"
        )

    states_for = sources_for

    def records_for(self, aid: int):
        raise HintViolation(
            f"edge type {self.info.name!r} stores only an existence bit; "
            "edge records are not retrievable"
        )

    def edge_endpoints(self):
        return None

    def filtered(self, alive_fn) -> "ExistenceEdgeRead":
        out = {}
        changed = False
        for comp, bucket in self.buckets.items():
            set_idx = np.flatnonzero(bucket)
            if not set_idx.size:
                continue
            ids = (_U64(comp << COMP_SHIFT) + set_idx.astype(_U64))
            keep = alive_fn(ids)
            if bool(keep.all()):
                out[comp] = bucket
                continue
            changed = True
            new = np.zeros_like(bucket)
            new[set_idx[keep]] = 1
            out[comp] = new
        return ExistenceEdgeRead(self.info, out) if changed else self

    def checksum_update(self, h):
        for comp in sorted(self.buckets):
            h.update(comp.to_bytes(8, "little"))
            h.update(np.flatnonzero(self.buckets[comp]).astype(np.int64).tobytes())


class SingleEdgeRead:
    __slots__ = ("info", "entries")

    def __init__(self, info: EdgeTypeInfo, entries: dict[int, tuple]):
        self.info = info
        self.entries = entries  # target -> (source | None, state | None)

    @property
    def plan(self):
        return self.info.plan

    def n_stored(self) -> int:
        return len(self.entries)

    def has_for(self, aid: int) -> bool:
        return aid in self.entries

    def count_for(self, aid: int):
        raise HintViolation(
            f"edge type {self.info.name!r} holds at most one edge per target; "
            "use has_edge"
        )

    def sources_for(self, aid: int) -> np.ndarray:
        if not self.info.has_source:
            raise HintViolation(
                f"edge type {self.info.name!r} does not store source ids (IGNORE_FROM)"
            )
        e = self.entries.get(aid)
        return _EMPTY_U64 if e is None else np.array([e[0]], dtype=_U64)

    def states_for(self, aid: int) -> list:
        if self.info.stateless:
            raise HintViolation(
                f"edge type {self.info.name!r} is STATELESS; edges carry no state"
            )
        e = self.entries.get(aid)
        if e is None:
            return []
        return [e[1] if self.info.has_state else ()]

    def records_for(self, aid: int) -> list[EdgeRecord]:
        e = self.entries.get(aid)
        if e is None:
            return []
        source = e[0] if self.info.has_source else None
        if self.info.stateless:
            state = None
        else:
            state = e[1] if self.info.has_state else ()
        return [EdgeRecord(source, state, self.info.name)]

    def edge_endpoints(self):
        if not self.info.has_source:
            return None
        if not self.entries:
            return _EMPTY_U64, _EMPTY_U64
        items = sorted(self.entries.items())
        targets = np.array([t for t, _ in items], dtype=_U64)
        sources = np.array([e[0] for _, e in items], dtype=_U64)
        return targets, sources

    def filtered(self, alive_fn) -> "SingleEdgeRead":
        if not self.entries:
            return self
        items = list(self.entries.items())
        ids = np.array([t for t, _ in items], dtype=_U64)
        keep = alive_fn(ids)
        if self.info.has_source:
            keep &= alive_fn(np.array([e[0] for _, e in items], dtype=_U64))
        if bool(keep.all()):
            return self
        return SingleEdgeRead(
            self.info, {t: e for (t, e), k in zip(items, keep.tolist()) if k}
        )

    def checksum_update(self, h):
        for t in sorted(self.entries):
            e = self.entries[t]
            h.update(t.to_bytes(8, "little"))
            if self.info.has_source:
                h.update(int(e[0]).to_bytes(8, "little"))
            if self.info.has_state:
                h.update(repr(e[1]).encode())


def empty_read_container(info: EdgeTypeInfo):
    plan = info.plan
    if plan is EdgePlan.COUNT_ONLY:
        return CountEdgeRead(info, {})
    if plan is EdgePlan.EXISTENCE_BIT:
        return ExistenceEdgeRead(info, {})
    if plan is EdgePlan.SINGLE_FULL_EDGE:
        return SingleEdgeRead(info, {})
    return ListEdgeRead(
        info,
        _EMPTY_U64,
        _EMPTY_U64 if info.has_source else None,
        [] if info.has_state else None,
    )


# ---------------------------------------------------------------------------
# Merge: shards (+ optional carryover) -> read container
# ---------------------------------------------------------------------------


def _merge_list_shards(info: EdgeTypeInfo, shards: list):
    """Concatenate shards in worker order, then order by producer."""
    targets = _concat_u64([s.targets for s in shards])
    if not targets.size:
        return targets, None, None
    sources = _concat_u64([s.sources for s in shards]) if info.has_source else None
    states = None
    if info.has_state:
        states = []
        for s in shards:
            states.extend(s.states)
    have_producers = all(s.producers is not None for s in shards)
    if have_producers:
        producers = _concat_u64([s.producers for s in shards])
        if not _is_nondecreasing(producers):
            order = np.argsort(producers, kind="stable")
            targets = targets[order]
            if sources is not None:
                sources = sources[order]
            if states is not None:
                states = [states[i] for i in order.tolist()]
    return targets, sources, states


def build_list_read(
    info: EdgeTypeInfo, shards: list, carryover: ListEdgeRead | None
) -> ListEdgeRead:
    targets, sources, states = _merge_list_shards(info, shards)
    if carryover is not None and carryover.targets.size:
        # Existing edges precede this step's additions within each target.
        targets = np.concatenate([carryover.targets, targets])
        if sources is not None:
            sources = np.concatenate([carryover.sources, sources])
        if states is not None:
            states = carryover.states + states
    if targets.size and not _is_nondecreasing(targets):
        order = np.argsort(targets, kind="stable")
        targets = targets[order]
        if sources is not None:
            sources = sources[order]
        if states is not None:
            states = [states[i] for i in order.tolist()]
    return ListEdgeRead(info, targets, sources, states)


def build_count_read(
    info: EdgeTypeInfo, shards: list, carryover: CountEdgeRead | None
) -> CountEdgeRead:
    counts: dict[int, int] = dict(carryover.counts) if carryover is not None else {}
    targets = _concat_u64([s.targets for s in shards])
    if targets.size:
        uniq, cnts = np.unique(targets, return_counts=True)
        for t, c in zip(uniq.tolist(), cnts.tolist()):
            counts[t] = counts.get(t, 0) + c
    return CountEdgeRead(info, counts)


def build_existence_read(
    info: EdgeTypeInfo,
    shards: list,
    carryover: ExistenceEdgeRead | None,
    sink: ViolationSink | None,
) -> ExistenceEdgeRead:
    buckets: dict[int, np.ndarray] = {}
    if carryover is not None:
        for comp, bucket in carryover.buckets.items():
            buckets[comp] = bucket.copy()
    for shard in shards:
        for comp, raw in shard.buckets.items():
            new = np.frombuffer(bytes(raw), dtype=np.uint8)
            old = buckets.get(comp)
            if old is None:
                buckets[comp] = new.copy()
                continue
            if old.size < new.size:
                old = np.r_[old, np.zeros(new.size - old.size, dtype=np.uint8)]
            elif new.size < old.size:
                new = np.r_[new, np.zeros(old.size - new.size, dtype=np.uint8)]
            if sink is not None:
                clash = np.flatnonzero(old & new)
                if clash.size:
                    sink.report(
                        "single_edge", info.name,
                        (comp << COMP_SHIFT) | int(clash[0]), 0,
                        "SINGLE_EDGE target received edges from multiple workers",
                    )
            buckets[comp] = old | new
    return ExistenceEdgeRead(info, buckets)


def build_single_read(
    info: EdgeTypeInfo,
    shards: list,
    carryover: SingleEdgeRead | None,
    sink: ViolationSink | None,
) -> SingleEdgeRead:
    # Later producers win; carryover counts as earliest.
    staged: dict[int, tuple] = {}
    for shard in shards:
        for target, (producer, source, state) in shard.entries.items():
            prev = staged.get(target)
            if prev is not None:
                if sink is not None:
                    sink.report(
                        "single_edge", info.name, target, producer,
                        "SINGLE_EDGE target received edges from multiple workers",
                    )
                if producer < prev[0]:
                    continue
            staged[target] = (producer, source, state)
    entries: dict[int, tuple] = dict(carryover.entries) if carryover is not None else {}
    for target, (producer, source, state) in staged.items():
        if sink is not None and target in entries:
            sink.report(
                "single_edge", info.name, target, producer,
                "SINGLE_EDGE target already had a retained edge",
            )
        entries[target] = (source, state if info.has_state else None)
    return SingleEdgeRead(info, entries)


def build_read_container(
    info: EdgeTypeInfo,
    shards: list,
    carryover=None,
    sink: ViolationSink | None = None,
    check_single_edge: bool = False,
):
    merge_sink = sink if check_single_edge else None
    plan = info.plan
    if plan is EdgePlan.COUNT_ONLY:
        return build_count_read(info, shards, carryover)
    if plan is EdgePlan.EXISTENCE_BIT:
        return build_existence_read(info, shards, carryover, merge_sink)
    if plan is EdgePlan.SINGLE_FULL_EDGE:
        return build_single_read(info, shards, carryover, merge_sink)
    return build_list_read(info, shards, carryover)


def validate_endpoints(container, exists_fn):
    """Ensure every stored endpoint refers to an agent slot that exists.

    ``exists_fn`` maps an id array to a boolean array (allocated slots,
    dead or alive). Dangling *references* are a model bug and fail fast;
    dead endpoints are handled separately by the post-step edge sweep.
    """
    if isinstance(container, ListEdgeRead):
        arrays = [container.targets]
        if container.sources is not None:
            arrays.append(container.sources)
    elif isinstance(container, CountEdgeRead):
        arrays = [np.fromiter(container.counts.keys(), dtype=_U64, count=len(container.counts))]
    elif isinstance(container, ExistenceEdgeRead):
        arrays = []
        for comp, bucket in container.buckets.items():
            idx = np.flatnonzero(bucket)
            if idx.size:
                arrays.append(_U64(comp << COMP_SHIFT) + idx.astype(_U64))
    else:
        endpoints = container.edge_endpoints()
        if endpoints is None:
            arrays = [np.fromiter(container.entries.keys(), dtype=_U64, count=len(container.entries))]
        else:
            arrays = [a for a in endpoints]
    for arr in arrays:
        if not arr.size:
            continue
        ok = exists_fn(arr)
        if not bool(ok.all()):
            bad = int(arr[np.flatnonzero(~ok)[0]])
            raise ContractViolation(
                f"edge of type {container.info.name!r} references nonexistent "
                f"agent {bad:#x}"
            )
