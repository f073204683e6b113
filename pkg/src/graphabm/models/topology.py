"""Directed visibility-graph builders for the bundled models.

All builders return (targets, sources) as uint64 arrays of *local* agent
indices, grouped by target in ascending order so that the initial commit
can skip re-sorting. Callers offset them into agent ids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import UsageError

_U64 = np.uint64


@dataclass(frozen=True)
class Complete:
    """Every agent sees every other; a self-loop per agent is included."""

    def size(self, n: int) -> int:
        return n

    def build(self, n: int):
        targets = np.repeat(np.arange(n, dtype=_U64), n)
        sources = np.tile(np.arange(n, dtype=_U64), n)
        return targets, sources


@dataclass(frozen=True)
class Regular:
    """Ring lattice: each agent sees its k nearest ring neighbors.

    ``k`` must be even (k/2 on each side). With ``self_loops`` every agent
    also sees itself, giving in-degree k+1.
    """

    k: int
    self_loops: bool = True

    def size(self, n: int) -> int:
        return n

    def build(self, n: int):
        k = self.k
        if k % 2 or k < 0:
            raise UsageError(f"regular topology needs an even degree, got {k}")
        if k >= n:
            raise UsageError(f"degree {k} too large for {n} agents")
        half = k // 2
        offs = list(range(-half, 0)) + ([0] if self.self_loops else []) + list(range(1, half + 1))
        offsets = np.array(offs, dtype=np.int64)
        base = np.arange(n, dtype=np.int64)[:, None]
        sources = ((base + offsets[None, :]) % n).astype(_U64).ravel()
        targets = np.repeat(np.arange(n, dtype=_U64), len(offs))
        return targets, sources


@dataclass(frozen=True)
class Cliques:
    """A ring of equal-size cliques joined through one connector each.

    Vertex ``j*size`` is clique j's connector; it additionally sees the
    connectors of the two adjacent cliques (both directions present).
    """

    count: int
    size_each: int
    self_loops: bool = True

    def size(self, n: int | None = None) -> int:
        return self.count * self.size_each

    def build(self, n: int | None = None):
        c, s = self.count, self.size_each
        if c < 1 or s < 1:
            raise UsageError("clique topology needs count >= 1 and size >= 1")
        if n is not None and n != c * s:
            raise UsageError(f"clique topology has {c * s} agents, not {n}")
        targets = []
        sources = []
        members = np.arange(s, dtype=np.int64)
        for j in range(c):
            base = j * s
            clique = (base + members).astype(_U64)
            for m in range(s):
                vertex = base + m
                seen = clique if self.self_loops else clique[members != m]
                if m == 0 and c > 1:
                    left = ((j - 1) % c) * s
                    right = ((j + 1) % c) * s
                    extra = sorted({left, right} - {vertex})
                    seen = np.sort(np.r_[seen, np.array(extra, dtype=_U64)])
                targets.append(np.full(seen.size, vertex, dtype=_U64))
                sources.append(seen)
        return np.concatenate(targets), np.concatenate(sources)


def build_topology(topology, n: int):
    targets, sources = topology.build(n)
    return targets, sources
