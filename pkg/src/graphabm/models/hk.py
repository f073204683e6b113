"""Bounded-confidence opinion dynamics.

Each agent holds an opinion in [0, 1] and, once per step, averages the
opinions of the neighbors it can see whose opinion lies within a confidence
bound eps of its own. Visibility is a directed edge type; every topology
includes a self-loop so the agent's own opinion is always in the average.

The visibility edge type is declared Stateless + SingleType by default
(only source ids are stored); ``hints=False`` registers it with no hints,
which stores full edge records and must produce bit-identical dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..engine import TransitionSpec, run
from ..schema import AgentTypeDecl, EdgeTypeDecl, Hint, Schema
from ..sim import Simulation
from .topology import Complete, build_topology

AGENT = "Person"
EDGE = "Sees"


@dataclass(frozen=True)
class HKConfig:
    n: int
    epsilon: float
    topology: object = field(default_factory=Complete)
    seed: int = 0
    hints: bool = True


def hk_step(view, epsilon) -> float:
    """One agent's updated opinion: the mean over visible opinions within
    the confidence bound (the self-loop keeps the set nonempty).

    The float mean of near-identical values can round one ulp outside
    their range, so it is clamped to the hull of the averaged set; the
    exact-arithmetic mean always lies inside it.
    """
    visible = view.neighbor_field(EDGE, "opinion")
    own = view.field("opinion")
    close = visible[np.abs(visible - own) <= epsilon]
    mean = close.mean()
    lo = close.min()
    if mean < lo:
        return lo
    hi = close.max()
    if mean > hi:
        return hi
    return mean


def hk_transition(view, params, _globals):
    return (hk_step(view, params["epsilon"]),)


HK_SPEC = TransitionSpec(
    callable_types=(AGENT,),
    read_types=(EDGE, AGENT),
    write_types=(AGENT,),
)


def build_hk(config: HKConfig, checks="on") -> Simulation:
    """A simulation holding the initial opinion graph for a config."""
    schema = Schema()
    schema.register_agent_type(
        AgentTypeDecl(AGENT, (("opinion", "float64"),), immortal=True)
    )
    if config.hints:
        schema.register_edge_type(
            EdgeTypeDecl(
                EDGE,
                hints=Hint.STATELESS | Hint.SINGLE_TYPE,
                single_type_target=AGENT,
            )
        )
    else:
        schema.register_edge_type(EdgeTypeDecl(EDGE))

    n = config.topology.size(config.n)
    sim = Simulation(
        schema, seed=config.seed, params={"epsilon": config.epsilon}, checks=checks
    )
    rng = np.random.default_rng(config.seed)
    ids = sim.add_agents(AGENT, n, {"opinion": rng.random(n)})
    targets, sources = build_topology(config.topology, n)
    base = np.uint64(ids[0])
    sim.add_edges(EDGE, base + targets, base + sources)
    sim.commit_initial()
    return sim


def hk_program():
    return [(hk_transition, HK_SPEC)]


def opinions(sim: Simulation) -> np.ndarray:
    """Current opinions, ascending by agent id (creation order)."""
    return sim.field_array(AGENT, "opinion")


def cluster_count(values: np.ndarray, tol: float = 1e-9) -> int:
    """Number of opinion clusters: runs of sorted values separated by more
    than ``tol``."""
    if values.size == 0:
        return 0
    ordered = np.sort(values)
    return 1 + int(np.count_nonzero(np.diff(ordered) > tol))


def hk_metrics(sim: Simulation) -> dict:
    ops = opinions(sim)
    return {
        "min": sim.aggregate(AGENT, lambda s: s[0], "min"),
        "max": sim.aggregate(AGENT, lambda s: s[0], "max"),
        "mean": sim.aggregate(AGENT, lambda s: s[0], "sum") / ops.size,
        "clusters": cluster_count(ops),
    }


@dataclass
class HKResult:
    final_opinions: np.ndarray
    metrics: list[dict]
    trajectory: list[np.ndarray]
    checksum: str
    transition_wall_s: float
    step_walls: list


def hk_run(config: HKConfig, steps: int, *, workers: int = 1,
           strategy: str = "contiguous", checks="on",
           collect_metrics: bool = True,
           record_trajectory: bool = False) -> HKResult:
    """Run the model for ``steps`` steps; deterministic given the seed."""
    sim = build_hk(config, checks=checks)
    metrics: list[dict] = []
    trajectory: list[np.ndarray] = []

    def on_step(s):
        if collect_metrics:
            metrics.append(hk_metrics(s))
        if record_trajectory:
            trajectory.append(opinions(s).copy())

    run(
        sim, steps, hk_program(),
        workers=workers, strategy=strategy,
        on_step=on_step if (collect_metrics or record_trajectory) else None,
    )
    walls = [m["wall_ms"] for m in sim.step_metrics]
    return HKResult(
        final_opinions=opinions(sim),
        metrics=metrics,
        trajectory=trajectory,
        checksum=sim.state_checksum(),
        transition_wall_s=sum(walls) / 1e3,
        step_walls=walls,
    )
