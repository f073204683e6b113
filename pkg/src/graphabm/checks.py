"""Runtime contract checks.

Checks verify declared contracts (SINGLE_EDGE multiplicity, SINGLE_TYPE
target tag, read/write type sets) while a model runs. They are on by
default; once a model is trusted they can be disabled for speed, or set
to warn mode, which records violations and continues. Disabling checks
never changes the results of a contract-respecting model.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ContractViolation


@dataclass(frozen=True)
class CheckConfig:
    """Which contract checks run, and what happens on a violation.

    ``mode`` is one of ``"error"`` (raise, aborting the step) or ``"warn"``
    (record the violation and continue). Individual checks can be toggled;
    ``enabled=False`` turns them all off regardless of the toggles.
    """

    enabled: bool = True
    single_edge: bool = True
    single_type: bool = True
    write_set: bool = True
    read_set: bool = True
    mode: str = "error"

    @classmethod
    def from_name(cls, name: str) -> "CheckConfig":
        """Build from the CLI-style names ``on``, ``off``, ``warn``."""
        if name == "on":
            return cls()
        if name == "off":
            return cls(enabled=False)
        if name == "warn":
            return cls(mode="warn")
        raise ValueError(f"unknown checks mode {name!r}")

    def check_single_edge(self) -> bool:
        return self.enabled and self.single_edge

    def check_single_type(self) -> bool:
        return self.enabled and self.single_type


@dataclass(frozen=True)
class Violation:
    """One detected contract breach, with enough context to reproduce."""

    kind: str
    edge_type: str
    target: int
    producer: int
    step: int
    message: str


class ViolationSink:
    """Collects violations during one transition.

    In error mode the first violation raises immediately; in warn mode all
    violations are kept and merged into the simulation's report log at the
    step barrier.
    """

    def __init__(self, mode: str, step: int):
        self.mode = mode
        self.step = step
        self.reports: list[Violation] = []

    def report(self, kind: str, edge_type: str, target: int, producer: int, message: str):
        v = Violation(
            kind=kind,
            edge_type=edge_type,
            target=target,
            producer=producer,
            step=self.step,
            message=message,
        )
        if self.mode == "error":
            raise ContractViolation(
                f"{message} (edge type {edge_type!r}, target {target:#x}, "
                f"producer {producer:#x}, step {self.step})"
            )
        self.reports.append(v)
