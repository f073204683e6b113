"""Bundled reference models."""

from . import episim, hk, topology
from .topology import Cliques, Complete, Regular

__all__ = ["episim", "hk", "topology", "Complete", "Regular", "Cliques"]
