"""Packed 64-bit agent identifiers.

An agent id encodes (type tag, partition, local index) as
``tag:8 | partition:20 | index:36``. Ids are plain Python ints so they stay
cheap to pass around and to store in numpy ``uint64`` arrays.
"""

from __future__ import annotations

from .errors import IndexOverflow

TYPE_BITS = 8
PART_BITS = 20
INDEX_BITS = 36

INDEX_MASK = (1 << INDEX_BITS) - 1
PART_MASK = (1 << PART_BITS) - 1
TYPE_MASK = (1 << TYPE_BITS) - 1

MAX_AGENT_TYPES = 255
MAX_PARTITIONS = 1 << PART_BITS
MAX_INDEX = 1 << INDEX_BITS

# Shift that strips the local index, leaving the (tag, partition) composite.
COMP_SHIFT = INDEX_BITS


def agent_id(tag: int, part: int, index: int) -> int:
    """Pack a (tag, partition, index) triple into one 64-bit id."""
    if index >= MAX_INDEX or index < 0:
        raise IndexOverflow(f"local index {index} outside 36-bit range")
    if part >= MAX_PARTITIONS or part < 0:
        raise IndexOverflow(f"partition {part} outside 20-bit range")
    if tag > TYPE_MASK or tag < 0:
        raise IndexOverflow(f"type tag {tag} outside 8-bit range")
    return (tag << (PART_BITS + INDEX_BITS)) | (part << INDEX_BITS) | index


def type_tag(aid: int) -> int:
    return aid >> (PART_BITS + INDEX_BITS)


def partition_of(aid: int) -> int:
    return (aid >> INDEX_BITS) & PART_MASK


def local_index(aid: int) -> int:
    return aid & INDEX_MASK


def split_id(aid: int) -> tuple[int, int, int]:
    """Inverse of :func:`agent_id`."""
    return (
        aid >> (PART_BITS + INDEX_BITS),
        (aid >> INDEX_BITS) & PART_MASK,
        aid & INDEX_MASK,
    )
