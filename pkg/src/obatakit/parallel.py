"""Ordered fan-out over independent work items."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> list[R]:
    """``[fn(x) for x in items]`` using up to ``threads`` workers.

    Results are returned in input order, so reductions over them do not
    depend on scheduling.
    """
    items = list(items)
    if threads < 1:
        raise ValueError("threads must be >= 1")
    if threads == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
