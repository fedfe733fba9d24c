from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

T = TypeVar("T")
R = TypeVar("R")

log = logging.getLogger(__name__)


class AgentPool:
    """Fan-out for one x-phase; `map` returns when every agent has finished (join barrier).

    Results come back in the order of `items` whatever the completion order,
    so worker count never changes the outcome.
    """

    def __init__(self, workers: int = 1) -> None:
        self.workers = max(1, int(workers))
        self._executor: Optional[ThreadPoolExecutor] = None

    def __enter__(self) -> "AgentPool":
        if self.workers > 1:
            self._executor = ThreadPoolExecutor(max_workers=self.workers, thread_name_prefix="agent")
            log.debug("agent pool started", extra={"workers": self.workers})
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def map(self, fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
        items = list(items)
        if self._executor is None:
            return [fn(it) for it in items]
        return list(self._executor.map(fn, items))
