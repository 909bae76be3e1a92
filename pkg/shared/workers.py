from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from config import settings

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def worker_count(threads: Optional[int] = None) -> int:
    n = threads if threads is not None else settings.WORKER_THREADS
    return max(1, int(n or 1))


def parallel_map(fn: Callable[[T], R], items: Iterable[T], *, threads: Optional[int] = None) -> List[R]:
    """
    fn 을 items 에 적용. 결과는 항상 입력 순서 그대로 (스레드 수와 무관하게 결정적).
    - threads 미지정 시 settings.WORKER_THREADS (CLI --threads 로 덮어씀)
    """
    batch = list(items)
    n = worker_count(threads)
    if n == 1 or len(batch) < 2:
        return [fn(x) for x in batch]
    logger.debug(f"parallel_map: {len(batch)} items on {n} threads")
    with ThreadPoolExecutor(max_workers=n) as pool:
        # map 은 제출 순서대로 결과를 돌려준다
        return list(pool.map(fn, batch))
