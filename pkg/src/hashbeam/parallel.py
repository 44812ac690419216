import sys
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

from tqdm import tqdm

T = TypeVar("T")
R = TypeVar("R")


def map_ordered(
    fn: Callable[[T], R],
    items: Iterable[T],
    threads: int = 1,
    desc: str | None = None,
    progress: bool = False,
) -> list[R]:
    """
    Apply fn to every item, returning results in input order.

    Work runs on a thread pool when threads > 1; numpy and LAPACK release the
    GIL for the heavy parts. A tqdm bar is shown only when `progress` is set
    and stderr is a terminal.
    """
    items = list(items) if not isinstance(items, Sequence) else items
    show = progress and sys.stderr.isatty()
    with tqdm(total=len(items), desc=desc, disable=not show, leave=False) as bar:
        if threads <= 1 or len(items) <= 1:
            results = []
            for item in items:
                results.append(fn(item))
                bar.update()
            return results

        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(fn, item) for item in items]
            for future in futures:
                future.result()
                bar.update()
            return [future.result() for future in futures]
