import threading
import time

import pytest

from hashbeam.parallel import map_ordered


@pytest.mark.parametrize("threads", [1, 4])
def test_results_follow_input_order(threads):
    def slow_square(x):
        # later items finish first on a pool
        time.sleep(0.001 * (10 - x))
        return x * x

    assert map_ordered(slow_square, range(10), threads=threads) == [x * x for x in range(10)]


def test_pool_is_used_when_threads_requested():
    seen = set()

    def record(x):
        seen.add(threading.get_ident())
        time.sleep(0.01)
        return x

    map_ordered(record, range(8), threads=4)
    assert len(seen) > 1


def test_worker_errors_propagate():
    def boom(x):
        if x == 3:
            raise ValueError("bad item")
        return x

    with pytest.raises(ValueError, match="bad item"):
        map_ordered(boom, range(5), threads=2)


def test_empty_input():
    assert map_ordered(str, [], threads=3) == []
