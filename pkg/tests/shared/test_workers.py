import threading

import numpy as np

from src.shared.workers import child_seeds, indexed_seed, parallel_map


class TestParallelMap:
    def test_preserves_order(self):
        assert parallel_map(lambda x: x * x, range(10), threads=4) == [x * x for x in range(10)]

    def test_inline_when_single_thread(self):
        names = parallel_map(lambda _: threading.current_thread().name, range(3), threads=1)
        assert set(names) == {threading.current_thread().name}

    def test_empty(self):
        assert parallel_map(lambda x: x, [], threads=8) == []

    def test_random_results_independent_of_thread_count(self):
        seeds = child_seeds(5, 6)

        def draw(k):
            return np.random.default_rng(seeds[k]).standard_normal(3)

        serial = parallel_map(draw, range(6), threads=1)
        threaded = parallel_map(draw, range(6), threads=3)
        for a, b in zip(serial, threaded):
            np.testing.assert_array_equal(a, b)


class TestSeeds:
    def test_child_seeds_are_distinct(self):
        first, second = child_seeds(0, 2)
        a = np.random.default_rng(first).random(4)
        b = np.random.default_rng(second).random(4)
        assert not np.array_equal(a, b)

    def test_child_seeds_prefix_stable(self):
        short = child_seeds(9, 2)
        long = child_seeds(9, 5)
        for a, b in zip(short, long):
            assert a.generate_state(2).tolist() == b.generate_state(2).tolist()

    def test_indexed_seed_deterministic(self):
        assert indexed_seed(3, 7) == indexed_seed(3, 7)
        assert indexed_seed(3, 7) != indexed_seed(3, 8)
        assert indexed_seed(3, 7) != indexed_seed(4, 7)

    def test_indexed_seed_is_32_bit(self):
        value = indexed_seed(123, 0)
        assert isinstance(value, int)
        assert 0 <= value < 2**32
