import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from binsparx.bnn import (
    BinaryTensor,
    MappedTensor,
    MultiBitPlan,
    TilePlan,
    multibit_partial_sums,
    nandnet_dot,
    tile_weights,
    to_mapped,
    to_signed,
)
from binsparx.errors import DomainError, ShapeError

from conftest import signed_dot

signed_vectors = st.lists(st.sampled_from([-1, 1]), min_size=1, max_size=256)


class TestMapping:
    def test_basic_example(self):
        assert to_mapped(BinaryTensor([1, -1, 1])).values.tolist() == [1, 0, 1]

    def test_all_minus_one(self):
        out = to_mapped(BinaryTensor([-1] * 64))
        assert out.values.tolist() == [0] * 64

    def test_round_trip_random(self, rng):
        for _ in range(1000):
            t = BinaryTensor(rng.choice([-1, 1], size=rng.integers(1, 65)))
            back = to_signed(to_mapped(t))
            assert np.array_equal(back.values, t.values)

    @settings(max_examples=150, derandomize=True)
    @given(signed_vectors)
    def test_round_trip_property(self, vec):
        t = BinaryTensor(vec)
        assert np.array_equal(to_signed(to_mapped(t)).values, t.values)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            BinaryTensor([1, 0, -1])
        with pytest.raises(DomainError):
            BinaryTensor([2])
        with pytest.raises(DomainError):
            MappedTensor([1, -1])
        with pytest.raises(DomainError):
            BinaryTensor([1.5])


class TestNandnetDot:
    def test_worked_example(self):
        # I=[+1,-1], W=[+1,+1]: 4*1 - 2*1 - 2*2 + 2 = 0
        i = to_mapped(BinaryTensor([1, -1]))
        w = to_mapped(BinaryTensor([1, 1]))
        assert nandnet_dot(i, w, 2) == 0

    def test_zero_activations(self, rng):
        w = MappedTensor(rng.integers(0, 2, 64))
        i = MappedTensor(np.zeros(64, dtype=np.int8))
        assert nandnet_dot(i, w, 64) == -2 * int(w.values.sum()) + 64

    def test_four_element_example(self):
        i = to_mapped(BinaryTensor([1, -1, 1, 1]))
        w = to_mapped(BinaryTensor([-1, 1, 1, -1]))
        assert nandnet_dot(i, w, 4) == -2

    @settings(max_examples=300, derandomize=True)
    @given(signed_vectors, st.randoms(use_true_random=False))
    def test_equals_signed_dot(self, ivec, rnd):
        wvec = [rnd.choice([-1, 1]) for _ in ivec]
        n = len(ivec)
        got = nandnet_dot(to_mapped(BinaryTensor(ivec)), to_mapped(BinaryTensor(wvec)), n)
        assert got == signed_dot(ivec, wvec)
        assert got % 2 == n % 2  # parity follows the vector length

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            nandnet_dot(MappedTensor([1, 0]), MappedTensor([1]), 2)
        with pytest.raises(ShapeError):
            nandnet_dot(MappedTensor([1, 0]), MappedTensor([1, 1]), 3)


class TestTiling:
    def test_exact_division(self, rng):
        w = BinaryTensor(rng.choice([-1, 1], size=(128, 128)))
        plan = TilePlan.for_matrix(128, 128, 64, 64)
        assert (plan.row_tiles, plan.col_tiles) == (2, 2)
        tiled = tile_weights(w, plan)
        for tr in tiled.tiles:
            for t in tr:
                assert t.mapped.shape == (64, 64)
                assert len(t.sum_wprime) == 64
                assert t.n_logical == t.m_logical == 64

    def test_padding_rule(self, rng):
        w = BinaryTensor(rng.choice([-1, 1], size=(65, 64)))
        plan = TilePlan.for_matrix(65, 64, 64, 64)
        assert plan.row_tiles == 2
        tiled = tile_weights(w, plan)
        bottom = tiled.tiles[1][0]
        assert bottom.n_logical == 1
        # the 63 padded rows store 0
        assert bottom.mapped.values[1:, :].sum() == 0

    def test_untile_round_trip(self, rng):
        w = BinaryTensor(rng.choice([-1, 1], size=(100, 100)))
        tiled = tile_weights(w, TilePlan.for_matrix(100, 100, 64, 64))
        assert np.array_equal(tiled.untile().values, w.values)

    def test_plan_too_small(self, rng):
        w = BinaryTensor(rng.choice([-1, 1], size=(100, 100)))
        with pytest.raises(ShapeError):
            tile_weights(w, TilePlan(n=64, m=64, row_tiles=1, col_tiles=2))

    def test_tiling_conservation(self, rng):
        # accumulating the exact per-tile accounting over row tiles must
        # reproduce the whole-matrix dot product for every output column
        w = BinaryTensor(rng.choice([-1, 1], size=(100, 30)))
        act = rng.choice([-1, 1], size=100)
        tiled = tile_weights(w, TilePlan.for_matrix(100, 30, 64, 16))
        act_mapped = (act + 1) // 2
        totals = np.zeros(30, dtype=np.int64)
        for tr in tiled.tiles:
            for t in tr:
                if t.m_logical == 0 or t.n_logical == 0:
                    continue
                sub = act_mapped[t.row_start : t.row_start + t.n_logical]
                gates = np.zeros(t.n, dtype=np.int64)
                gates[: t.n_logical] = sub
                and_sums = gates @ t.mapped.values.astype(np.int64)
                v = (
                    4 * and_sums[: t.m_logical]
                    - 2 * int(sub.sum())
                    - 2 * t.sum_wprime[: t.m_logical]
                    + t.n_logical
                )
                totals[t.col_start : t.col_start + t.m_logical] += v
        expect = act.astype(np.int64) @ w.values.astype(np.int64)
        assert np.array_equal(totals, expect)


class TestMultiBit:
    def test_all_zero_weights(self):
        plan = MultiBitPlan(weight_bits=4, activation_bits=4)
        out = multibit_partial_sums(np.zeros((8, 3), dtype=int), np.zeros((2, 8), dtype=int), plan, 8)
        assert out.shape == (2, 1, 4, 12)
        assert out.sum() == 0

    def test_single_coincident_bit(self):
        plan = MultiBitPlan(weight_bits=4, activation_bits=4)
        w = np.zeros((8, 3), dtype=int)
        w[2, 1] = 4  # bit 2 of column 1
        a = np.zeros((1, 8), dtype=int)
        a[0, 2] = 2  # bit 1 of row 2
        out = multibit_partial_sums(w, a, plan, 8)
        assert out.sum() == 1
        assert out[0, 0, 1, 1 * 4 + 2] == 1

    def test_against_brute_force(self, rng):
        plan = MultiBitPlan(weight_bits=4, activation_bits=3)
        w = rng.integers(-8, 8, size=(20, 5))
        a = rng.integers(0, 8, size=(4, 20))
        tile_n = 8
        out = multibit_partial_sums(w, a, plan, tile_n)
        for b in range(4):
            for t in range(out.shape[1]):
                rows = range(t * tile_n, min((t + 1) * tile_n, 20))
                for bit in range(3):
                    for c in range(5):
                        for j in range(4):
                            total = 0
                            for r in rows:
                                wbit = ((int(w[r, c]) & 0xF) >> j) & 1
                                abit = (int(a[b, r]) >> bit) & 1
                                total += wbit * abit
                            assert out[b, t, bit, c * 4 + j] == total

    def test_range_errors(self):
        plan = MultiBitPlan(weight_bits=4, activation_bits=4)
        with pytest.raises(DomainError):
            multibit_partial_sums(np.array([[8]]), np.array([[0]]), plan, 1)
        with pytest.raises(DomainError):
            multibit_partial_sums(np.array([[0]]), np.array([[16]]), plan, 1)
        with pytest.raises(DomainError):
            MultiBitPlan(weight_bits=1, activation_bits=4)
