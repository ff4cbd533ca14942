import itertools

import numpy as np
import pytest

from replicalab.linalg import ResourceBudgetError
from replicalab.perms import (
    Permutation,
    cycle_count,
    double_factorial,
    enumerate_sym,
    permutation_operator,
    rising_factorial,
    sum_d_power_cycles,
    sum_d_power_even_cycles,
    trace_perm_bipartite,
    trace_perm_power,
    trace_perm_tensor,
)


class TestEnumeration:
    def test_small_counts(self):
        assert len(enumerate_sym(1)) == 1
        assert len(enumerate_sym(3)) == 6

    def test_pairwise_distinct(self):
        perms = enumerate_sym(4)
        assert len({p.images for p in perms}) == 24

    def test_lexicographic_order(self):
        images = [p.images for p in enumerate_sym(3)]
        assert images == sorted(images)

    def test_cap(self):
        with pytest.raises(ResourceBudgetError):
            enumerate_sym(10)


class TestCycles:
    def test_identity(self):
        assert cycle_count(Permutation.identity(5)) == 5

    def test_single_cycle(self):
        assert cycle_count(Permutation((1, 2, 3, 0))) == 1

    def test_double_transposition(self):
        assert cycle_count(Permutation((1, 0, 3, 2))) == 2

    def test_cycle_type(self):
        assert Permutation((1, 0, 3, 2)).cycle_type() == (2, 2)
        assert Permutation((1, 2, 0, 3)).cycle_type() == (3, 1)

    def test_compose_inverse(self):
        p = Permutation((2, 0, 3, 1))
        assert p.compose(p.inverse()).images == (0, 1, 2, 3)


class TestCycleSums:
    def test_only_identity(self):
        assert sum_d_power_cycles(1, 5) == 5

    def test_m2(self):
        assert sum_d_power_cycles(2, 4) == 20

    def test_m3(self):
        assert sum_d_power_cycles(3, 4) == 120

    @pytest.mark.parametrize("m", range(1, 7))
    @pytest.mark.parametrize("d", [2, 3, 7, 16])
    def test_closed_form_grid(self, m, d):
        assert sum_d_power_cycles(m, d) == rising_factorial(d, m)

    def test_even_cycles_odd_degree_zero(self):
        for d in (2, 5, 9):
            assert sum_d_power_even_cycles(3, d) == 0
            assert sum_d_power_even_cycles(5, d) == 0

    def test_even_cycles_m2(self):
        assert sum_d_power_even_cycles(2, 4) == 4

    def test_even_cycles_m4(self):
        # 3 double transpositions give d^2, 6 four-cycles give d
        assert sum_d_power_even_cycles(4, 4) == 3 * 16 + 6 * 4 == 72

    @pytest.mark.parametrize("m", [2, 4, 6])
    @pytest.mark.parametrize("d", [2, 3, 8, 16])
    def test_even_closed_form_grid(self, m, d):
        prod = 1
        for i in range(0, m - 1, 2):
            prod *= d + i
        assert sum_d_power_even_cycles(m, d) == double_factorial(m - 1) * prod


class TestPermutationOperator:
    def test_identity(self):
        op = permutation_operator(Permutation.identity(2), 3)
        assert np.array_equal(op, np.eye(9))

    def test_swap_defining_action(self):
        swap = permutation_operator(Permutation((1, 0)), 2)
        vec01 = np.zeros(4)
        vec01[1] = 1.0  # |01>
        out = swap @ vec01
        assert out[2] == 1.0 and np.abs(out).sum() == 1.0

    def test_three_cycle_action(self, rng):
        # P |abc> = |a'b'c'> with digit t taken from slot p^-1(t)
        p = Permutation((1, 2, 0))
        op = permutation_operator(p, 2)
        vec = np.zeros(8)
        vec[0b011] = 1.0  # digits (0,1,1)
        out = op @ vec
        inv = p.inverse().images
        digits = (0, 1, 1)
        target = sum(digits[inv[t]] << (2 - t) for t in range(3))
        assert out[target] == 1.0


class TestPermTraces:
    def test_identity_factorizes(self, rng):
        a = rng.standard_normal((3, 3))
        b = rng.standard_normal((3, 3))
        got = trace_perm_tensor(Permutation.identity(2), [a, b])
        assert got == pytest.approx(np.trace(a) * np.trace(b))

    def test_traceless_single_factor(self):
        z = np.diag([1.0, -1.0])
        assert trace_perm_tensor(Permutation.identity(1), [z]) == 0

    def test_swap_z_factors(self):
        z = np.diag([1.0, -1.0, -1.0, 1.0])
        got = trace_perm_tensor(Permutation((1, 0)), [z, z])
        assert got == pytest.approx(np.trace(z @ z))

    def test_dense_oracle_100_instances(self, rng):
        for _ in range(100):
            m = int(rng.integers(2, 5))
            d = int(rng.integers(2, 5))
            p = Permutation(tuple(int(x) for x in rng.permutation(m)))
            mats = [
                rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
                for _ in range(m)
            ]
            dense = permutation_operator(p, d)
            big = mats[0]
            for a in mats[1:]:
                big = np.kron(big, a)
            want = np.trace(dense @ big)
            got = trace_perm_tensor(p, mats)
            assert abs(want - got) <= 1e-10 * max(1.0, abs(want))

    def test_bipartite_gather_matches_cycle_product(self, rng):
        for _ in range(30):
            m = int(rng.integers(2, 5))
            d = 2
            split = int(rng.integers(1, m))
            p = Permutation(tuple(int(x) for x in rng.permutation(m)))
            mats = [
                rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
                for _ in range(m)
            ]
            left = mats[0]
            for a in mats[1:split]:
                left = np.kron(left, a)
            right = np.eye(1, dtype=complex)
            for a in mats[split:]:
                right = np.kron(right, a) if right.shape[0] > 1 else a
            want = trace_perm_tensor(p, mats)
            got = trace_perm_bipartite(p, left, right, d)
            assert abs(want - got) <= 1e-10 * max(1.0, abs(want))

    @pytest.mark.parametrize("m", range(1, 7))
    def test_z_tensor_power_trace_rule(self, m):
        # trace is d^{#tau} when all cycles are even, zero otherwise
        for d in (2, 4):
            z = np.diag([1.0] * (d // 2) + [-1.0] * (d // 2))
            for p in enumerate_sym(m):
                got = trace_perm_power(p, z)
                lengths = p.cycle_type()
                want = d ** len(lengths) if all(ln % 2 == 0 for ln in lengths) else 0.0
                assert got == pytest.approx(want)


def test_self_check_error_guard():
    # the closed forms are exact; spot check they are actually being compared
    for m, d in itertools.product(range(1, 6), (2, 9)):
        sum_d_power_cycles(m, d)
        sum_d_power_even_cycles(m, d)
