from fractions import Fraction
from math import factorial

import numpy as np
import pytest

from replicalab.linalg import SelfCheckError
from replicalab.perms import Permutation, enumerate_sym
from replicalab.weingarten import (
    MomentBoundReport,
    UnsupportedRegimeError,
    _solve_fraction_system,
    haar_expect_trace_power,
    haar_frame_potential_exact,
    haar_moment_entries,
    haar_sample,
    haar_sample_batch,
    mc_trace_power,
    montanaro_bound_check,
    weingarten_table,
)

from conftest import random_density


class TestTable:
    def test_degree_one(self):
        for d in (1, 2, 7):
            table = weingarten_table(1, d)
            assert table.weight((1,)) == Fraction(1, d)

    def test_m2_d2(self):
        table = weingarten_table(2, 2)
        assert table.weight((1, 1)) == Fraction(1, 3)
        assert table.weight((2,)) == Fraction(-1, 6)

    def test_m2_d4_abs_sum(self):
        table = weingarten_table(2, 4)
        assert table.abs_sum() == Fraction(1, 15) + Fraction(1, 60) == Fraction(1, 12)
        assert table.abs_sum_identity_holds()

    @pytest.mark.parametrize("m", range(1, 6))
    @pytest.mark.parametrize("d", [5, 9, 14])
    def test_abs_sum_identity_grid(self, m, d):
        table = weingarten_table(m, d)
        assert table.abs_sum() == Fraction(factorial(d - m), factorial(d))

    @pytest.mark.parametrize("m", [2, 3, 4])
    def test_class_function_property_vs_full_solve(self, m):
        # solve the permutation-level system and check values collapse by type
        d = m + 2
        perms = enumerate_sym(m)
        gram = [
            [Fraction(d ** sigma.compose(tau.inverse()).cycles().cycle_count) for tau in perms]
            for sigma in perms
        ]
        rhs = [Fraction(1) if p.images == tuple(range(m)) else Fraction(0) for p in perms]
        full = _solve_fraction_system(gram, rhs)
        table = weingarten_table(m, d)
        for p, value in zip(perms, full):
            assert value == table.weight(p)

    def test_orthogonality_relation_exhaustive_m3(self):
        m, d = 3, 5
        table = weingarten_table(m, d)
        perms = enumerate_sym(m)
        for sigma in perms:
            for pi in perms:
                total = Fraction(0)
                for tau in perms:
                    total += table.weight(sigma.compose(tau.inverse())) * d ** tau.compose(
                        pi.inverse()
                    ).cycles().cycle_count
                assert total == (1 if sigma.images == pi.images else 0)

    def test_regime_errors(self):
        with pytest.raises(UnsupportedRegimeError):
            weingarten_table(3, 2)
        with pytest.raises(UnsupportedRegimeError):
            weingarten_table(7, 20)

    def test_json_dump_format(self):
        doc = weingarten_table(2, 4).to_json_dict()
        assert doc == {"m": 2, "d": 4, "values": {"1+1": "1/15", "2": "-1/60"}}


class TestEntryMoments:
    def test_single_entry(self):
        assert haar_moment_entries((0,), (0,), (0,), (0,), 4) == pytest.approx(1 / 4)

    def test_delta_mismatch(self):
        assert haar_moment_entries((0,), (0,), (1,), (1,), 4) == 0.0

    def test_distinct_rows_and_columns(self):
        # E[|U00|^2 |U11|^2] carries only the identity pairing
        assert haar_moment_entries((0, 1), (0, 1), (0, 1), (0, 1), 4) == pytest.approx(1 / 15)

    def test_shared_row(self):
        # E[|U00|^2 |U01|^2]: conj(U01) enters as the (1,0) entry of U+
        assert haar_moment_entries((0, 0), (0, 1), (0, 1), (0, 0), 4) == pytest.approx(1 / 20)

    def test_fourth_moment_single_entry(self):
        d = 4
        got = haar_moment_entries((0, 0), (0, 0), (0, 0), (0, 0), d)
        assert got == pytest.approx(2 / (d * (d + 1)))

    def test_monte_carlo_oracle(self, rng):
        d = 4
        n = 60_000
        u = haar_sample_batch(d, n, rng)
        stat = (np.abs(u[:, 0, 0]) ** 2) * (np.abs(u[:, 1, 1]) ** 2)
        mean, se = stat.mean(), stat.std(ddof=1) / np.sqrt(n)
        exact = haar_moment_entries((0, 1), (0, 1), (0, 1), (0, 1), d)
        assert abs(mean - exact) < 5 * se


class TestTracePowers:
    def test_first_moment(self, rng):
        a = random_density(5, rng)
        b = random_density(5, rng)
        got = haar_expect_trace_power(a, b, 1)
        assert got == pytest.approx(np.trace(a) * np.trace(b) / 5)

    def test_traceless_first_moment(self):
        z = np.diag([1.0, -1.0, -1.0, 1.0])
        assert haar_expect_trace_power(z, z, 1) == pytest.approx(0.0)

    def test_z_second_moment_closed_form(self):
        for d in (2, 4, 8):
            z = np.diag([1.0] * (d // 2) + [-1.0] * (d // 2))
            got = haar_expect_trace_power(z, z, 2)
            assert got.real == pytest.approx(d * d / (d * d - 1))

    def test_monte_carlo_agreement(self, rng):
        d = 4
        z = np.diag([1.0, 1.0, -1.0, -1.0])
        exact = haar_expect_trace_power(z, z, 2).real
        mean, se = mc_trace_power(z, z, 2, 100_000, rng)
        assert abs(mean - exact) < 5 * se

    def test_third_moment_mc(self, rng):
        d = 4
        g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        a = (g + g.conj().T) / 2
        b = random_density(d, rng) * d
        exact = haar_expect_trace_power(a, b, 3).real
        mean, se = mc_trace_power(a, b, 3, 150_000, rng)
        assert abs(mean - exact) < 5 * se


class TestHaarSampler:
    def test_unitarity(self, rng):
        u = haar_sample(6, rng)
        assert np.abs(u.conj().T @ u - np.eye(6)).max() < 1e-10

    def test_one_design(self, rng):
        d, n = 4, 30_000
        rho = random_density(d, rng)
        u = haar_sample_batch(d, n, rng)
        twirled = np.einsum("bij,jk,blk->il", u, rho, u.conj()) / n
        # HS distance to I/d should be a few standard errors of the mean
        err = np.linalg.norm(twirled - np.eye(d) / d)
        assert err < 5 * d / np.sqrt(n)

    def test_trace_second_moment(self, rng):
        n = 30_000
        u = haar_sample_batch(5, n, rng)
        stat = np.abs(np.trace(u, axis1=1, axis2=2)) ** 2
        assert abs(stat.mean() - 1.0) < 5 * stat.std(ddof=1) / np.sqrt(n)


class TestDecayBound:
    def test_degree_one_ratio(self):
        report = montanaro_bound_check(1, 4)
        assert report.max_ratio == pytest.approx(1.0)

    def test_m2_d4_ratios(self):
        report = montanaro_bound_check(2, 4)
        assert report.ratios[(1, 1)] == pytest.approx(16 / 15)
        assert report.ratios[(2,)] == pytest.approx(16 / 15)

    def test_grid_bounded(self):
        worst = 0.0
        for d in (8, 16, 32):
            for m in range(1, 5):
                if m <= d ** (2 / 3):
                    report = montanaro_bound_check(m, d)
                    worst = max(worst, report.max_ratio)
        assert worst <= 20.0

    def test_regime_guard(self):
        with pytest.raises(UnsupportedRegimeError):
            montanaro_bound_check(4, 4)


@pytest.mark.parametrize("t", [1, 2, 3])
@pytest.mark.parametrize("d", [3, 6, 9])
def test_frame_potential_reference(t, d):
    if d >= t:
        assert haar_frame_potential_exact(t, d) == factorial(t)
