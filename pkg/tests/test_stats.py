import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import ttest_ind, ttest_ind_from_stats

from detect_correct.stats import welch_t_test


class TestWelch:
    def test_identical(self):
        t, _, p = welch_t_test(1.0, 0.5, 3, 1.0, 0.5, 3)
        assert t == 0.0 and p == pytest.approx(1.0)

    def test_strong_difference(self):
        assert welch_t_test(87.30, 0.07, 3, 83.37, 0.25, 3)[2] < 0.001

    def test_weak_difference(self):
        assert welch_t_test(90.61, 0.67, 3, 89.58, 0.26, 3)[2] == pytest.approx(0.100, abs=0.02)

    def test_matches_raw_samples(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(0, 1, 7), rng.normal(0.8, 2.5, 11)
        ref = ttest_ind(a, b, equal_var=False)
        t, _, p = welch_t_test(a.mean(), a.std(ddof=1), 7, b.mean(), b.std(ddof=1), 11)
        assert t == pytest.approx(ref.statistic, rel=1e-12)
        assert p == pytest.approx(ref.pvalue, rel=1e-10)

    def test_satterthwaite_dof(self):
        # equal n and sd gives 2(n-1)
        assert welch_t_test(0.0, 1.0, 5, 1.0, 1.0, 5)[1] == pytest.approx(8.0)

    def test_zero_sd_conventions(self):
        assert welch_t_test(2.0, 0.0, 3, 2.0, 0.0, 3) == (0.0, math.inf, 1.0)
        t, dof, p = welch_t_test(2.0, 0.0, 3, 1.0, 0.0, 3)
        assert (t, dof, p) == (math.inf, math.inf, 0.0)

    @pytest.mark.parametrize("args", [(0, 1, 1, 0, 1, 3), (0, -1, 3, 0, 1, 3)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            welch_t_test(*args)

    @settings(max_examples=100, deadline=None)
    @given(ma=st.floats(-100, 100), mb=st.floats(-100, 100), sa=st.floats(0.01, 10),
           sb=st.floats(0.01, 10), na=st.integers(2, 50), nb=st.integers(2, 50))
    def test_matches_scipy(self, ma, mb, sa, sb, na, nb):
        ref = ttest_ind_from_stats(ma, sa, na, mb, sb, nb, equal_var=False)
        t, _, p = welch_t_test(ma, sa, na, mb, sb, nb)
        assert t == pytest.approx(ref.statistic, rel=1e-9, abs=1e-12)
        assert p == pytest.approx(ref.pvalue, rel=1e-7, abs=1e-300)
        assert welch_t_test(mb, sb, nb, ma, sa, na)[2] == pytest.approx(p, rel=1e-12)
