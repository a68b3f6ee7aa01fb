from __future__ import annotations

from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rwr.bootstrap import (
    BOOTSTRAP_STREAM,
    block_indices,
    bootstrap_block,
    bootstrap_iid,
    cluster_index,
    iid_indices,
    normal_p_value,
    sign_p_value,
    significance_stars,
)
from rwr.dataset import ColumnTable
from rwr.estimators import estimate_rwr
from rwr.exceptions import BootstrapError, DataError
from rwr.numerics import RngStream

from conftest import TV, tv_table


def mean_of(col):
    return lambda t: float(t[col].mean())


class TestIid:
    def test_deterministic(self):
        t = ColumnTable({"y": [1.0, 2.0, 3.0]})
        a = bootstrap_iid(t, mean_of("y"), 4, seed=11)
        b = bootstrap_iid(t, mean_of("y"), 4, seed=11)
        assert np.array_equal(a.replicate_matrix, b.replicate_matrix)
        assert a.names == ("estimate",)
        assert a.replicate_matrix.shape == (4, 1)
        c = bootstrap_iid(t, mean_of("y"), 4, seed=12)
        assert not np.array_equal(a.replicate_matrix, c.replicate_matrix)

    def test_constant_outcome_zero_se(self):
        t = tv_table(seed=1, n=200)
        t = ColumnTable([(c, np.full(200, 2.0) if c == "y" else t[c]) for c in t.names])
        res = bootstrap_iid(t, lambda s: estimate_rwr(s, TV), 20, seed=1)
        for k, v in res.se.items():
            assert v == pytest.approx(0.0, abs=1e-10), k
        assert set(res.se) == {"dte", "pte_given_a1_0", "pte_given_a1_1", "cte", "ine"}

    def test_se_of_mean_matches_closed_form(self):
        x = np.random.default_rng(3).normal(size=100)
        res = bootstrap_iid(ColumnTable({"x": x}), mean_of("x"), 2000, seed=5)
        analytic = x.std(ddof=0) / np.sqrt(100)
        assert res.se["estimate"] == pytest.approx(analytic, rel=0.15)

    def test_report_carries_inference(self):
        t = tv_table(seed=2, n=300)
        res = bootstrap_iid(t, lambda s: estimate_rwr(s, TV, interactions=True), 30, seed=3)
        rep = res.report()
        assert rep.se == res.se and rep.p_value == res.p_value
        assert rep.cte == res.point_estimates.cte
        for k, p in rep.p_value.items():
            assert 0.0 <= p <= 1.0
            assert p == pytest.approx(normal_p_value(rep.values()[k], rep.se[k]))
        with pytest.raises(TypeError):
            bootstrap_iid(ColumnTable({"x": [1.0, 2.0]}), mean_of("x"), 3, seed=1).report()

    def test_mapping_estimator(self):
        t = ColumnTable({"x": [1.0, 2.0, 5.0], "z": [0.0, 1.0, 1.0]})
        res = bootstrap_iid(t, lambda s: {"mx": s["x"].mean(), "mz": s["z"].mean()}, 10, seed=1)
        assert res.names == ("mx", "mz")

    def test_failures_skipped_and_counted(self):
        t = ColumnTable({"x": np.arange(50.0)})

        def flaky(s):
            # About 4% of resamples start with row 48 or 49.
            if s["x"][0] >= 48:
                raise RuntimeError("boom")
            return float(s["x"].mean())

        res = bootstrap_iid(t, flaky, 200, seed=1)
        assert 0 < res.failures <= 20
        assert res.replicate_matrix.shape[0] == 200 - res.failures

    def test_too_many_failures(self):
        t = ColumnTable({"x": np.arange(10.0)})

        def bad(s):
            if s.n_rows == 10 and not np.array_equal(s["x"], np.arange(10.0)):
                raise RuntimeError("no")
            return 0.0

        with pytest.raises(BootstrapError):
            bootstrap_iid(t, bad, 20, seed=1)

    def test_preconditions(self):
        t = ColumnTable({"x": [1.0, 2.0]})
        with pytest.raises(ValueError):
            bootstrap_iid(t, mean_of("x"), 1, seed=1)
        with pytest.raises(ValueError):
            bootstrap_iid(t, mean_of("x"), 5, seed=1, pvalue="exact")


@pytest.mark.parametrize("threads", [2, 4])
def test_thread_count_does_not_change_results(threads):
    t = tv_table(seed=5, n=400)
    est = lambda s: estimate_rwr(s, TV, interactions=True)  # noqa: E731
    one = bootstrap_iid(t, est, 40, seed=9, threads=1)
    many = bootstrap_iid(t, est, 40, seed=9, threads=threads)
    assert one.replicate_matrix.tobytes() == many.replicate_matrix.tobytes()
    assert one.se == many.se and one.p_value == many.p_value
    cl = t.with_columns({"g": np.repeat(np.arange(80.0), 5)})
    b1 = bootstrap_block(cl, "g", est, 30, seed=2, threads=1)
    bn = bootstrap_block(cl, "g", est, 30, seed=2, threads=threads)
    assert b1.replicate_matrix.tobytes() == bn.replicate_matrix.tobytes()


class TestPValues:
    def test_normal(self):
        assert normal_p_value(0.0, 1.0) == 1.0
        assert normal_p_value(1.959963984540054, 1.0) == pytest.approx(0.05, abs=1e-12)
        assert normal_p_value(0.0, 0.0) == 1.0
        assert normal_p_value(0.3, 0.0) == 0.0

    def test_sign(self):
        assert sign_p_value(np.array([1.0, 2.0, 3.0, -1.0])) == pytest.approx(0.5)
        assert sign_p_value(np.array([1.0, 2.0])) == 0.0
        assert sign_p_value(np.array([1.0, -1.0])) == 1.0

    @settings(max_examples=100, deadline=None)
    @given(est=st.floats(-1e6, 1e6), se=st.floats(0, 1e6), reps=st.lists(st.floats(-10, 10), min_size=1, max_size=50))
    def test_unit_interval(self, est, se, reps):
        assert 0.0 <= normal_p_value(est, se) <= 1.0
        assert 0.0 <= sign_p_value(np.array(reps)) <= 1.0

    def test_sign_option(self):
        t = tv_table(seed=7, n=300)
        res = bootstrap_iid(t, lambda s: estimate_rwr(s, TV), 50, seed=1, pvalue="sign")
        j = res.names.index("cte")
        assert res.p_value["cte"] == sign_p_value(res.replicate_matrix[:, j])
        assert res.pvalue_method == "sign"

    def test_stars(self):
        assert [significance_stars(p) for p in (0.0005, 0.005, 0.03, 0.07, 0.2, None)] == [
            "***", "**", "*", "†", "", "",
        ]  # fmt: skip


class TestBlock:
    def test_singleton_clusters_equal_iid(self):
        t = tv_table(seed=3, n=120)
        t = t.with_columns({"id": np.arange(120.0)})
        est = lambda s: estimate_rwr(s, TV)  # noqa: E731
        a = bootstrap_iid(t, est, 25, seed=4)
        b = bootstrap_block(t, "id", est, 25, seed=4)
        assert np.array_equal(a.replicate_matrix, b.replicate_matrix)

    def test_two_clusters(self):
        t = ColumnTable({"g": [5.0, 5.0, 9.0, 9.0, 9.0], "x": [1.0, 2.0, 3.0, 4.0, 5.0]})
        clusters = cluster_index(t, "g")
        for b in range(50):
            idx = block_indices(clusters, RngStream(1, BOOTSTRAP_STREAM, b))
            counts = Counter(t["g"][idx])
            assert counts[5.0] % 2 == 0 and counts[9.0] % 3 == 0
            assert counts[5.0] // 2 + counts[9.0] // 3 == 2

    def test_single_cluster(self):
        t = ColumnTable({"g": [1.0, 1.0], "x": [1.0, 2.0]})
        with pytest.raises(DataError):
            bootstrap_block(t, "g", mean_of("x"), 5, seed=1)

    def test_missing_cluster_column(self):
        with pytest.raises(DataError):
            bootstrap_block(ColumnTable({"x": [1.0, 2.0]}), "g", mean_of("x"), 5, seed=1)

    def test_cluster_order_of_first_appearance(self):
        t = ColumnTable({"g": [3.0, 1.0, 3.0, 2.0]})
        assert [list(c) for c in cluster_index(t, "g")] == [[0, 2], [1], [3]]


def test_cluster_integrity_fuzz():
    rng = np.random.default_rng(2024)
    for case in range(100):
        n = int(rng.integers(2, 60))
        k = int(rng.integers(2, min(n, 12) + 1))
        g = rng.permutation(np.concatenate([np.arange(k), rng.integers(0, k, n - k)])).astype(float)
        t = ColumnTable({"g": g, "row": np.arange(n, dtype=float)})
        members = {c: sorted(np.flatnonzero(g == c).tolist()) for c in np.unique(g)}
        clusters = cluster_index(t, "g")
        for b in range(5):
            idx = block_indices(clusters, RngStream(case, BOOTSTRAP_STREAM, b))
            rows = Counter(idx.tolist())
            drawn = Counter()
            for c, m in members.items():
                copies = {rows[i] for i in m}
                assert len(copies) == 1, "cluster split"
                drawn[c] = copies.pop()
            assert sum(drawn.values()) == k
            assert sum(rows.values()) == sum(drawn[c] * len(m) for c, m in members.items())


def test_iid_indices_range():
    idx = iid_indices(7, RngStream(1))
    assert idx.shape == (7,) and idx.min() >= 0 and idx.max() < 7
