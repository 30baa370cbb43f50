import csv
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evgp.distributions import BiasLaw, DistributionSpec
from evgp.exact import dp_fourth_moment, expected_empirical_variance_exact
from evgp.mc import (
    DegenerateInput,
    SufficientStats,
    _run,
    estimate_empirical_variance,
    estimate_frobenius,
    estimate_moments,
    merge,
    run_all,
)

NAMES = ("a", "b")
rows = st.lists(st.tuples(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6)), min_size=0, max_size=30)


def stats(values):
    return SufficientStats.from_values(NAMES, np.array(values, dtype=float).reshape(-1, 2))


@given(rows)
def test_merge_identity(values):
    x = stats(values)
    assert merge(x, SufficientStats.empty(NAMES)) == x == merge(SufficientStats.empty(NAMES), x)


@given(rows, rows)
def test_merge_commutative(a, b):
    assert merge(stats(a), stats(b)) == merge(stats(b), stats(a))


@given(rows, rows, rows)
def test_merge_associative(a, b, c):
    x, y, z = stats(a), stats(b), stats(c)
    assert merge(merge(x, y), z) == merge(x, merge(y, z))


def test_merge_rejects_mismatched_names():
    with pytest.raises(ValueError):
        merge(SufficientStats.empty(("a",)), SufficientStats.empty(("b",)))


def test_sufficient_stats_moments():
    x = np.arange(10.0)
    s = SufficientStats.from_values(("x",), x[:, None])
    var, _ = s.central_moments("x")
    assert s.mean("x") == 4.5 and var == pytest.approx(np.var(x, ddof=1))
    assert s.column("x")[0] == Fraction(45)


def test_second_moment_on_3542():
    arch = (3, 5, 4, 2)
    r = estimate_moments(arch, DistributionSpec.homogeneous(arch), K_list=(1,), n_samples=100_000, seed=1)[0]
    assert r.covers(1 / 3)


def test_worker_count_does_not_change_results():
    arch = (2, 3, 2)
    spec = DistributionSpec.homogeneous(arch)
    a = _run(arch, spec, None, (1, 2), 30_000, 5, workers=1)
    b = _run(arch, spec, None, (1, 2), 30_000, 5, workers=8)
    assert a.total == b.total and a.groups == b.groups
    ra = estimate_moments(arch, spec, n_samples=30_000, seed=5, workers=1)
    rb = estimate_moments(arch, spec, n_samples=30_000, seed=5, workers=8)
    assert ra == rb


def test_chunk_size_changes_only_rounding():
    # the chunk grid is fixed, so only worker count is promised bitwise invariance
    arch = (2, 2, 1)
    spec = DistributionSpec.homogeneous(arch)
    a = _run(arch, spec, None, (2,), 5000, 3, 1, chunk=8192).total
    b = _run(arch, spec, None, (2,), 5000, 3, 1, chunk=37).total
    assert a.count == b.count
    for name in a.names:
        assert a.mean(name) == pytest.approx(b.mean(name), rel=1e-13)


def test_calibration_against_exact_fourth_moment():
    rng = np.random.default_rng(123)
    covered = 0
    for t in range(20):
        d = int(rng.integers(1, 4))
        widths = tuple(int(w) for w in rng.integers(2, 6, size=d + 1))
        kind = ["gaussian", "signed_bernoulli", "uniform"][t % 3]
        spec = DistributionSpec.homogeneous(widths, kind)
        exact = dp_fourth_moment(widths, spec).value
        r = estimate_moments(widths, spec, K_list=(2,), n_samples=40_000, seed=t)[0]
        covered += r.covers(exact)
    assert covered >= 18


def test_heavy_tail_flag_reports_median_of_means():
    arch = (1, 1, 1, 1, 1, 1)
    r = estimate_moments(arch, DistributionSpec.homogeneous(arch), K_list=(2,), n_samples=50_000, seed=0)[0]
    assert r.kurtosis > 1e3 and r.heavy_tail and r.median_of_means is not None
    light = estimate_moments((3, 4, 2), DistributionSpec.homogeneous((3, 4, 2)), K_list=(1,), n_samples=20_000, seed=0)[0]
    assert not light.heavy_tail and light.median_of_means is None


def test_input_independence():
    arch = (3, 4, 2)
    spec = DistributionSpec.homogeneous(arch)
    a = estimate_moments(arch, spec, np.ones(3), (1,), 50_000, seed=2)[0]
    b = estimate_moments(arch, spec, np.array([0.3, -2.0, 5.0]), (1,), 50_000, seed=3)[0]
    assert abs(a.estimate - b.estimate) <= 4 * math.hypot(a.std_error, b.std_error)


def test_frobenius_identity():
    r = estimate_frobenius((3, 5, 2), DistributionSpec.homogeneous((3, 5, 2)), n_samples=100_000, seed=4)
    assert r.covers(2.0)


def test_empirical_variance_against_exact():
    arch = (2, 2, 1)
    spec = DistributionSpec.homogeneous(arch, "signed_bernoulli")
    exact = expected_empirical_variance_exact(arch, spec).value
    r = estimate_empirical_variance(arch, spec, n_samples=100_000, seed=6)
    assert r.covers(exact)


def test_empirical_variance_needs_two_entries():
    with pytest.raises(ValueError):
        estimate_empirical_variance((1, 3, 1), DistributionSpec.homogeneous((1, 3, 1)), n_samples=100)


def test_dump_rows_and_nonnegative_variance(tmp_path):
    arch = (2, 3, 2)
    path = tmp_path / "rows.csv"
    r = estimate_empirical_variance(arch, DistributionSpec.homogeneous(arch), n_samples=500, seed=1, dump=path)
    with open(path) as fh:
        data = list(csv.DictReader(fh))
    assert len(data) == 500 and [int(d["sample"]) for d in data] == list(range(500))
    values = [float(d["empirical_variance"]) for d in data]
    assert min(values) >= 0
    assert np.mean(values) == pytest.approx(r.estimate, rel=1e-12)


def test_zero_input_zero_bias_rejected():
    arch = (2, 2, 1)
    spec = DistributionSpec.homogeneous(arch, bias=BiasLaw("zero", allow_atoms=True))
    with pytest.raises(DegenerateInput):
        estimate_moments(arch, spec, np.zeros(2), n_samples=10)


def test_run_all_uses_one_batch():
    arch = (2, 3, 2)
    spec = DistributionSpec.homogeneous(arch)
    results, total = run_all(arch, spec, n_samples=2000, seed=8)
    assert set(results) == {"Z^2", "Z^4", "frobenius", "empirical_variance"}
    assert total.count == 2000
    assert results["Z^4"] == estimate_moments(arch, spec, K_list=(1, 2), n_samples=2000, seed=8)[1]


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 3000), st.integers(0, 2**40))
def test_sample_count_is_exact(n, seed):
    r = estimate_moments((1, 2, 1), DistributionSpec.homogeneous((1, 2, 1)), n_samples=n, seed=seed)[0]
    assert r.n_samples == n and r.std_error >= 0


@pytest.mark.parametrize("bias", [BiasLaw("gaussian", 0.1), BiasLaw("uniform", 2.0), BiasLaw("gaussian", 5.0)])
def test_moments_do_not_depend_on_bias_law(bias):
    arch = (2, 3, 1)
    spec = DistributionSpec.homogeneous(arch, "gaussian", bias)
    r2, r4 = estimate_moments(arch, spec, K_list=(1, 2), n_samples=100_000, seed=9)
    assert r2.covers(0.5, 4) and r4.covers(dp_fourth_moment(arch, spec).value, 4)
