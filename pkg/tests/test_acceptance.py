"""Acceptance criteria 1 to 9, one PASS/FAIL line each (see the terminal summary)."""
import itertools
import math
import subprocess
import sys
import time
from fractions import Fraction

import numpy as np
import pytest

from evgp.analyzer import annealed_bounds_fourth, eta, quenched_bounds
from evgp.distributions import DistributionSpec
from evgp.exact import (
    dp_fourth_moment,
    expected_empirical_variance_exact,
    mixed_fourth_general,
    oracle_mixed_moment,
    oracle_moment,
)
from evgp.mc import estimate_empirical_variance, estimate_frobenius, estimate_moments
from evgp.net import (
    Architecture,
    instantiate,
    jacobian_backprop,
    jacobian_finite_difference,
    jacobian_pathsum,
    kink_distance,
)


def rel(a, b):
    a, b = float(a), float(b)
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def endpoint_cases(arch):
    cases = [(1, 1, 1, 1)]
    if arch.n_in > 1:
        cases.append((1, 1, 2, 1))
    if arch.n_out > 1:
        cases.append((1, 1, 1, 2))
    if arch.n_in > 1 and arch.n_out > 1:
        cases.append((1, 1, 2, 2))
    return cases


def test_criterion_1_oracle_dp_equivalence(criterion):
    with criterion(1, "oracle == DP for all widths <= 3, d <= 4, Gaussian and two-point weights"):
        t0 = time.perf_counter()
        n_arch = n_mixed = 0
        worst = 0.0
        seen_cases = set()
        for d in range(1, 5):
            for widths in itertools.product(range(1, 4), repeat=d + 1):
                arch = Architecture(widths)
                for kind in ("gaussian", "signed_bernoulli"):
                    spec = DistributionSpec.homogeneous(arch, kind)
                    o = oracle_moment(arch, spec, 1, 1, 2).rational
                    worst = max(worst, rel(o, dp_fourth_moment(arch, spec).value))
                    for p1, q1, p2, q2 in endpoint_cases(arch):
                        om = oracle_mixed_moment(arch, spec, [(p1, q1, 1), (p2, q2, 1)]).rational
                        worst = max(worst, rel(om, mixed_fourth_general(arch, spec, p1, q1, p2, q2).value))
                        seen_cases.add((p1 == p2, q1 == q2))
                        n_mixed += 1
                    n_arch += 1
        elapsed = time.perf_counter() - t0
        print(f"  {n_arch} (arch, law) pairs, {n_mixed} mixed checks, worst rel err {worst:.2e}, {elapsed:.1f}s")
        assert worst <= 1e-12
        assert len(seen_cases) == 4
        assert elapsed < 60


def test_criterion_2_second_moment(criterion):
    with criterion(2, "MC E[Z^2] on [3,5,4,2] within 3 SE of 1/3"):
        t0 = time.perf_counter()
        arch = (3, 5, 4, 2)
        r = estimate_moments(arch, DistributionSpec.homogeneous(arch), K_list=(1,), n_samples=100_000, seed=2024)[0]
        elapsed = time.perf_counter() - t0
        print(f"  estimate {r.estimate:.5f} +/- {r.std_error:.5f}, {elapsed:.1f}s")
        assert r.covers(1 / 3, 3.0)
        assert elapsed < 10


def test_criterion_3_fourth_moment_anchor(criterion):
    with criterion(3, "[1,2,1] Gaussian E[Z^4] = 21 by oracle and DP; 1e6-sample MC covers it"):
        t0 = time.perf_counter()
        arch = (1, 2, 1)
        spec = DistributionSpec.homogeneous(arch)
        assert oracle_moment(arch, spec).rational == Fraction(21)
        assert oracle_moment(arch, spec, engine="enumerate").rational == Fraction(21)
        assert rel(dp_fourth_moment(arch, spec).value, 21) <= 1e-12
        r = estimate_moments(arch, spec, K_list=(2,), n_samples=1_000_000, seed=7)[0]
        elapsed = time.perf_counter() - t0
        print(f"  MC {r.estimate:.3f} +/- {r.std_error:.3f} (kurtosis {r.kurtosis:.0f}), {elapsed:.1f}s")
        assert r.covers(21.0, 3.0)
        assert elapsed < 30


def test_criterion_4_bound_sandwich(criterion):
    with criterion(4, "50 random architectures inside the fourth-moment sandwich"):
        t0 = time.perf_counter()
        rng = np.random.default_rng(4)
        for t in range(50):
            d = int(rng.integers(1, 33))
            widths = tuple(int(w) for w in rng.integers(1, 17, size=d + 1))
            kind = ("gaussian", "signed_bernoulli", "uniform")[t % 3]
            spec = DistributionSpec.homogeneous(widths, kind)
            lo, hi = annealed_bounds_fourth(widths, spec)
            e4 = dp_fourth_moment(widths, spec).value
            assert lo <= e4 <= hi, (widths, kind, lo, e4, hi)
        elapsed = time.perf_counter() - t0
        print(f"  {elapsed:.2f}s")
        assert elapsed < 5


def test_criterion_5_width_one_chain(criterion):
    with criterion(5, "width-1 Gaussian chain: E[Z^4] = 6^d for d = 1..12, oracle at d <= 3"):
        t0 = time.perf_counter()
        for d in range(1, 13):
            widths = (1,) * (d + 1)
            spec = DistributionSpec.homogeneous(widths)
            assert rel(dp_fourth_moment(widths, spec).value, 6**d) <= 1e-12
            if d <= 3:
                assert oracle_moment(widths, spec).rational == 6**d
        assert time.perf_counter() - t0 < 1


def test_criterion_6_quenched_bracket(criterion):
    with criterion(6, "10 random architectures: exact and MC mean empirical variance inside the bracket"):
        t0 = time.perf_counter()
        rng = np.random.default_rng(6)
        done = 0
        while done < 10:
            d = int(rng.integers(1, 5))
            widths = tuple(int(w) for w in rng.integers(1, 6, size=d + 1))
            if widths[0] * widths[-1] < 2:
                continue
            kind = ("gaussian", "signed_bernoulli", "uniform")[done % 3]
            spec = DistributionSpec.homogeneous(widths, kind)
            n0, nd = widths[0], widths[-1]
            assert eta(widths) == Fraction(n0 - 1, n0 * nd - 1)
            ls, lp, up = quenched_bounds(widths, spec)
            lo = min(ls, lp)
            ev = expected_empirical_variance_exact(widths, spec).value
            assert lo <= ev <= up, (widths, kind, lo, ev, up)
            r = estimate_empirical_variance(widths, spec, n_samples=50_000, seed=done)
            assert r.estimate + 3 * r.std_error >= lo and r.estimate - 3 * r.std_error <= up
            print(f"  {widths} {kind}: [{lo:.4g}, {up:.4g}] exact {ev:.4g} MC {r.estimate:.4g}+/-{r.std_error:.2g}")
            done += 1
        assert time.perf_counter() - t0 < 120


def test_criterion_7_jacobian_triple_agreement(criterion):
    with criterion(7, "backprop == path sum (1e-12 rel) == finite differences (1e-6 abs) on 100 nets"):
        t0 = time.perf_counter()
        rng = np.random.default_rng(7)
        for t in range(100):
            d = int(rng.integers(1, 5))
            widths = tuple(int(w) for w in rng.integers(1, 4, size=d + 1))
            kind = ("gaussian", "signed_bernoulli", "uniform")[t % 3]
            net = instantiate(widths, DistributionSpec.homogeneous(widths, kind), 100 + t)
            x = rng.normal(size=widths[0])
            while kink_distance(net, x) < 1e-3:
                x = rng.normal(size=widths[0])
            jb = jacobian_backprop(net, x)
            jp = jacobian_pathsum(net, x)
            assert np.max(np.abs(jb - jp)) <= 1e-12 * max(1.0, np.max(np.abs(jb)))
            assert np.max(np.abs(jacobian_finite_difference(net, x) - jb)) <= 1e-6
        assert time.perf_counter() - t0 < 30


def test_criterion_8_frobenius_identity(criterion):
    with criterion(8, "MC E||J||_F^2 on [3,5,2] within 3 SE of n_d = 2"):
        t0 = time.perf_counter()
        arch = (3, 5, 2)
        r = estimate_frobenius(arch, DistributionSpec.homogeneous(arch), n_samples=100_000, seed=8)
        print(f"  estimate {r.estimate:.4f} +/- {r.std_error:.4f}")
        assert r.covers(2.0, 3.0)
        assert time.perf_counter() - t0 < 10


COMMANDS = {
    "analyze": ["analyze", "--widths", "3,5,4,2", "--weights", "uniform"],
    "analyze_text": ["analyze", "--widths", "3,5,4,2", "--format", "text"],
    "moments": ["moments", "--widths", "2,3,2", "--method", "all", "--samples", "40000", "--seed", "9", "--format", "json"],
    "moments_csv": ["moments", "--widths", "1,2,1", "--method", "mc", "--samples", "30000", "--seed", "9", "--format", "csv"],
    "verify": ["verify", "--trials", "6", "--seed", "9", "--samples", "4000"],
    "sweep": ["sweep", "--width", "3", "--depths", "2:5", "--n0", "2", "--mc-samples", "5000", "--seed", "9"],
    "sweep_empvar": ["sweep", "--width", "2", "--depths", "2:4", "--n0", "2", "--quantity", "empvar", "--mc-samples", "5000", "--seed", "9", "--format", "json"],
    "advise": ["advise", "--budget", "10", "--depth", "4", "--compare", "5,3,2", "--format", "json"],
}


def _run_cli(argv, workers, tmp_path, tag):
    out = tmp_path / f"{tag}-w{workers}.out"
    argv = [*argv, "--output", str(out)]
    if argv[0] in ("moments", "verify", "sweep"):
        argv += ["--workers", str(workers)]
    if argv[0] == "moments":
        argv += ["--dump", str(tmp_path / f"{tag}-w{workers}.dump")]
    proc = subprocess.run([sys.executable, "-m", "evgp", *argv], capture_output=True)
    assert proc.returncode == 0, proc.stderr.decode()
    files = {p.name.replace(f"-w{workers}", ""): p.read_bytes() for p in sorted(tmp_path.glob(f"{tag}-w{workers}*"))}
    return proc.stdout, files


def test_criterion_9_worker_determinism(criterion, tmp_path):
    with criterion(9, "byte-identical outputs for --workers 1 and --workers 8 across all commands"):
        for tag, argv in COMMANDS.items():
            a = _run_cli(argv, 1, tmp_path, tag)
            b = _run_cli(argv, 8, tmp_path, tag)
            assert a == b, f"{tag} differs between worker counts"
            assert a[1], f"{tag} wrote no output"
