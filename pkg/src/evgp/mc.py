"""Monte Carlo estimates of Jacobian-entry statistics over random initializations.

Realizations are addressed by sample index through the counter-based
stream, the index range is cut into a fixed grid of chunks, and per-chunk
power sums are stored as exact rationals.  Merging is therefore exactly
associative and commutative, and results are bit-identical for any number
of workers.
"""
from __future__ import annotations

import csv
import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .distributions import BiasKind, DistributionSpec
from .net import as_architecture, batch_jacobians, default_input, sample_batch

CHUNK = 8192
N_GROUPS = 32
HEAVY_TAIL_KURTOSIS = 1e3


class DegenerateInput(ValueError):
    """Zero input with zero biases: every gradient vanishes identically."""


class EstimatorKind(str, enum.Enum):
    PLAIN_MEAN = "plain_mean"
    MEDIAN_OF_MEANS = "median_of_means"


@dataclass(frozen=True)
class SufficientStats:
    """Count and power sums ``sum x^k`` (k = 1..4) per tracked quantity.

    Sums are exact rationals of the per-chunk floating sums, so merging in
    any order or grouping gives the same value.
    """

    names: tuple
    count: int = 0
    sums: tuple = ()

    def __post_init__(self):
        if not self.sums:
            object.__setattr__(self, "sums", tuple((Fraction(0),) * 4 for _ in self.names))
        if len(self.sums) != len(self.names):
            raise ValueError("one row of power sums per tracked quantity")

    @classmethod
    def empty(cls, names: Sequence[str]) -> "SufficientStats":
        return cls(tuple(names))

    @classmethod
    def from_values(cls, names: Sequence[str], values: np.ndarray) -> "SufficientStats":
        values = np.asarray(values, dtype=float).reshape(len(values), len(names))
        sums = []
        for col in values.T:
            sq = col * col
            sums.append(tuple(Fraction(math.fsum(v)) for v in (col, sq, sq * col, sq * sq)))
        return cls(tuple(names), len(values), tuple(sums))

    def merge(self, other: "SufficientStats") -> "SufficientStats":
        return merge(self, other)

    def column(self, name: str) -> tuple:
        return self.sums[self.names.index(name)]

    def mean(self, name: str) -> float:
        return float(self.column(name)[0] / self.count)

    def central_moments(self, name: str) -> tuple:
        """Sample variance (ddof=1) and the biased 4th-moment kurtosis."""
        n = self.count
        s1, s2, s3, s4 = self.column(name)
        m = s1 / n
        c2 = s2 / n - m * m
        c4 = s4 / n - 4 * m * s3 / n + 6 * m * m * s2 / n - 3 * m**4
        var = c2 * n / (n - 1) if n > 1 else Fraction(0)
        kurt = float(c4 / (c2 * c2)) if c2 > 0 else 0.0
        return float(var), kurt


def merge(a: SufficientStats, b: SufficientStats) -> SufficientStats:
    if a.names != b.names:
        raise ValueError(f"cannot merge stats over {a.names} with {b.names}")
    sums = tuple(tuple(x + y for x, y in zip(ra, rb)) for ra, rb in zip(a.sums, b.sums))
    return SufficientStats(a.names, a.count + b.count, sums)


@dataclass(frozen=True)
class MomentResult:
    estimate: float
    std_error: float
    n_samples: int
    method: EstimatorKind
    target: str
    kurtosis: float = 0.0
    heavy_tail: bool = False
    median_of_means: float | None = None
    n_kink_samples: int = 0

    def covers(self, value: float, n_se: float = 3.0) -> bool:
        return abs(self.estimate - value) <= n_se * self.std_error

    def to_json(self) -> dict:
        return {
            "target": self.target,
            "estimate": self.estimate,
            "std_error": self.std_error,
            "n_samples": self.n_samples,
            "method": self.method.value,
            "kurtosis": self.kurtosis,
            "heavy_tail": self.heavy_tail,
            "median_of_means": self.median_of_means,
            "n_kink_samples": self.n_kink_samples,
        }


@dataclass
class _RunOutput:
    groups: list
    n_kink: int
    rows: list = field(default_factory=list)

    @property
    def total(self) -> SufficientStats:
        out = SufficientStats.empty(self.groups[0].names)
        for g in self.groups:
            out = merge(out, g)
        return out


def _resolve_input(arch, spec: DistributionSpec, x):
    x = default_input(arch) if x is None else np.asarray(x, dtype=float)
    if x.shape != (arch.n_in,):
        raise ValueError(f"input must have length {arch.n_in}")
    if not np.any(x) and any(b.kind is BiasKind.ZERO for b in spec.biases[:1]):
        raise DegenerateInput("zero input with zero first-layer bias: all gradients vanish")
    return x


def _quantities(jac: np.ndarray, Ks: Sequence[int]):
    """Per-realization statistics from Jacobians of shape (B, n0, nd)."""
    z2 = (jac * jac).reshape(len(jac), -1)
    cols = [np.mean(z2**k, axis=1) for k in Ks]
    z4 = z2 * z2
    cols.append(z2.sum(axis=1))
    cols.append(z4.mean(axis=1) - z2.mean(axis=1) ** 2)
    return np.column_stack(cols)


def _names(Ks):
    return tuple(f"Z^{2 * k}" for k in Ks) + ("frobenius", "empirical_variance")


def _plan(n_samples: int, chunk: int):
    """Fixed (group, start, count) grid; independent of the worker count."""
    n_groups = min(N_GROUPS, n_samples)
    items = []
    for g in range(n_groups):
        lo = n_samples * g // n_groups
        hi = n_samples * (g + 1) // n_groups
        for s in range(lo, hi, chunk):
            items.append((g, s, min(chunk, hi - s)))
    return n_groups, items


def _run(arch, spec, x, Ks, n_samples, seed, workers, chunk=CHUNK, keep_rows=False) -> _RunOutput:
    arch = as_architecture(arch)
    spec.check(arch)
    if n_samples < 2:
        raise ValueError("need at least 2 samples")
    x = _resolve_input(arch, spec, x)
    names = _names(Ks)
    n_groups, items = _plan(n_samples, chunk)

    def work(item):
        _, start, count = item
        weights, biases = sample_batch(arch, spec, seed, start, count)
        jac, n_zero = batch_jacobians(weights, biases, x)
        vals = _quantities(jac, Ks)
        return SufficientStats.from_values(names, vals), n_zero, (vals if keep_rows else None)

    workers = max(1, int(workers or os.cpu_count() or 1))
    if workers == 1:
        results = [work(it) for it in items]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, items))

    groups = [SufficientStats.empty(names) for _ in range(n_groups)]
    n_kink = 0
    rows = []
    for (g, start, _), (stats, nz, vals) in zip(items, results):
        groups[g] = merge(groups[g], stats)
        n_kink += nz
        if keep_rows:
            rows.append((start, vals))
    return _RunOutput(groups, n_kink, rows)


def _summarize(out: _RunOutput, name: str, target: str) -> MomentResult:
    total = out.total
    mean = total.mean(name)
    var, kurt = total.central_moments(name)
    se = math.sqrt(var / total.count)
    heavy = kurt > HEAVY_TAIL_KURTOSIS
    mom = None
    if heavy:
        mom = float(np.median([g.mean(name) for g in out.groups if g.count]))
    return MomentResult(
        estimate=mean,
        std_error=se,
        n_samples=total.count,
        method=EstimatorKind.PLAIN_MEAN,
        target=target,
        kurtosis=kurt,
        heavy_tail=heavy,
        median_of_means=mom,
        n_kink_samples=out.n_kink,
    )


def _write_dump(path, names, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("sample",) + tuple(names))
        for start, vals in rows:
            for i, row in enumerate(vals):
                w.writerow((start + i, *(repr(float(v)) for v in row)))


def estimate_moments(
    arch,
    spec: DistributionSpec,
    x=None,
    K_list: Sequence[int] = (1, 2),
    n_samples: int = 100_000,
    seed: int = 0,
    workers: int | None = 1,
    dump: str | os.PathLike | None = None,
) -> list:
    """Estimate ``E[Z^{2K}]`` for each ``K``, pooling all ``(p, q)`` entries of a net.

    One realization contributes one observation, the entry average of
    ``Z_{p,q}^{2K}``, so the standard error accounts for correlation between
    entries of the same net.
    """
    Ks = tuple(int(k) for k in K_list)
    if not Ks or min(Ks) < 1:
        raise ValueError("K values must be >= 1")
    out = _run(arch, spec, x, Ks, n_samples, seed, workers, keep_rows=dump is not None)
    if dump is not None:
        _write_dump(dump, _names(Ks), out.rows)
    return [_summarize(out, f"Z^{2 * k}", f"E[Z^{2 * k}]") for k in Ks]


def estimate_frobenius(arch, spec, x=None, n_samples=100_000, seed=0, workers=1) -> MomentResult:
    """Estimate ``E[sum_{p,q} Z_{p,q}^2]`` (equals ``n_d`` for normalized nets)."""
    out = _run(arch, spec, x, (1,), n_samples, seed, workers)
    return _summarize(out, "frobenius", "E[||J||_F^2]")


def estimate_empirical_variance(arch, spec, x=None, n_samples=100_000, seed=0, workers=1, dump=None) -> MomentResult:
    """Estimate the mean within-net empirical variance of the squared entries."""
    arch = as_architecture(arch)
    if arch.n_in * arch.n_out < 2:
        raise ValueError("empirical variance needs M = n_0 n_d >= 2 entries")
    out = _run(arch, spec, x, (1, 2), n_samples, seed, workers, keep_rows=dump is not None)
    if dump is not None:
        _write_dump(dump, _names((1, 2)), out.rows)
    return _summarize(out, "empirical_variance", "E[Var_hat[Z^2]]")


def run_all(arch, spec, x=None, K_list=(1, 2), n_samples=100_000, seed=0, workers=1):
    """Every tracked estimate from a single batch of realizations, keyed by name."""
    Ks = tuple(K_list)
    out = _run(arch, spec, x, Ks, n_samples, seed, workers)
    results = {f"Z^{2 * k}": _summarize(out, f"Z^{2 * k}", f"E[Z^{2 * k}]") for k in Ks}
    results["frobenius"] = _summarize(out, "frobenius", "E[||J||_F^2]")
    arch = as_architecture(arch)
    if arch.n_in * arch.n_out >= 2:
        results["empirical_variance"] = _summarize(out, "empirical_variance", "E[Var_hat[Z^2]]")
    return results, out.total
