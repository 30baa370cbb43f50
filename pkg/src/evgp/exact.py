"""Exact even moments of Jacobian entries.

Two independent routes:

* the path-collection oracle sums ``prod_j C_j(Gamma)`` over ordered tuples
  of paths in exact rational arithmetic, either by literal enumeration or
  by pushing a vector indexed by the tuple's positions through the layers
  (the same finite sum, regrouped by distributivity);
* transfer-matrix dynamic programs over the coincidence pattern of four
  paths, evaluated in log space so depth in the thousands is fine.

Public endpoints ``p`` and ``q`` are 1-based, like neuron labels.
"""
from __future__ import annotations

import itertools
import math
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass
from decimal import Context, Decimal
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .distributions import DistributionSpec, WeightLaw, moment, normalized_moment, sample
from .net import Architecture, GuardExceeded, as_architecture

DEFAULT_GUARD = 10**8


class NonRationalLaw(TypeError):
    """The oracle needs exact rational moments."""


@dataclass(frozen=True)
class ExactValue:
    """A moment value with provenance.

    ``rational`` is set for results computed in exact arithmetic; DP and
    closed-form float results carry ``log_value`` (natural log), which stays
    finite long after the value itself overflows a double, plus ``approx``,
    the directly accumulated double when that is finite.
    """

    log_value: float
    method: str
    rational: Fraction | None = None
    approx: float | None = None

    @classmethod
    def from_rational(cls, value: Fraction, method: str) -> "ExactValue":
        value = Fraction(value)
        if value < 0:
            raise ValueError("moment values are nonnegative")
        log_value = -math.inf if value == 0 else _log_fraction(value)
        return cls(log_value, method, value)

    @classmethod
    def from_float(cls, value: float, method: str) -> "ExactValue":
        if value < 0:
            raise ValueError("moment values are nonnegative")
        return cls(-math.inf if value == 0 else math.log(value), method, approx=float(value))

    @property
    def exact(self) -> bool:
        return self.rational is not None

    @property
    def value(self) -> float:
        if self.rational is not None:
            return float(self.rational)
        if self.approx is not None:
            return self.approx
        try:
            return math.exp(self.log_value)
        except OverflowError:
            return math.inf

    def __float__(self) -> float:
        return self.value

    def decimal(self, digits: int = 17) -> str:
        ctx = Context(prec=digits)
        if self.rational is not None:
            if self.rational.denominator == 1:
                return str(self.rational.numerator)
            q = ctx.divide(Decimal(self.rational.numerator), Decimal(self.rational.denominator))
            return format(q.normalize(ctx), "f") if abs(q.adjusted()) < 20 else str(q.normalize(ctx))
        if self.log_value == -math.inf:
            return "0"
        if self.approx is not None:
            text = repr(self.approx)
            return text[:-2] if text.endswith(".0") else text
        v = ctx.exp(Decimal(repr(self.log_value)))
        return str(v.normalize(ctx))

    def to_json(self) -> dict:
        out = {
            "value": self.decimal(),
            "exact": self.exact,
            "log_value": None if self.log_value == -math.inf else self.log_value,
            "method": self.method,
        }
        if self.rational is not None:
            out["rational"] = f"{self.rational.numerator}/{self.rational.denominator}"
        return out


def _log_fraction(x: Fraction) -> float:
    # survives numerators/denominators far beyond float range
    return math.log(x.numerator) - math.log(x.denominator)


def _log_diff(la: float, lb: float) -> float:
    """log(exp(la) - exp(lb)) for la >= lb."""
    if lb == -math.inf:
        return la
    r = lb - la
    if r > 0:
        if r < 1e-12:
            return -math.inf
        raise ValueError("difference of moments went negative")
    if r == 0:
        return -math.inf
    return la + math.log1p(-math.exp(r))


def _log_sum(logs: Iterable[float]) -> float:
    logs = [x for x in logs if x != -math.inf]
    if not logs:
        return -math.inf
    top = max(logs)
    return top + math.log(math.fsum(math.exp(x - top) for x in logs))


# --------------------------------------------------------------------------
# path-collection oracle


def layer_coefficient(law, prev: Sequence[int], nxt: Sequence[int]) -> Fraction:
    """``C_j`` for one layer: ``(1/2)^{|Gamma(j)|} prod mu_{|Gamma_ab(j)|}``."""
    return _layer_coefficient(law, tuple(prev), tuple(nxt))


@lru_cache(maxsize=1 << 16)
def _layer_coefficient(law, prev: tuple, nxt: tuple) -> Fraction:
    c = Fraction(1, 2 ** len(set(nxt)))
    for mult in Counter(zip(prev, nxt)).values():
        m = moment(law, mult)
        if not m:
            return Fraction(0)
        c *= m
    return c


def collection_contribution(arch, spec: DistributionSpec, paths: Sequence[Sequence[int]]):
    """``(prod_j C_j, has_odd_edge)`` for one collection of 0-based paths."""
    arch = as_architecture(arch)
    value = Fraction(1)
    odd = False
    for j in range(1, arch.depth + 1):
        prev = tuple(p[j - 1] for p in paths)
        nxt = tuple(p[j] for p in paths)
        odd |= any(m % 2 for m in Counter(zip(prev, nxt)).values())
        value *= _layer_coefficient(spec.weights[j - 1], prev, nxt)
    return value, odd


def oracle_cost(arch, n_paths: int) -> int:
    """Number of ordered path collections the oracle sums over."""
    arch = as_architecture(arch)
    return math.prod(arch.hidden) ** n_paths


@lru_cache(maxsize=None)
def _even_assignments(n: int, size: int) -> tuple:
    """Tuples in ``range(n)**size`` where every value occurs an even number of times."""
    out = []
    for t in itertools.product(range(n), repeat=size):
        if all(c % 2 == 0 for c in Counter(t).values()):
            out.append(t)
    return tuple(out)


def _successors(u: tuple, n: int):
    """Next-layer positions reachable from ``u`` with all-even edge multiplicities."""
    groups = defaultdict(list)
    for k, a in enumerate(u):
        groups[a].append(k)
    blocks = list(groups.values())
    if any(len(b) % 2 for b in blocks):
        return
    choices = [_even_assignments(n, len(b)) for b in blocks]
    v = [0] * len(u)
    for combo in itertools.product(*choices):
        for block, vals in zip(blocks, combo):
            for k, val in zip(block, vals):
                v[k] = val
        yield tuple(v)


def _check_rational(spec: DistributionSpec):
    if not spec.exact:
        raise NonRationalLaw("the path oracle needs laws with exact rational moments")


def _oracle_sum(arch: Architecture, spec: DistributionSpec, starts, ends, engine: str) -> Fraction:
    d = arch.depth
    laws = spec.weights
    if engine == "enumerate":
        hidden = [range(n) for n in arch.hidden]
        total = Fraction(0)
        for mids in itertools.product(itertools.product(*hidden), repeat=len(starts)):
            paths = [(s, *m, e) for s, m, e in zip(starts, mids, ends)]
            value, odd = collection_contribution(arch, spec, paths)
            assert not (odd and value), "odd edge multiplicity must annihilate a collection"
            total += value
        return total
    if engine != "layered":
        raise ValueError(f"unknown oracle engine {engine!r}")
    vec = {tuple(starts): Fraction(1)}
    for j in range(1, d):
        nxt = defaultdict(Fraction)
        for u, val in vec.items():
            for v in _successors(u, arch[j]):
                c = _layer_coefficient(laws[j - 1], u, v)
                if c:
                    nxt[v] += val * c
        vec = nxt
    ends = tuple(ends)
    return sum((val * _layer_coefficient(laws[d - 1], u, ends) for u, val in vec.items()), Fraction(0))


def _validate_endpoint(arch: Architecture, p: int, q: int):
    if not 1 <= p <= arch.n_in:
        raise ValueError(f"input index p={p} outside 1..{arch.n_in}")
    if not 1 <= q <= arch.n_out:
        raise ValueError(f"output index q={q} outside 1..{arch.n_out}")


def oracle_mixed_moment(
    arch,
    spec: DistributionSpec,
    terms: Sequence[tuple],
    guard: int = DEFAULT_GUARD,
    engine: str = "layered",
) -> ExactValue:
    """``E[prod_m Z_{p_m,q_m}^{2 K_m}]`` by summing over path collections.

    ``terms`` is a list of ``(p, q, K)`` with 1-based endpoints.
    """
    arch = as_architecture(arch)
    spec.check(arch)
    _check_rational(spec)
    starts, ends = [], []
    for p, q, k in terms:
        _validate_endpoint(arch, p, q)
        if k < 0:
            raise ValueError("exponents K_m must be nonnegative")
        starts += [p - 1] * (2 * k)
        ends += [q - 1] * (2 * k)
    if not starts:
        return ExactValue.from_rational(Fraction(1), "oracle")
    cost = oracle_cost(arch, len(starts))
    if cost > guard:
        raise GuardExceeded("path-collection oracle", cost, guard)
    return ExactValue.from_rational(_oracle_sum(arch, spec, starts, ends, engine), "oracle")


def oracle_moment(
    arch,
    spec: DistributionSpec,
    p: int = 1,
    q: int = 1,
    K: int = 2,
    guard: int = DEFAULT_GUARD,
    engine: str = "layered",
) -> ExactValue:
    """``E[Z_{p,q}^{2K}]`` by summing over ordered ``2K``-tuples of paths."""
    if K < 1:
        raise ValueError("K must be >= 1")
    return oracle_mixed_moment(arch, spec, [(p, q, K)], guard=guard, engine=engine)


def exact_second_moment(arch) -> Fraction:
    """``E[Z_{p,q}^2] = 1/n_0`` for every fan-in normalized net."""
    return Fraction(1, as_architecture(arch).n_in)


# --------------------------------------------------------------------------
# transfer-matrix programs for four paths
#
# Four paths traverse layer j either all through one neuron ("collapsed") or
# as two pairs through two distinct neurons ("split"); any other pattern has
# an odd edge multiplicity.  For mixed moments the split pattern is further
# tagged by whether it pairs paths the way the endpoints do ("aligned") or not
# ("crossed"); a split layer can only continue in the same pairing or collapse.


def _mu24(law):
    return float(moment(law, 2)), float(moment(law, 4))


class _LogVector:
    """Nonnegative vector stored as values / scale with log(scale) tracked."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)
        self.log_scales = []
        self.scales = []

    def renormalize(self):
        top = float(self.values.max())
        if top == 0.0:
            self.values[:] = 0.0
            self.log_scales.append(-math.inf)
            return
        self.values /= top
        self.log_scales.append(math.log(top))
        self.scales.append(top)

    def log_total(self, final: float) -> float:
        if final <= 0.0 or -math.inf in self.log_scales:
            return -math.inf
        return math.fsum(self.log_scales) + math.log(final)

    def result(self, final: float, method: str = "dp") -> "ExactValue":
        log_value = self.log_total(final)
        if log_value == -math.inf:
            return ExactValue(log_value, method, approx=0.0)
        direct = float(final)
        for t in self.scales:
            direct *= t
        ok = math.isfinite(direct) and direct > 0 and log_value < 700
        return ExactValue(log_value, method, approx=direct if ok else None)


def dp_fourth_moment(arch, spec: DistributionSpec, p: int = 1, q: int = 1, *, _perturb: float = 0.0) -> ExactValue:
    """``E[Z_{p,q}^4]`` by a two-state transfer matrix over ``|Gamma(j)| in {1, 2}``.

    Per-layer coefficients: collapsed->collapsed ``mu4/2``, split->collapsed
    ``(3/2) mu2^2`` (the factor 3 counts the ways four paths pair up when a
    split closes), anything->split ``mu2^2/4``.  Hidden layers contribute
    ``n_j`` collapsed and ``n_j (n_j - 1)`` split placements.

    ``_perturb`` is added to the split->collapsed coefficient; it exists so the
    verification harness can prove it catches a wrong coefficient.
    """
    arch = as_architecture(arch)
    spec.check(arch)
    _validate_endpoint(arch, p, q)
    vec = _LogVector([1.0, 0.0])  # [collapsed, split]
    for j in range(1, arch.depth + 1):
        mu2, mu4 = _mu24(spec.weights[j - 1])
        c11 = mu4 / 2
        c21 = 1.5 * mu2 * mu2 + _perturb
        c_split = mu2 * mu2 / 4
        one, two = vec.values
        if j == arch.depth:
            return vec.result(one * c11 + two * c21)
        n = arch[j]
        vec.values = np.array([(one * c11 + two * c21) * n, (one + two) * c_split * n * (n - 1)])
        vec.renormalize()
    raise AssertionError("unreachable")


def mixed_fourth_general(arch, spec: DistributionSpec, p1: int, q1: int, p2: int, q2: int) -> ExactValue:
    """``E[Z_{p1,q1}^2 Z_{p2,q2}^2]`` by a three-state transfer matrix.

    States are collapsed / aligned split / crossed split.  The endpoints fix
    the boundary states: equal inputs start collapsed, distinct inputs start
    aligned; likewise for outputs at the last layer.  Identical pairs give the
    diagonal fourth moment.
    """
    arch = as_architecture(arch)
    spec.check(arch)
    _validate_endpoint(arch, p1, q1)
    _validate_endpoint(arch, p2, q2)
    ONE, ALIGNED, CROSSED = 0, 1, 2
    start = np.zeros(3)
    start[ONE if p1 == p2 else ALIGNED] = 1.0
    vec = _LogVector(start)
    end = ONE if q1 == q2 else ALIGNED
    for j in range(1, arch.depth + 1):
        mu2, mu4 = _mu24(spec.weights[j - 1])
        collapse = mu4 / 2
        merge = mu2 * mu2 / 2  # split -> collapsed
        keep = mu2 * mu2 / 4  # anything -> split
        one, al, cr = vec.values
        if j == arch.depth:
            if end == ONE:
                final = one * collapse + (al + cr) * merge
            else:
                final = (one + al) * keep
            return vec.result(final)
        n = arch[j]
        pairs = n * (n - 1)
        vec.values = np.array(
            [
                (one * collapse + (al + cr) * merge) * n,
                (one + al) * keep * pairs,
                (2 * one + cr) * keep * pairs,  # two crossed pairings open from collapsed
            ]
        )
        vec.renormalize()
    raise AssertionError("unreachable")


def same_output_gap(arch, spec: DistributionSpec) -> tuple:
    """``E[Z_{p,q}^4] - E[Z_{p1,q}^2 Z_{p2,q}^2]`` split by first-layer pattern.

    Returns ``(collapsed_term, crossed_term)``.  The collapsed term is
    ``n_1 (mu4 - mu2^2)/2 * E[Z^4]`` of the sub-network after layer 1 and
    vanishes for two-point weights.  The crossed term comes from four paths
    leaving one input as two pairs that the two-input moment cannot pair:
    ``2 n_1 (n_1 - 1) (mu2^2/4) E[Z_{a,q}^2 Z_{b,q}^2]`` of the sub-network.
    """
    arch = as_architecture(arch)
    spec.check(arch)
    law = spec.weights[0]
    mu2, mu4 = moment(law, 2), moment(law, 4)
    kurt = (mu4 - mu2 * mu2) / 2
    if arch.depth == 1:
        base = ExactValue.from_rational(kurt, "closed_form") if isinstance(kurt, Fraction) else ExactValue.from_float(float(kurt), "closed_form")
        return base, ExactValue.from_rational(Fraction(0), "closed_form")
    n1 = arch[1]
    sub = Architecture(arch.widths[1:])
    tail = spec.tail(1)
    f = dp_fourth_moment(sub, tail)
    collapsed = ExactValue(
        -math.inf if kurt == 0 else math.log(n1 * float(kurt)) + f.log_value, "dp"
    )
    if n1 < 2:
        return collapsed, ExactValue.from_rational(Fraction(0), "dp")
    g = mixed_fourth_general(sub, tail, 1, 1, 2, 1)
    crossed = ExactValue(math.log(2 * n1 * (n1 - 1) * float(mu2) ** 2 / 4) + g.log_value, "dp")
    return collapsed, crossed


def mixed_fourth_same_output(arch, spec: DistributionSpec, p1: int, p2: int, q: int) -> ExactValue:
    """``E[Z_{p1,q}^2 Z_{p2,q}^2]`` for distinct inputs, by peeling off layer 1.

    ``E[Z^4]`` minus both parts of :func:`same_output_gap`; an independent
    route to the same number as :func:`mixed_fourth_general`.
    """
    arch = as_architecture(arch)
    if arch.n_in < 2:
        raise ValueError("two distinct inputs need n_0 >= 2")
    if p1 == p2:
        raise ValueError("p1 and p2 must differ")
    _validate_endpoint(arch, p1, q)
    _validate_endpoint(arch, p2, q)
    e4 = dp_fourth_moment(arch, spec)
    collapsed, crossed = same_output_gap(arch, spec)
    return ExactValue(_log_diff(e4.log_value, _log_sum([collapsed.log_value, crossed.log_value])), "dp")


def pair_counts(arch) -> dict:
    """Ordered pairs ``m1 != m2`` of Jacobian entries, by endpoint coincidence."""
    arch = as_architecture(arch)
    n0, nd = arch.n_in, arch.n_out
    return {
        "same_q": nd * n0 * (n0 - 1),
        "same_p": n0 * nd * (nd - 1),
        "distinct": n0 * (n0 - 1) * nd * (nd - 1),
    }


_PAIR_ENDPOINTS = {"same_q": (1, 1, 2, 1), "same_p": (1, 1, 1, 2), "distinct": (1, 1, 2, 2)}


def expected_empirical_variance_exact(arch, spec: DistributionSpec) -> ExactValue:
    """Mean over realizations of the empirical variance of the ``M`` squared entries.

    ``(1/M^2) sum_{m1 != m2} (E[Z^4] - E[Z_{m1}^2 Z_{m2}^2])``.  With a single
    entry (``M = 1``) the empirical variance is identically 0.
    """
    arch = as_architecture(arch)
    spec.check(arch)
    M = arch.n_in * arch.n_out
    if M < 2:
        warnings.warn("M = n_0 n_d = 1: the empirical variance of one entry is identically 0", stacklevel=2)
        return ExactValue.from_rational(Fraction(0), "closed_form")
    e4 = dp_fourth_moment(arch, spec)
    weighted = []
    for kind, count in pair_counts(arch).items():
        if not count:
            continue
        mixed = mixed_fourth_general(arch, spec, *_PAIR_ENDPOINTS[kind])
        ratio = math.exp(mixed.log_value - e4.log_value) if mixed.log_value > -math.inf else 0.0
        weighted.append(count * (1.0 - ratio))
    total = math.fsum(weighted)
    if total <= 0:
        return ExactValue.from_float(0.0, "dp")
    return ExactValue(e4.log_value + math.log(total) - 2 * math.log(M), "dp")


def assemble_empirical_variance_oracle(arch, spec: DistributionSpec, guard: int = DEFAULT_GUARD) -> Fraction:
    """The same expectation assembled entirely from oracle mixed moments (tiny nets)."""
    arch = as_architecture(arch)
    M = arch.n_in * arch.n_out
    if M < 2:
        return Fraction(0)
    e4 = oracle_moment(arch, spec, 1, 1, 2, guard=guard).rational
    total = Fraction(0)
    for kind, count in pair_counts(arch).items():
        if count:
            p1, q1, p2, q2 = _PAIR_ENDPOINTS[kind]
            m = oracle_mixed_moment(arch, spec, [(p1, q1, 1), (p2, q2, 1)], guard=guard).rational
            total += count * (e4 - m)
    return total / M**2


# --------------------------------------------------------------------------
# symmetrization identity behind the path formula


@dataclass(frozen=True)
class SymmetrizationCheck:
    estimate: float
    std_error: float
    expected: float
    n_trials: int

    @property
    def z_score(self) -> float:
        if self.std_error == 0:
            return 0.0 if self.estimate == self.expected else math.inf
        return (self.estimate - self.expected) / self.std_error

    @property
    def passed(self) -> bool:
        return abs(self.z_score) <= 4.0


def symmetrization_check(
    laws: Sequence[WeightLaw],
    powers: Sequence[int],
    trials: int = 200_000,
    seed: int = 0,
    offsets: Sequence[float] | None = None,
    noise=None,
) -> SymmetrizationCheck:
    """Monte Carlo check of ``E[prod w_j^k_j 1{X + sum w_j a_j > 0}] = (1/2) prod E[w_j^k_j]``.

    ``X`` defaults to a standard Gaussian (any atomless symmetric law works);
    ``offsets`` are the constants ``a_j`` and are drawn at random if omitted.
    A test utility for the symmetrization step, not a user-facing computation.

    Needs an even total power; an odd total is accepted only with all
    offsets zero, where both sides vanish by symmetry.
    """
    if len(laws) != len(powers):
        raise ValueError("one power per weight law")
    gen = np.random.default_rng(seed)
    a = gen.uniform(-2, 2, len(laws)) if offsets is None else np.asarray(offsets, dtype=float)
    if sum(powers) % 2 and np.any(a):
        raise ValueError("odd total power: the identity needs sum(powers) even (or all offsets 0)")
    w = np.stack([sample(law, gen, trials) for law in laws]) if laws else np.zeros((0, trials))
    x = gen.standard_normal(trials) if noise is None else sample(noise, gen, trials)
    vals = np.prod(w ** np.asarray(powers)[:, None], axis=0) * ((x + a @ w) > 0)
    expected = 0.5 * math.prod(float(moment(law, k)) for law, k in zip(laws, powers))
    return SymmetrizationCheck(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(trials)), expected, trials)
