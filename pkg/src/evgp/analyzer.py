"""Closed-form architecture diagnostics for gradient fluctuations at initialization."""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .distributions import DistributionSpec, moment, normalized_moment
from .exact import dp_fourth_moment, exact_second_moment, expected_empirical_variance_exact
from .net import Architecture, as_architecture


def _exp(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


class HypothesisViolated(ValueError):
    """The bound is only proved for ``K`` below every hidden width."""


def beta(arch) -> float:
    """Sum of reciprocal hidden widths ``sum_{j=1}^{d-1} 1/n_j`` (0 without hidden layers)."""
    return math.fsum(1.0 / n for n in as_architecture(arch).hidden)


def beta_exact(arch) -> Fraction:
    return sum((Fraction(1, n) for n in as_architecture(arch).hidden), Fraction(0))


def max_normalized_moment(spec: DistributionSpec, K: int) -> float:
    return max(float(normalized_moment(w, K)) for w in spec.weights)


def annealed_bounds_fourth(arch, spec: DistributionSpec) -> tuple:
    """``(2/n0^2) e^{beta/2} <= E[Z^4] <= (6 m/n0^2) e^{6 m beta}`` with ``m`` the max kurtosis."""
    arch = as_architecture(arch)
    b = beta(arch)
    m = max_normalized_moment(spec, 2)
    n0 = arch.n_in
    return 2.0 / n0**2 * _exp(b / 2), 6 * m / n0**2 * _exp(6 * m * b)


def log_annealed_bounds_fourth(arch, spec: DistributionSpec) -> tuple:
    """Natural logs of :func:`annealed_bounds_fourth`, safe for very deep nets."""
    arch = as_architecture(arch)
    b = beta(arch)
    m = max_normalized_moment(spec, 2)
    ln0 = 2 * math.log(arch.n_in)
    return math.log(2.0) - ln0 + b / 2, math.log(6 * m) - ln0 + 6 * m * b


def path_constant(K: int) -> int:
    """``2^{K-1} (2K)!/K!``, the per-layer worst case of the path pairing count."""
    return 2 ** (K - 1) * math.factorial(2 * K) // math.factorial(K)


def annealed_bound_2k(arch, spec: DistributionSpec, K: int) -> float:
    """Upper bound ``(C/n0^K) e^{C beta}`` on ``E[Z^{2K}]``, ``C = path_constant(K) * max mu~_{2K}``.

    An upper bound, not an estimate.  Needs ``K`` below every hidden width.
    """
    arch = as_architecture(arch)
    if K < 1:
        raise ValueError("K must be >= 1")
    if arch.hidden and K >= min(arch.hidden):
        raise HypothesisViolated(
            f"K={K} must be smaller than every hidden width (min is {min(arch.hidden)})"
        )
    c = path_constant(K) * max_normalized_moment(spec, K)
    return c / arch.n_in**K * _exp(c * beta(arch))


def eta(arch) -> Fraction:
    """Fraction of ordered entry pairs that share an output: ``(n0-1)/(n0 nd - 1)``."""
    arch = as_architecture(arch)
    M = arch.n_in * arch.n_out
    if M < 2:
        raise ValueError("eta needs M = n_0 n_d >= 2")
    return Fraction(arch.n_in - 1, M - 1)


def quenched_bounds(arch, spec: DistributionSpec) -> tuple:
    """``(lower_statement, lower_proof, upper)`` for the mean empirical variance.

    The two lower bounds differ in how ``eta`` weights the same-output and
    distinct-output pairs; both are returned.  Only the statement variant
    (``1 - eta`` on distinct-output pairs) is a valid bound in general: the
    other fails e.g. for ``[2, 1, ..., 1]`` with two-point weights, where the
    empirical variance is exactly 0.
    """
    arch = as_architecture(arch)
    M = arch.n_in * arch.n_out
    if M < 2:
        raise ValueError("M = n_0 n_d = 1: the empirical variance is identically 0")
    e = float(eta(arch))
    n0, n1 = arch.n_in, arch[1]
    k1 = float(normalized_moment(spec.weights[0], 2))
    growth = _exp(beta(arch) / 2)
    pre = (1 - 1 / M) / n0**2
    corr = 4 / n1 * (k1 - 1) * math.exp(-1 / n1)
    lower_statement = pre * (1 - e + e * corr) * growth
    lower_proof = pre * (e + (1 - e) * corr) * growth
    upper = (1 - 1 / M) * annealed_bounds_fourth(arch, spec)[1]
    return lower_statement, lower_proof, upper


def chi1(arch, spec: DistributionSpec) -> tuple:
    """Per-layer edge-of-chaos parameter ``n_{j-1} Var[w^(j)] / 2`` (1 when fan-in normalized)."""
    arch = as_architecture(arch)
    spec.check(arch)
    return tuple(float(arch[j - 1] * moment(w, 2) / 2) for j, w in enumerate(spec.weights, start=1))


def frobenius_expectation(arch) -> Fraction:
    """``E[||J||_F^2] = n_d``: ``n0 nd`` entries of mean square ``1/n0``."""
    arch = as_architecture(arch)
    return arch.n_in * arch.n_out * exact_second_moment(arch)


# --------------------------------------------------------------------------
# width families


class FamilyKind(str, enum.Enum):
    EXPLICIT = "explicit_list"
    CONSTANT = "constant"
    POLYNOMIAL = "polynomial"
    GEOMETRIC = "geometric"


@dataclass(frozen=True)
class WidthFamily:
    """Hidden widths ``n_j`` for ``j >= 1``.

    ``constant``: ``n``; ``polynomial``: ``ceil(c j^p)``; ``geometric``:
    ``ceil(c r^j)``; ``explicit_list``: the given widths.
    """

    kind: FamilyKind
    n: int = 1
    c: float = 1.0
    p: float = 1.0
    r: float = 1.0
    widths: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", FamilyKind(self.kind))
        if self.kind is FamilyKind.CONSTANT and self.n < 1:
            raise ValueError("constant width must be >= 1")
        if self.kind in (FamilyKind.POLYNOMIAL, FamilyKind.GEOMETRIC) and not self.c > 0:
            raise ValueError("coefficient c must be positive")
        if self.kind is FamilyKind.GEOMETRIC and not self.r > 0:
            raise ValueError("ratio r must be positive")
        if self.kind is FamilyKind.EXPLICIT:
            if not self.widths or min(self.widths) < 1:
                raise ValueError("explicit widths must be a nonempty list of positive integers")
            object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))

    def width(self, j: int) -> int:
        if j < 1:
            raise ValueError("hidden layers are indexed from 1")
        if self.kind is FamilyKind.CONSTANT:
            return self.n
        if self.kind is FamilyKind.POLYNOMIAL:
            return max(1, math.ceil(self.c * j**self.p))
        if self.kind is FamilyKind.GEOMETRIC:
            return max(1, math.ceil(self.c * self.r**j))
        if j > len(self.widths):
            raise IndexError(f"explicit family defines only {len(self.widths)} widths")
        return self.widths[j - 1]

    def hidden(self, count: int) -> tuple:
        return tuple(self.width(j) for j in range(1, count + 1))

    def to_json(self) -> dict:
        out = {"kind": self.kind.value}
        if self.kind is FamilyKind.CONSTANT:
            out["n"] = self.n
        elif self.kind is FamilyKind.POLYNOMIAL:
            out.update(c=self.c, p=self.p)
        elif self.kind is FamilyKind.GEOMETRIC:
            out.update(c=self.c, r=self.r)
        else:
            out["widths"] = list(self.widths)
        return out


@dataclass(frozen=True)
class FamilyVerdict:
    annealed: str | None  # "avoids" / "suffers" / None (no asymptotic claim)
    quenched: str | None
    rationale: str
    beta_partial_sums: tuple = ()

    def to_json(self) -> dict:
        return {
            "annealed": self.annealed,
            "quenched": self.quenched,
            "rationale": self.rationale,
            "beta_partial_sums": list(self.beta_partial_sums),
        }


def classify_family(family: WidthFamily, horizon: int = 50) -> FamilyVerdict:
    """Does ``sum_j 1/n_j`` converge?  Annealed and quenched senses share the criterion."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    count = min(horizon, len(family.widths)) if family.kind is FamilyKind.EXPLICIT else horizon
    partial = tuple(itertools.accumulate(1.0 / n for n in family.hidden(count)))
    kind = family.kind
    if kind is FamilyKind.EXPLICIT:
        return FamilyVerdict(
            None, None,
            f"finite list: beta over the first {count} hidden layers is {partial[-1]:.6g}; "
            "no asymptotic verdict for a finite list",
            partial,
        )
    if kind is FamilyKind.CONSTANT:
        converges, why = False, f"constant width {family.n}: beta_d = (d-1)/{family.n} grows without bound"
    elif kind is FamilyKind.POLYNOMIAL:
        converges = family.p > 1
        why = f"n_j ~ {family.c} j^{family.p}: p-series with p={family.p} " + ("converges" if converges else "diverges")
    else:
        converges = family.r > 1
        why = f"n_j ~ {family.c} {family.r}^j: " + (
            "geometric growth, reciprocals summable" if converges else "widths do not grow, reciprocals not summable"
        )
    verdict = "avoids" if converges else "suffers"
    return FamilyVerdict(verdict, verdict, why, partial)


# --------------------------------------------------------------------------
# architecture advisor


class BudgetKind(str, enum.Enum):
    NEURONS = "neurons"
    PARAMETERS = "parameters"


def parameter_count(widths: Sequence[int]) -> int:
    """Weights plus biases, ``sum_j n_j (n_{j-1} + 1)``."""
    return sum(n * (m + 1) for m, n in zip(widths, widths[1:]))


@dataclass(frozen=True)
class Advice:
    hidden: tuple
    widths: tuple
    beta: float
    budget_kind: BudgetKind
    budget: int
    used: int
    alternatives: tuple = ()  # ((hidden widths, beta), ...)

    def to_json(self) -> dict:
        return {
            "hidden": list(self.hidden),
            "widths": list(self.widths),
            "beta": self.beta,
            "budget_kind": self.budget_kind.value,
            "budget": self.budget,
            "used": self.used,
            "alternatives": [{"hidden": list(h), "beta": b} for h, b in self.alternatives],
        }


def advise(
    budget_kind,
    budget: int,
    depth: int,
    n_in: int = 1,
    n_out: int = 1,
    alternatives: Sequence[Sequence[int]] = (),
) -> Advice:
    """Hidden layout with the smallest beta for a neuron or parameter budget.

    Neuron budgets get the most nearly equal integer split (larger layers
    first); parameter budgets get the widest equal-width layout that fits.
    """
    kind = BudgetKind(budget_kind)
    if depth < 2:
        raise ValueError("depth must be >= 2 to have a hidden layer")
    h = depth - 1
    if kind is BudgetKind.NEURONS:
        if budget < h:
            raise ValueError(f"a budget of {budget} neurons cannot fill {h} hidden layers")
        q, r = divmod(budget, h)
        hidden = (q + 1,) * r + (q,) * (h - r)
        used = budget
    else:
        if parameter_count([n_in] + [1] * h + [n_out]) > budget:
            raise ValueError(f"a budget of {budget} parameters cannot fit {h} hidden layers")
        lo, hi = 1, 1
        while parameter_count([n_in] + [hi * 2] * h + [n_out]) <= budget:
            hi *= 2
        hi *= 2
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if parameter_count([n_in] + [mid] * h + [n_out]) <= budget:
                lo = mid
            else:
                hi = mid
        hidden = (lo,) * h
        used = parameter_count([n_in, *hidden, n_out])
    widths = (n_in, *hidden, n_out)
    alts = tuple((tuple(a), beta((n_in, *a, n_out))) for a in alternatives)
    return Advice(hidden, widths, beta(widths), kind, budget, used, alts)


# --------------------------------------------------------------------------
# full report


@dataclass
class EvgpReport:
    widths: tuple
    beta: float
    second_moment: Fraction
    fourth_lower: float
    fourth_upper: float
    exact_fourth: float
    log_exact_fourth: float
    k_upper: dict
    M: int
    eta: Fraction | None
    quenched_lower_statement: float | None
    quenched_lower_proof: float | None
    quenched_upper: float | None
    expected_empirical_variance: float | None
    chi1: tuple
    mu4_max: float
    path_constants: dict
    verdicts: dict
    notices: list = field(default_factory=list)

    def to_json(self) -> dict:
        def rat(x):
            return None if x is None else f"{x.numerator}/{x.denominator}"

        return {
            "widths": list(self.widths),
            "beta": self.beta,
            "M": self.M,
            "second_moment": rat(self.second_moment),
            "fourth_moment": {
                "lower": self.fourth_lower,
                "exact": self.exact_fourth,
                "log_exact": self.log_exact_fourth,
                "upper": self.fourth_upper,
            },
            "k_upper": {str(k): v for k, v in self.k_upper.items()},
            "quenched": {
                "eta": rat(self.eta),
                "lower_statement": self.quenched_lower_statement,
                "lower_proof": self.quenched_lower_proof,
                "exact": self.expected_empirical_variance,
                "upper": self.quenched_upper,
            },
            "chi1": list(self.chi1),
            "constants": {
                "mu4_max": self.mu4_max,
                "path_constants": {str(k): v for k, v in self.path_constants.items()},
            },
            "verdicts": self.verdicts,
            "notices": list(self.notices),
        }

    def to_text(self) -> str:
        def fmt(x):
            return "n/a" if x is None else f"{x:.6g}"

        rows = [
            ("widths", ",".join(map(str, self.widths))),
            ("beta", fmt(self.beta)),
            ("chi1 (per layer)", ", ".join(f"{c:g}" for c in self.chi1)),
            ("mu4~ max", fmt(self.mu4_max)),
            ("E[Z^2]", f"{self.second_moment}"),
            ("E[Z^4] lower", fmt(self.fourth_lower)),
            ("E[Z^4] exact", fmt(self.exact_fourth)),
            ("E[Z^4] upper", fmt(self.fourth_upper)),
        ]
        for k, v in self.k_upper.items():
            rows.append((f"E[Z^{2 * k}] upper (C_{k}={self.path_constants[k]})", fmt(v)))
        rows += [
            ("M = n0*nd", str(self.M)),
            ("eta", "n/a" if self.eta is None else str(self.eta)),
            ("E[VarZ^2] lower (statement)", fmt(self.quenched_lower_statement)),
            ("E[VarZ^2] lower (proof)", fmt(self.quenched_lower_proof)),
            ("E[VarZ^2] exact", fmt(self.expected_empirical_variance)),
            ("E[VarZ^2] upper", fmt(self.quenched_upper)),
        ]
        width = max(len(r[0]) for r in rows)
        lines = [f"{name.ljust(width)}  {value}" for name, value in rows]
        for sense, v in self.verdicts.items():
            lines.append(f"{sense}: {v['rationale']}")
        lines += [f"notice: {n}" for n in self.notices]
        return "\n".join(lines) + "\n"


def analyze(arch, spec: DistributionSpec, max_k: int = 5) -> EvgpReport:
    """Every closed-form diagnostic for one finite architecture.

    Finite architectures get magnitudes, never asymptotic verdicts; use
    :func:`classify_family` for those.
    """
    arch = as_architecture(arch)
    spec.check(arch)
    notices = []
    if not spec.conforming:
        notices.append(
            "non-conforming spec (zero bias atom or off-normalization variance): "
            "exact formulas apply only approximately"
        )
    c1 = chi1(arch, spec)
    if any(abs(c - 1.0) > 1e-12 for c in c1):
        notices.append("chi1 != 1: weights are not fan-in normalized (diagnostic mode)")
    b = beta(arch)
    lo, hi = annealed_bounds_fourth(arch, spec)
    e4 = dp_fourth_moment(arch, spec)
    k_upper, consts = {}, {}
    for k in range(3, max_k + 1):
        consts[k] = path_constant(k)
        try:
            k_upper[k] = annealed_bound_2k(arch, spec, k)
        except HypothesisViolated:
            notices.append(f"K={k} bound skipped: needs every hidden width > {k}")
            del consts[k]
        except OverflowError:
            k_upper[k] = math.inf
    M = arch.n_in * arch.n_out
    if M >= 2:
        ql_s, ql_p, qu = quenched_bounds(arch, spec)
        ev = expected_empirical_variance_exact(arch, spec).value
        et = eta(arch)
    else:
        ql_s = ql_p = qu = ev = et = None
        notices.append("M = 1: the empirical variance of a single entry is identically 0")
    norm = arch.n_in**2
    annealed = {
        "normalized_fourth": e4.value * norm,
        "normalized_bracket": [lo * norm, hi * norm],
        "rationale": (
            f"beta={b:.6g}: n0^2 E[Z^4] = {e4.value * norm:.6g} within "
            f"[{lo * norm:.6g}, {hi * norm:.6g}]; finite architecture, no asymptotic claim"
        ),
    }
    quenched = {
        "normalized_empirical_variance": None if ev is None else ev * norm,
        "statement_lower_holds": None if ev is None else ev >= ql_s * (1 - 1e-9),
        "proof_lower_holds": None if ev is None else ev >= ql_p * (1 - 1e-9),
        "rationale": (
            "M = 1, quenched statistic undefined"
            if ev is None
            else f"beta={b:.6g}: n0^2 E[VarZ^2] = {ev * norm:.6g}; lower "
            f"{ql_s * norm:.6g}, upper {qu * norm:.6g}; finite architecture, no asymptotic claim"
        ),
    }
    return EvgpReport(
        widths=arch.widths,
        beta=b,
        second_moment=exact_second_moment(arch),
        fourth_lower=lo,
        fourth_upper=hi,
        exact_fourth=e4.value,
        log_exact_fourth=e4.log_value,
        k_upper=k_upper,
        M=M,
        eta=et,
        quenched_lower_statement=ql_s,
        quenched_lower_proof=ql_p,
        quenched_upper=qu,
        expected_empirical_variance=ev,
        chi1=c1,
        mu4_max=max_normalized_moment(spec, 2),
        path_constants=consts,
        verdicts={"annealed": annealed, "quenched": quenched},
        notices=notices,
    )
