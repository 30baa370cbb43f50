"""Per-layer weight and bias laws for random ReLU networks.

Weight laws are symmetric and fan-in normalized (variance ``2 / fan_in``).
Every built-in law has closed-form rational even moments, which is what
lets the path-sum oracle in :mod:`evgp.exact` run in exact arithmetic.

Sampling is driven by pairs of uniform variates on ``(0, 1]`` so the same
transform serves both an ordinary :class:`numpy.random.Generator` and the
counter-based streams in :mod:`evgp.rng`.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

Number = Union[Fraction, float]


class WeightKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    SIGNED_BERNOULLI = "signed_bernoulli"
    UNIFORM = "uniform"


class BiasKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"
    ZERO = "zero"


class NonConformingLawWarning(UserWarning):
    """A law violates the symmetric/atomless hypotheses of the moment formulas."""


def _double_factorial(k: int) -> int:
    return math.prod(range(k - 1, 0, -2)) if k > 0 else 1


@dataclass(frozen=True)
class WeightLaw:
    """Symmetric weight law scaled to variance ``2 * variance_scale / fan_in``.

    ``variance_scale`` other than 1 breaks fan-in normalization and exists
    only for diagnostics (e.g. probing ``chi1`` away from the edge of chaos).
    """

    kind: WeightKind
    fan_in: int
    variance_scale: Fraction = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "kind", WeightKind(self.kind))
        if not isinstance(self.fan_in, (int, np.integer)) or self.fan_in < 1:
            raise ValueError(f"fan_in must be a positive integer, got {self.fan_in!r}")
        object.__setattr__(self, "fan_in", int(self.fan_in))
        scale = Fraction(self.variance_scale)
        if scale <= 0:
            raise ValueError("variance_scale must be positive")
        object.__setattr__(self, "variance_scale", scale)

    @property
    def conforming(self) -> bool:
        return self.variance_scale == 1

    @property
    def variance(self) -> Fraction:
        return 2 * self.variance_scale / self.fan_in

    @property
    def exact(self) -> bool:
        return True

    def moment(self, r: int) -> Fraction:
        return moment(self, r)

    def transform(self, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
        var = float(self.variance)
        if self.kind is WeightKind.GAUSSIAN:
            return math.sqrt(var) * np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        if self.kind is WeightKind.SIGNED_BERNOULLI:
            return np.where(u1 <= 0.5, -math.sqrt(var), math.sqrt(var))
        a = math.sqrt(3.0 * var)
        return a * (2.0 * u1 - 1.0)

    def to_json(self) -> dict:
        out = {"kind": self.kind.value}
        if self.variance_scale != 1:
            out["variance_scale"] = str(self.variance_scale)
        return out


@dataclass(frozen=True)
class TabulatedWeightLaw:
    """User-supplied weight law: a table of even moments plus a sampler.

    ``table`` maps even orders ``r >= 2`` to moments; odd moments are zero by
    symmetry and ``table[2]`` must equal ``2 / fan_in``.  ``sampler`` maps two
    uniform arrays on (0, 1] to draws.  Orders missing from the table raise
    ``KeyError`` when requested.
    """

    fan_in: int
    table: Mapping[int, Number]
    sampler: Callable[[np.ndarray, np.ndarray], np.ndarray] = field(compare=False)
    name: str = "tabulated"

    def __post_init__(self):
        clean = {}
        for r, v in dict(self.table).items():
            r = int(r)
            if r % 2 or r < 2:
                raise ValueError(f"moment table keys must be even orders >= 2, got {r}")
            clean[r] = v if isinstance(v, float) else Fraction(v)
        if 2 not in clean:
            raise ValueError("moment table must contain the second moment")
        if not math.isclose(float(clean[2]), 2.0 / self.fan_in, rel_tol=1e-12):
            raise ValueError(f"second moment must be 2/fan_in = {2 / self.fan_in}")
        object.__setattr__(self, "table", tuple(sorted(clean.items())))

    def __hash__(self):
        return hash((self.fan_in, self.table, self.name))

    @property
    def conforming(self) -> bool:
        return True

    @property
    def variance(self) -> Number:
        return dict(self.table)[2]

    @property
    def exact(self) -> bool:
        return all(isinstance(v, Fraction) for _, v in self.table)

    def moment(self, r: int) -> Number:
        return moment(self, r)

    def transform(self, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
        return np.asarray(self.sampler(u1, u2), dtype=float)

    def to_json(self) -> dict:
        return {"kind": self.name, "table": {str(r): str(v) for r, v in self.table}}


AnyWeightLaw = Union[WeightLaw, TabulatedWeightLaw]


@dataclass(frozen=True)
class BiasLaw:
    """Symmetric bias law.  ``scale`` is the std (Gaussian) or half-width (Uniform).

    The zero bias is an atom; it is rejected unless ``allow_atoms=True``
    is passed, marking the resulting spec as non-conforming.
    """

    kind: BiasKind = BiasKind.GAUSSIAN
    scale: float = 0.1
    allow_atoms: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", BiasKind(self.kind))
        if self.scale < 0 or not math.isfinite(self.scale):
            raise ValueError("bias scale must be a finite nonnegative number")
        if self.kind is BiasKind.ZERO:
            object.__setattr__(self, "scale", 0.0)
            if not self.allow_atoms:
                raise ValueError(
                    "zero bias has an atom at 0; pass allow_atoms=True to use it anyway"
                )
        elif self.scale == 0:
            raise ValueError(f"{self.kind.value} bias needs scale > 0 (use kind='zero')")

    @property
    def conforming(self) -> bool:
        return self.kind is not BiasKind.ZERO

    def transform(self, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
        if self.kind is BiasKind.ZERO:
            return np.zeros(np.shape(u1))
        if self.kind is BiasKind.GAUSSIAN:
            return self.scale * np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        return self.scale * (2.0 * u1 - 1.0)

    def to_json(self) -> dict:
        out = {"kind": self.kind.value}
        if self.kind is not BiasKind.ZERO:
            out["scale"] = self.scale
        return out


@lru_cache(maxsize=None)
def _moment_cached(law, r: int) -> Number:
    if r < 0:
        raise ValueError("moment order must be nonnegative")
    if r == 0:
        return Fraction(1)
    if r % 2:
        return Fraction(0)
    if isinstance(law, TabulatedWeightLaw):
        return dict(law.table)[r]
    k = r // 2
    var = law.variance
    if law.kind is WeightKind.GAUSSIAN:
        return _double_factorial(r) * var**k
    if law.kind is WeightKind.SIGNED_BERNOULLI:
        return var**k
    # uniform on [-a, a] with a^2 = 3 * var
    return (3 * var) ** k / (r + 1)


def moment(law: AnyWeightLaw, r: int) -> Number:
    """Exact ``r``-th moment of a weight law (0 for odd ``r``)."""
    return _moment_cached(law, int(r))


def normalized_moment(law: AnyWeightLaw, K: int) -> Number:
    """``mu_{2K} / mu_2**K``; does not depend on ``fan_in`` for built-in kinds."""
    if K < 1:
        raise ValueError("K must be >= 1")
    return moment(law, 2 * K) / moment(law, 2) ** K


def _uniforms(stream: np.random.Generator, size):
    # (0, 1] keeps log(u) finite in the Gaussian transform
    u1 = 1.0 - stream.random(size)
    u2 = stream.random(size)
    return u1, u2


def sample(law, stream: np.random.Generator, size=None):
    """Draw from a weight or bias law using an explicit generator."""
    u1, u2 = _uniforms(stream, size)
    out = law.transform(np.asarray(u1), np.asarray(u2))
    return float(out) if size is None else out


@dataclass(frozen=True)
class DistributionSpec:
    """One ``(WeightLaw, BiasLaw)`` pair per layer ``j = 1..d``."""

    per_layer: tuple

    def __post_init__(self):
        layers = tuple((w, b) for w, b in self.per_layer)
        if not layers:
            raise ValueError("a distribution spec needs at least one layer")
        object.__setattr__(self, "per_layer", layers)

    @classmethod
    def homogeneous(
        cls,
        widths: Sequence[int],
        weights: Union[str, WeightKind] = WeightKind.GAUSSIAN,
        bias: BiasLaw | None = None,
        variance_scale: Fraction = Fraction(1),
    ) -> "DistributionSpec":
        widths = list(getattr(widths, "widths", widths))
        bias = BiasLaw() if bias is None else bias
        return cls(
            tuple(
                (WeightLaw(weights, widths[j - 1], variance_scale), bias)
                for j in range(1, len(widths))
            )
        )

    @property
    def depth(self) -> int:
        return len(self.per_layer)

    @property
    def weights(self) -> tuple:
        return tuple(w for w, _ in self.per_layer)

    @property
    def biases(self) -> tuple:
        return tuple(b for _, b in self.per_layer)

    @property
    def conforming(self) -> bool:
        return all(w.conforming and b.conforming for w, b in self.per_layer)

    @property
    def exact(self) -> bool:
        return all(w.exact for w in self.weights)

    def check(self, widths: Iterable[int]) -> None:
        """Raise ``ValueError`` unless this spec fits the architecture."""
        widths = list(getattr(widths, "widths", widths))
        if len(widths) - 1 != self.depth:
            raise ValueError(
                f"spec has {self.depth} layers but architecture has depth {len(widths) - 1}"
            )
        for j, w in enumerate(self.weights, start=1):
            if w.fan_in != widths[j - 1]:
                raise ValueError(
                    f"layer {j}: weight fan_in {w.fan_in} != preceding width {widths[j - 1]}"
                )

    def tail(self, start: int) -> "DistributionSpec":
        """Spec for the sub-network made of layers ``start+1..d``."""
        return DistributionSpec(self.per_layer[start:])

    def warn_if_nonconforming(self) -> None:
        if any(not b.conforming for b in self.biases):
            warnings.warn(
                "zero bias is an atom: exact moment formulas assume atomless biases "
                "and hold only approximately (depth must be small against the total width)",
                NonConformingLawWarning,
                stacklevel=2,
            )

    def to_json(self) -> dict:
        return {
            "layers": [{"weights": w.to_json(), "bias": b.to_json()} for w, b in self.per_layer]
        }


def weight_law_from_json(obj: Mapping, fan_in: int) -> WeightLaw:
    return WeightLaw(obj["kind"], fan_in, Fraction(obj.get("variance_scale", 1)))


def bias_law_from_json(obj: Mapping, allow_atoms: bool = False) -> BiasLaw:
    kind = BiasKind(obj["kind"])
    if kind is BiasKind.ZERO:
        return BiasLaw(kind, 0.0, allow_atoms=allow_atoms)
    return BiasLaw(kind, float(obj.get("scale", 0.1)))


def spec_from_json(obj: Mapping, widths: Sequence[int], allow_atoms: bool = False) -> DistributionSpec:
    """Build a spec from JSON.

    Accepts either ``{"layers": [{"weights": ..., "bias": ...}, ...]}`` or a
    single ``{"weights": ..., "bias": ...}`` applied to every layer.  Fan-in
    always comes from ``widths``.
    """
    widths = list(getattr(widths, "widths", widths))
    d = len(widths) - 1
    if "layers" in obj:
        layers = list(obj["layers"])
        if len(layers) != d:
            raise ValueError(f"spec lists {len(layers)} layers, architecture has {d}")
    else:
        layers = [obj] * d
    per_layer = []
    for j, layer in enumerate(layers, start=1):
        w = weight_law_from_json(layer.get("weights", {"kind": "gaussian"}), widths[j - 1])
        b = bias_law_from_json(layer.get("bias", {"kind": "gaussian", "scale": 0.1}), allow_atoms)
        per_layer.append((w, b))
    return DistributionSpec(tuple(per_layer))
