"""Random fully connected ReLU networks and their input-output Jacobians."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rng
from .distributions import DistributionSpec


class ZeroPreactivation(ArithmeticError):
    """Some pre-activation is exactly 0, so the input sits on a ReLU kink."""

    def __init__(self, layer: int, neurons):
        self.layer = layer
        self.neurons = list(neurons)
        super().__init__(f"exact zero pre-activation at layer {layer}, neurons {self.neurons}")


class GuardExceeded(RuntimeError):
    """An enumeration would exceed its configured cost guard."""

    def __init__(self, what: str, cost: int, guard: int):
        self.what = what
        self.cost = cost
        self.guard = guard
        super().__init__(f"{what}: estimated cost {cost} exceeds guard {guard}")


@dataclass(frozen=True)
class Architecture:
    """Layer widths ``(n_0, ..., n_d)``; ``n_0`` is the input dimension."""

    widths: tuple

    def __post_init__(self):
        widths = tuple(int(n) for n in self.widths)
        if len(widths) < 2:
            raise ValueError("an architecture needs at least an input and an output width")
        bad = [n for n in widths if n < 1]
        if bad:
            raise ValueError(f"all widths must be >= 1, got {list(widths)}")
        object.__setattr__(self, "widths", widths)

    def __iter__(self):
        return iter(self.widths)

    def __len__(self):
        return len(self.widths)

    def __getitem__(self, j):
        return self.widths[j]

    @property
    def depth(self) -> int:
        return len(self.widths) - 1

    @property
    def hidden(self) -> tuple:
        return self.widths[1:-1]

    @property
    def n_in(self) -> int:
        return self.widths[0]

    @property
    def n_out(self) -> int:
        return self.widths[-1]

    @property
    def n_parameters(self) -> int:
        return sum(n * (m + 1) for m, n in zip(self.widths, self.widths[1:]))

    def to_json(self) -> dict:
        return {"widths": list(self.widths)}

    @classmethod
    def from_json(cls, obj) -> "Architecture":
        return cls(tuple(obj["widths"]))

    @classmethod
    def parse(cls, text: str) -> "Architecture":
        try:
            widths = tuple(int(t) for t in text.split(","))
        except ValueError as exc:
            raise ValueError(f"cannot parse widths {text!r}") from exc
        return cls(widths)


def as_architecture(arch) -> Architecture:
    return arch if isinstance(arch, Architecture) else Architecture(tuple(arch))


@dataclass(frozen=True, eq=False)
class SampledNet:
    """One realization; ``weights[j-1]`` has shape ``(n_{j-1}, n_j)``."""

    arch: Architecture
    weights: tuple
    biases: tuple

    def __post_init__(self):
        for j, (w, b) in enumerate(zip(self.weights, self.biases), start=1):
            if w.shape != (self.arch[j - 1], self.arch[j]) or b.shape != (self.arch[j],):
                raise ValueError(f"layer {j} parameter shapes do not match {self.arch.widths}")
            w.setflags(write=False)
            b.setflags(write=False)

    def to_json(self) -> dict:
        return {
            "widths": list(self.arch.widths),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    def dump_binary(self) -> bytes:
        """Little-endian float64 dump: all weights (row-major) then biases, per layer."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
            parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
        return b"".join(parts)


@dataclass(frozen=True, eq=False)
class ForwardTrace:
    """``pre[j]`` is act^(j) and ``post[j]`` is Act^(j); index 0 holds the input."""

    pre: tuple
    post: tuple


def _layout(arch: Architecture):
    """Entry offsets of each layer's weight block and bias block."""
    offsets = []
    pos = 0
    for m, n in zip(arch.widths, arch.widths[1:]):
        offsets.append((pos, pos + m * n))
        pos += m * n + n
    return offsets, pos


def sample_batch(arch, spec: DistributionSpec, seed: int, start: int, count: int):
    """Parameters of realizations ``start .. start+count-1`` as stacked arrays.

    Returns ``(weights, biases)`` with ``weights[j-1]`` of shape
    ``(count, n_{j-1}, n_j)`` and ``biases[j-1]`` of shape ``(count, n_j)``.
    """
    arch = as_architecture(arch)
    spec.check(arch)
    offsets, n_entries = _layout(arch)
    words = rng.raw_words(seed, start, count, n_entries)
    u = rng.to_unit(words)
    weights, biases = [], []
    for j, ((wo, bo), (wlaw, blaw)) in enumerate(zip(offsets, spec.per_layer), start=1):
        m, n = arch[j - 1], arch[j]
        wu = u[:, 2 * wo : 2 * (wo + m * n)]
        w = wlaw.transform(wu[:, 0::2], wu[:, 1::2]).reshape(count, m, n)
        bu = u[:, 2 * bo : 2 * (bo + n)]
        b = np.asarray(blaw.transform(bu[:, 0::2], bu[:, 1::2]), dtype=float).reshape(count, n)
        weights.append(w)
        biases.append(b)
    return weights, biases


def instantiate(arch, spec: DistributionSpec, seed: int, index: int = 0) -> SampledNet:
    """Realization number ``index`` of the stream keyed by ``seed``."""
    arch = as_architecture(arch)
    weights, biases = sample_batch(arch, spec, seed, index, 1)
    return SampledNet(arch, tuple(w[0].copy() for w in weights), tuple(b[0].copy() for b in biases))


def default_input(arch) -> np.ndarray:
    return np.ones(as_architecture(arch).n_in)


def _check_input(net: SampledNet, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (net.arch.n_in,):
        raise ValueError(f"input must have length {net.arch.n_in}, got shape {x.shape}")
    return x


def forward(net: SampledNet, x) -> ForwardTrace:
    x = _check_input(net, x)
    pre, post = [x], [x]
    for w, b in zip(net.weights, net.biases):
        act = b + post[-1] @ w
        pre.append(act)
        post.append(np.maximum(act, 0.0))
    return ForwardTrace(tuple(pre), tuple(post))


def _active_masks(net: SampledNet, x):
    trace = forward(net, x)
    masks = []
    for j in range(1, net.arch.depth + 1):
        act = trace.pre[j]
        zeros = np.flatnonzero(act == 0.0)
        if zeros.size:
            raise ZeroPreactivation(j, zeros + 1)
        masks.append(act > 0.0)
    return masks


def jacobian_backprop(net: SampledNet, x=None) -> np.ndarray:
    """Input-output Jacobian, shape ``(n_d, n_0)``: entry ``[q-1, p-1]`` is Z_{p,q}.

    Reverse accumulation of ``D_d W_d^T ... D_1 W_1^T`` with ``D_j`` the
    0/1 diagonal of active neurons.  ReLU'(0) is never guessed: an exact
    zero pre-activation raises :class:`ZeroPreactivation`.
    """
    x = default_input(net.arch) if x is None else x
    masks = _active_masks(net, x)
    g = np.diag(masks[-1].astype(float))
    for j in range(net.arch.depth, 0, -1):
        g = g @ net.weights[j - 1].T
        if j > 1:
            g = g * masks[j - 2]
    return g


def jacobian_pathsum(net: SampledNet, x=None, guard: int = 10**7) -> np.ndarray:
    """Same Jacobian by brute-force summation over every input-output path."""
    x = default_input(net.arch) if x is None else x
    widths = net.arch.widths
    n_paths = math.prod(widths)
    if n_paths > guard:
        raise GuardExceeded("path enumeration", n_paths, guard)
    masks = _active_masks(net, x)
    d = net.arch.depth
    out = np.zeros((widths[-1], widths[0]))
    hidden = [range(n) for n in widths[1:-1]]
    for p in range(widths[0]):
        for q in range(widths[-1]):
            terms = []
            for mid in itertools.product(*hidden):
                path = (p, *mid, q)
                if not all(masks[j - 1][path[j]] for j in range(1, d + 1)):
                    continue
                terms.append(math.prod(net.weights[j - 1][path[j - 1], path[j]] for j in range(1, d + 1)))
            out[q, p] = math.fsum(terms)
    return out


def jacobian_finite_difference(net: SampledNet, x=None, step: float = 1e-6) -> np.ndarray:
    """Central finite differences of the output; only meaningful away from kinks."""
    x = default_input(net.arch) if x is None else _check_input(net, x)
    out = np.empty((net.arch.n_out, net.arch.n_in))
    for p in range(net.arch.n_in):
        e = np.zeros_like(x)
        e[p] = step
        hi = forward(net, x + e).post[-1]
        lo = forward(net, x - e).post[-1]
        out[:, p] = (hi - lo) / (2 * step)
    return out


def kink_distance(net: SampledNet, x) -> float:
    """Smallest |pre-activation| over all hidden and output neurons."""
    trace = forward(net, x)
    return float(min(np.min(np.abs(a)) for a in trace.pre[1:]))


def batch_jacobians(weights: Sequence[np.ndarray], biases: Sequence[np.ndarray], x):
    """Jacobians of a stack of realizations at one input.

    Returns ``(J, n_zero)`` where ``J`` has shape ``(B, n_0, n_d)`` indexed
    ``[b, p, q]`` and ``n_zero`` counts realizations with an exact zero
    pre-activation (those use the strict ``act > 0`` convention).
    """
    x = np.asarray(x, dtype=float)
    count = weights[0].shape[0]
    h = np.broadcast_to(x, (count, x.size))
    jac = np.broadcast_to(np.eye(x.size), (count, x.size, x.size))
    on_kink = np.zeros(count, dtype=bool)
    for w, b in zip(weights, biases):
        act = b + np.einsum("ba,bac->bc", h, w)
        on_kink |= np.any(act == 0.0, axis=1)
        active = act > 0.0
        h = np.where(active, act, 0.0)
        jac = np.einsum("bpa,bac->bpc", jac, w) * active[:, None, :]
    return jac, int(on_kink.sum())


def net_to_json_text(net: SampledNet) -> str:
    return json.dumps(net.to_json(), indent=2)
