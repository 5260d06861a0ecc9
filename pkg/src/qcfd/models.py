"""Desk-scale dense networks: tri-headed generator, joint critic, reference encoder."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import ShapeError
from .latent import InterferenceOperator, LatentState

ACTIVATIONS = ("tanh", "identity")


class DenseNet:
    """Stack of affine layers, each followed by tanh or identity."""

    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray], activations: Sequence[str]):
        if not (len(weights) == len(biases) == len(activations)):
            raise ShapeError("layer lists differ in length")
        for w, b, act in zip(weights, biases, activations):
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeError(f"bad layer shapes {w.shape}, {b.shape}")
        for w_prev, w_next in zip(weights, weights[1:]):
            if w_prev.shape[1] != w_next.shape[0]:
                raise ShapeError(f"layers do not compose: {w_prev.shape} -> {w_next.shape}")
        self.weights = [Tensor(np.array(w, dtype=float), requires_grad=True) for w in weights]
        self.biases = [Tensor(np.array(b, dtype=float), requires_grad=True) for b in biases]
        self.activations = list(activations)

    @classmethod
    def init(cls, sizes: Sequence[int], activations: Sequence[str], rng: np.random.Generator | None = None) -> "DenseNet":
        """Uniform(+-1/sqrt(fan_in)) weights and biases; all zeros when ``rng`` is None."""
        ws, bs = [], []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            if rng is None:
                ws.append(np.zeros((fan_in, fan_out)))
                bs.append(np.zeros(fan_out))
            else:
                bound = 1.0 / np.sqrt(fan_in)
                ws.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
                bs.append(rng.uniform(-bound, bound, fan_out))
        return cls(ws, bs, activations)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def __call__(self, x) -> Tensor:
        x = ag.as_tensor(x)
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"expected input width {self.in_dim}, got {x.shape[-1]}")
        for w, b, act in zip(self.weights, self.biases, self.activations):
            x = x @ w + b
            if act == "tanh":
                x = x.tanh()
        return x

    def params(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


def mix_tensors(h: Sequence[Tensor], coupling) -> list[Tensor]:
    """h_i + sum_{j != i} c_ij h_j with ``coupling`` a 3x3 real array or Tensor."""
    out = []
    for i in range(3):
        acc = h[i]
        for j in range(3):
            if j == i:
                continue
            c = coupling[i, j] if isinstance(coupling, Tensor) else float(coupling[i, j])
            if not isinstance(c, Tensor) and c == 0.0:
                continue
            acc = acc + c * h[j]
        out.append(acc)
    return out


class OperatorParams:
    """Interference operator parametrized by its three upper couplings.

    Couplings are ordered (T,F), (F,S), (S,T); the remaining entries follow by
    conjugate symmetry.
    """

    PAIRS = ((0, 1), (1, 2), (2, 0))

    def __init__(self, op: InterferenceOperator, learnable: bool = False):
        op.check()
        upper = np.array([op.w[i, j] for i, j in self.PAIRS])
        self.re = Tensor(upper.real.copy(), requires_grad=learnable)
        self.im = Tensor(upper.imag.copy(), requires_grad=learnable)
        self.learnable = learnable

    def operator(self) -> InterferenceOperator:
        w = self.re.data + 1j * self.im.data
        return InterferenceOperator.from_couplings(*w)

    def real_coupling(self):
        """3x3 real part, as a Tensor when learnable so gradients reach the couplings."""
        if not self.learnable:
            return self.operator().w.real
        rows = []
        idx = {(0, 1): 0, (1, 0): 0, (1, 2): 1, (2, 1): 1, (2, 0): 2, (0, 2): 2}
        zero = Tensor(np.zeros(1))
        for i in range(3):
            row = [zero if i == j else self.re[idx[(i, j)]:idx[(i, j)] + 1] for j in range(3)]
            rows.append(ag.concat(row, axis=0).reshape(1, 3))
        return ag.concat(rows, axis=0)

    def params(self) -> list[Tensor]:
        return [self.re, self.im] if self.learnable else []


@dataclass(frozen=True)
class GeneratorShape:
    latent_dim: int = 24
    hidden: int = 32
    t_len: int = 256
    f_len: int = 32
    s_shape: tuple[int, int] = (16, 64)

    @property
    def s_len(self) -> int:
        return self.s_shape[0] * self.s_shape[1]


class GeneratorModel:
    """Shared latent core, cross-branch mixing, three decoding heads."""

    def __init__(self, shape: GeneratorShape, core: DenseNet, heads: Sequence[DenseNet], op: OperatorParams):
        self.shape = shape
        h = shape.hidden
        if core.in_dim != 2 * shape.latent_dim or core.out_dim != 3 * h:
            raise ShapeError("core must map 2*latent_dim -> 3*hidden")
        outs = (shape.t_len, shape.f_len, shape.s_len)
        for head, out in zip(heads, outs):
            if head.in_dim != h or head.out_dim != out:
                raise ShapeError(f"head must map {h} -> {out}, got {head.in_dim} -> {head.out_dim}")
        self.core = core
        self.heads = list(heads)
        self.op = op

    @classmethod
    def init(cls, shape: GeneratorShape, op: InterferenceOperator, rng: np.random.Generator | None,
             learnable_operator: bool = False) -> "GeneratorModel":
        h = shape.hidden
        core = DenseNet.init([2 * shape.latent_dim, 3 * h], ["tanh"], rng)
        heads = [DenseNet.init([h, h, out], ["tanh", "identity"], rng)
                 for out in (shape.t_len, shape.f_len, shape.s_len)]
        return cls(shape, core, heads, OperatorParams(op, learnable_operator))

    def branches(self, z: np.ndarray) -> list[Tensor]:
        z = np.atleast_2d(np.asarray(z, dtype=complex))
        if z.shape[-1] != self.shape.latent_dim:
            raise ShapeError(f"latent width {z.shape[-1]} != {self.shape.latent_dim}")
        x = Tensor(np.concatenate([z.real, z.imag], axis=1))
        h = self.core(x)
        k = self.shape.hidden
        return [h[:, i * k:(i + 1) * k] for i in range(3)]

    def __call__(self, z: np.ndarray, mix: bool = True) -> tuple[Tensor, Tensor, Tensor]:
        h = self.branches(z)
        if mix:
            h = mix_tensors(h, self.op.real_coupling())
        return tuple(head(hi) for head, hi in zip(self.heads, h))

    def params(self) -> list[Tensor]:
        out = self.core.params()
        for head in self.heads:
            out += head.params()
        return out + self.op.params()


def generator_forward(model: GeneratorModel, state: LatentState | np.ndarray):
    """(T, F, S) numpy outputs for one state; S reshaped to its grid."""
    z = state.z if isinstance(state, LatentState) else state
    with ag.no_grad():
        t, f, s = model(np.atleast_2d(z))
    return t.data[0], f.data[0], s.data[0].reshape(model.shape.s_shape)


class CriticModel:
    def __init__(self, net: DenseNet):
        if net.out_dim != 1:
            raise ShapeError("critic must output a scalar")
        if net.activations[-1] != "identity":
            raise ShapeError("critic output layer must be identity")
        self.net = net

    @classmethod
    def init(cls, in_dim: int, hidden: Sequence[int] = (64,), rng: np.random.Generator | None = None) -> "CriticModel":
        sizes = [in_dim, *hidden, 1]
        return cls(DenseNet.init(sizes, ["tanh"] * len(hidden) + ["identity"], rng))

    @property
    def in_dim(self) -> int:
        return self.net.in_dim

    def __call__(self, x) -> Tensor:
        return self.net(x)

    def params(self) -> list[Tensor]:
        return self.net.params()


def critic_forward(model: CriticModel, sample) -> float:
    """Score of a single tri-modal sample (anything with ``t``, ``f``, ``s``)."""
    x = np.concatenate([np.ravel(sample.t), np.ravel(sample.f), np.ravel(sample.s)])
    if x.size != model.in_dim:
        raise ShapeError(f"sample has {x.size} features, critic expects {model.in_dim}")
    with ag.no_grad():
        return float(model(x[None, :]).data[0, 0])


class ReferenceModels:
    """Frozen per-modality encoders plus a softmax classifier on their concatenation."""

    def __init__(self, encoders: Sequence[DenseNet], classifier: DenseNet, seed: int = 0):
        self.encoders = list(encoders)
        self.classifier = classifier
        self.seed = seed

    @classmethod
    def init(cls, dims: Sequence[int], embed: int = 8, n_classes: int = 2, rng=None, seed: int = 0):
        encoders = [DenseNet.init([d, embed], ["tanh"], rng) for d in dims]
        classifier = DenseNet.init([embed * len(dims), n_classes], ["identity"], rng)
        return cls(encoders, classifier, seed)

    @property
    def embed_dim(self) -> int:
        return sum(e.out_dim for e in self.encoders)

    def modality_embeddings(self, t, f, s) -> list[Tensor]:
        parts = []
        for enc, x in zip(self.encoders, (t, f, s)):
            x = ag.as_tensor(x)
            if x.ndim > 2:
                x = x.reshape(x.shape[0], -1)
            parts.append(enc(x))
        return parts

    def logits(self, t, f, s) -> Tensor:
        return self.classifier(ag.concat(self.modality_embeddings(t, f, s), axis=1))

    def embed(self, data) -> np.ndarray:
        with ag.no_grad():
            return ag.concat(self.modality_embeddings(data.t, data.f, data.s), axis=1).data

    def predict_proba(self, data) -> np.ndarray:
        with ag.no_grad():
            z = self.logits(data.t, data.f, data.s).data
        z = z - z.max(axis=1, keepdims=True)
        p = np.exp(z)
        return p / p.sum(axis=1, keepdims=True)

    def freeze(self) -> "ReferenceModels":
        for p in self.params():
            p.requires_grad = False
        return self

    def params(self) -> list[Tensor]:
        out = []
        for e in self.encoders:
            out += e.params()
        return out + self.classifier.params()
