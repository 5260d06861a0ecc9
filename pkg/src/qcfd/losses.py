"""Differentiable loss terms for generator and critic updates.

Everything here returns a scalar ``Tensor``; call ``float()`` for a value.
"""
from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import DegenerateMorphologyError, NumericHealthError
from .latent import ProjectionEncoder
from .models import CriticModel, OperatorParams


def flat_features(t, f, s) -> Tensor:
    """Critic input from (T, F, S) tensors or arrays: T, F, S flattened."""
    t, f, s = (ag.as_tensor(x) for x in (t, f, s))
    n = t.shape[0]
    return ag.concat([t.reshape(n, -1), f.reshape(n, -1), s.reshape(n, -1)], axis=1)


def input_gradient_norms(critic: CriticModel, x: np.ndarray, create_graph: bool = True) -> Tensor:
    xt = Tensor(x, requires_grad=True)
    with ag.enable_grad():
        out = critic(xt)
    (g,) = ag.grad(out.sum(), [xt], create_graph=create_graph)
    # tiny floor keeps sqrt differentiable at a zero gradient
    return ((g * g).sum(axis=1) + 1e-30).sqrt()


def gradient_penalty_batch(critic: CriticModel, real: np.ndarray, fake: np.ndarray, u: np.ndarray) -> Tensor:
    """mean_b (||grad_x D(x_b)|| - 1)^2 at x_b = u_b real_b + (1 - u_b) fake_b."""
    u = np.asarray(u, dtype=float).reshape(-1, 1)
    x_hat = u * real + (1.0 - u) * fake
    norms = input_gradient_norms(critic, x_hat)
    return ((norms - 1.0) ** 2).mean()


def gradient_penalty(critic: CriticModel, real, fake, mix_seed: int) -> float:
    """Penalty for a single (real, fake) pair with u ~ U(0, 1) drawn from ``mix_seed``."""
    real = np.concatenate([np.ravel(real.t), np.ravel(real.f), np.ravel(real.s)])
    fake = np.concatenate([np.ravel(fake.t), np.ravel(fake.f), np.ravel(fake.s)])
    u = float(np.random.default_rng(mix_seed).uniform())
    x_hat = (u * real + (1 - u) * fake)[None, :]
    norms = input_gradient_norms(critic, x_hat, create_graph=False)
    return float((norms.data[0] - 1.0) ** 2)


def critic_loss(critic: CriticModel, real: np.ndarray, fake: np.ndarray, u: np.ndarray, gp_weight: float = 10.0):
    """WGAN-GP critic objective; returns (total, wasserstein term, penalty)."""
    w = critic(fake).mean() - critic(real).mean()
    gp = gradient_penalty_batch(critic, real, fake, u)
    return w + gp_weight * gp, w, gp


def adversarial_loss(critic: CriticModel, fake: Tensor) -> Tensor:
    return -critic(fake).mean()


def phys_loss(t_hat, template, qrs_window: tuple[int, int], st_window: tuple[int, int]) -> Tensor:
    """Mean-squared error over the QRS window plus over the ST window.

    ``t_hat`` is a batch ``(B, N)`` (or one signal); ``template`` the class mean.
    """
    for lo, hi in (qrs_window, st_window):
        if hi <= lo:
            raise DegenerateMorphologyError(f"empty window ({lo}, {hi})")
    t_hat = ag.as_tensor(t_hat)
    if t_hat.ndim == 1:
        t_hat = t_hat.reshape(1, -1)
    template = np.asarray(template, dtype=float)
    total = None
    for lo, hi in (qrs_window, st_window):
        diff = t_hat[:, lo:hi] - template[lo:hi]
        term = (diff * diff).mean()
        total = term if total is None else total + term
    return total


def encode_amplitudes(encoder: ProjectionEncoder, t, f, s) -> tuple[Tensor, Tensor]:
    """Real and imaginary parts of the modality amplitudes of encoded data, each (B, 3).

    Amplitude X = block norm times the phase of the block sum; no global
    normalization is applied since energies divide by sum |alpha|^2.
    """
    re_parts, im_parts = [], []
    for x, pr, pi in zip((t, f, s), encoder.real, encoder.imag):
        x = ag.as_tensor(x)
        x = x.reshape(x.shape[0], -1)
        zr, zi = x @ pr, x @ pi
        r = ((zr * zr + zi * zi).sum(axis=1) + 1e-24).sqrt()
        sr, si = zr.sum(axis=1), zi.sum(axis=1)
        mag = (sr * sr + si * si + 1e-24).sqrt()
        re_parts.append((r * sr / mag).reshape(-1, 1))
        im_parts.append((r * si / mag).reshape(-1, 1))
    return ag.concat(re_parts, axis=1), ag.concat(im_parts, axis=1)


def energies(a: Tensor, b: Tensor, op: OperatorParams) -> Tensor:
    """Per-sample <psi|H|psi> / <psi|psi> from amplitude parts a + ib, shape (B,).

    Uses 2 Re(conj(alpha_i) w_ij alpha_j) summed over the three upper couplings.
    """
    total = None
    for k, (i, j) in enumerate(OperatorParams.PAIRS):
        p, q = op.re[k], op.im[k]
        ai, aj, bi, bj = a[:, i], a[:, j], b[:, i], b[:, j]
        term = 2.0 * (p * (ai * aj + bi * bj) - q * (ai * bj - bi * aj))
        total = term if total is None else total + term
    norm = (a * a + b * b).sum(axis=1) + 1e-24
    return total / norm


def interference_term(real_energy_mean: float | Tensor, gen_energies: Tensor) -> Tensor:
    return (gen_energies.mean() - real_energy_mean).abs()


def orthogonality_penalty(features: Sequence[Tensor], eps: float = 1e-12) -> Tensor:
    """Differentiable twin of ``info.orthogonality_penalty``."""
    normed = []
    for x in features:
        x = ag.as_tensor(x)
        x = x - x.mean(axis=0, keepdims=True)
        normed.append(x / ((x * x).sum(axis=1, keepdims=True) + eps).sqrt())
    total = None
    for i, a in enumerate(normed):
        for j, b in enumerate(normed):
            if i == j:
                continue
            c = (a * b).sum(axis=1).mean()
            total = c * c if total is None else total + c * c
    return total


def total_generator_loss(parts: Mapping[str, float | Tensor], lambdas: Sequence[float]):
    """L_GAN + l1 L_CFD + l2 L_interf + l3 L_phys.

    ``parts`` keys: ``gan``, ``cfd``, ``interf``, ``phys``.
    """
    values = [parts["gan"], parts["cfd"], parts["interf"], parts["phys"]]
    for name, v in zip(("gan", "cfd", "interf", "phys"), values):
        if not math.isfinite(float(v)):
            raise NumericHealthError(f"loss term {name} is not finite: {float(v)}")
    l1, l2, l3 = lambdas
    return values[0] + l1 * values[1] + l2 * values[2] + l3 * values[3]
