import numpy as np
import pytest

from qcfd import autograd as ag
from qcfd import losses
from qcfd.autograd import Tensor
from qcfd.beats import Label
from qcfd.dsp import TriModalSample
from qcfd.errors import DegenerateMorphologyError, NumericHealthError, ShapeError
from qcfd.latent import InterferenceOperator, cross_branch_mix, sample_latent
from qcfd.models import CriticModel, DenseNet, GeneratorModel, GeneratorShape, critic_forward, generator_forward
from qcfd.optim import grad_check

from tiny import IN_DIM, SHAPE, loss_closures, tiny_setup


def desk_generator(rng=None, op=None):
    return GeneratorModel.init(GeneratorShape(), op or InterferenceOperator.from_couplings(), rng)


def test_zero_generator_outputs_zero():
    t, f, s = generator_forward(desk_generator(None), sample_latent(24, 0))
    assert t.shape == (256,) and f.shape == (32,) and s.shape == (16, 64)
    assert not t.any() and not f.any() and not s.any()


def test_zero_operator_equals_unmixed(rng):
    g = desk_generator(rng, InterferenceOperator.zeros())
    z = sample_latent(24, 3).z[None, :]
    with ag.no_grad():
        mixed, plain = g(z, mix=True), g(z, mix=False)
    assert all(np.array_equal(a.data, b.data) for a, b in zip(mixed, plain))


def test_generator_mixing_matches_latent_module(rng):
    op = InterferenceOperator.from_couplings(0.3, -0.2 + 0.4j, 0.1j)
    g = desk_generator(rng, op)
    z = sample_latent(24, 5).z[None, :]
    with ag.no_grad():
        h = [b.data[0] for b in g.branches(z)]
        expected = [head(Tensor(x[None, :])).data[0] for head, x in zip(g.heads, cross_branch_mix(*h, op))]
        got = [x.data[0] for x in g(z)]
    assert all(np.allclose(a, b, atol=1e-12) for a, b in zip(got, expected))


def test_generator_deterministic():
    state = sample_latent(24, 1)
    a = generator_forward(desk_generator(np.random.default_rng(0)), state)
    b = generator_forward(desk_generator(np.random.default_rng(0)), state)
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a, b))


def test_dense_net_shape_checks():
    with pytest.raises(ShapeError):
        DenseNet([np.zeros((2, 3)), np.zeros((4, 1))], [np.zeros(3), np.zeros(1)], ["tanh", "identity"])
    net = DenseNet.init([3, 2], ["identity"], np.random.default_rng(0))
    with pytest.raises(ShapeError):
        net(np.zeros((1, 4)))


def sample_of(x):
    return TriModalSample(x[:12], x[12:17], x[17:].reshape(2, 3), Label.NORMAL)


def test_critic_zero_and_linear(rng):
    x = rng.standard_normal(IN_DIM)
    assert critic_forward(CriticModel.init(IN_DIM, (), None), sample_of(x)) == 0.0
    w, b = rng.standard_normal((IN_DIM, 1)), rng.standard_normal(1)
    critic = CriticModel(DenseNet([w], [b], ["identity"]))
    assert critic_forward(critic, sample_of(x)) == pytest.approx(float(x @ w[:, 0] + b[0]), abs=1e-12)


def test_gradient_penalty_examples(rng):
    real, fake = sample_of(rng.standard_normal(IN_DIM)), sample_of(rng.standard_normal(IN_DIM))
    w = rng.standard_normal((IN_DIM, 1))
    unit = CriticModel(DenseNet([w / np.linalg.norm(w)], [np.zeros(1)], ["identity"]))
    assert losses.gradient_penalty(unit, real, fake, 3) == pytest.approx(0.0, abs=1e-20)
    zero = CriticModel.init(IN_DIM, (), None)
    assert losses.gradient_penalty(zero, real, fake, 3) == pytest.approx(1.0, abs=1e-12)


def test_critic_input_gradient_matches_fd(rng):
    critic = CriticModel.init(IN_DIM, (5,), rng)
    x = rng.standard_normal((1, IN_DIM))
    xt = Tensor(x, requires_grad=True)
    (g,) = ag.grad(critic(xt).sum(), [xt])
    fd = np.zeros(IN_DIM)
    for i in range(IN_DIM):
        up, down = x.copy(), x.copy()
        up[0, i] += 1e-6
        down[0, i] -= 1e-6
        with ag.no_grad():
            fd[i] = (float(critic(up).sum()) - float(critic(down).sum())) / 2e-6
    rel = np.abs(g.data[0] - fd) / np.maximum(np.abs(fd), 1e-6)
    assert rel.max() < 1e-4


def test_phys_loss_examples(rng):
    template = rng.standard_normal(40)
    assert float(losses.phys_loss(template, template, (5, 15), (15, 30))) == 0.0
    assert float(losses.phys_loss(template + 0.3, template, (5, 15), (15, 30))) == pytest.approx(2 * 0.09)
    t_hat = rng.standard_normal((3, 40))
    expected = np.mean((t_hat[:, 5:15] - template[5:15]) ** 2) + np.mean((t_hat[:, 15:30] - template[15:30]) ** 2)
    assert float(losses.phys_loss(t_hat, template, (5, 15), (15, 30))) == pytest.approx(expected, abs=1e-12)
    with pytest.raises(DegenerateMorphologyError):
        losses.phys_loss(t_hat, template, (5, 5), (15, 30))


def test_total_generator_loss_examples():
    parts = dict(gan=0.5, cfd=0.2, interf=0.1, phys=0.3)
    assert losses.total_generator_loss(parts, (1.0, 0.5, 1.0)) == pytest.approx(1.05)
    assert losses.total_generator_loss(parts, (0, 0, 0)) == 0.5
    assert losses.total_generator_loss(dict(gan=0, cfd=0, interf=0, phys=0), (1, 1, 1)) == 0
    with pytest.raises(NumericHealthError):
        losses.total_generator_loss(dict(parts, phys=float("nan")), (1, 1, 1))


def test_total_generator_loss_linear_in_lambdas():
    parts = dict(gan=0.7, cfd=0.3, interf=0.2, phys=0.9)
    lam = (0.4, 0.6, 0.8)
    base = losses.total_generator_loss(parts, (0, 0, 0))
    one = losses.total_generator_loss(parts, lam) - base
    two = losses.total_generator_loss(parts, tuple(2 * v for v in lam)) - base
    assert two == pytest.approx(2 * one, abs=1e-15)


def test_orthogonality_twin_matches_numpy(rng):
    from qcfd.info import orthogonality_penalty
    feats = [rng.standard_normal((10, 4)) for _ in range(3)]
    assert float(losses.orthogonality_penalty(feats)) == pytest.approx(orthogonality_penalty(feats), abs=1e-12)


def test_energies_match_latent_module(rng):
    from qcfd.latent import interference_energy
    op = InterferenceOperator.from_couplings(0.3, 0.2 - 0.1j, 0.25 + 0.05j)
    from qcfd.models import OperatorParams
    alpha = rng.standard_normal((6, 3)) + 1j * rng.standard_normal((6, 3))
    e = losses.energies(Tensor(alpha.real), Tensor(alpha.imag), OperatorParams(op)).data
    assert np.allclose(e, interference_energy(alpha, op), atol=1e-12)


@pytest.mark.parametrize("name", ["gan_critic_gp", "gan_generator", "interf", "phys", "orth"])
def test_loss_terms_pass_grad_check(name):
    loss, params = loss_closures(tiny_setup(0))[name]
    assert grad_check(loss, params, n_entries=40).passed(1e-4)
