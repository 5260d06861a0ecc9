"""Adversarial training of per-class tri-headed generators.

Each epoch alternates critic updates (WGAN-GP) and generator updates on the
composite objective. The binned complementarity gap |C - C_hat| cannot carry
gradients; it is re-estimated once per epoch on a fixed probe batch, logged,
and enters the validation objective that drives early stopping and model
selection. The orthogonality penalty carries the CFD gradient.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from . import losses
from .dsp import TriModalSet
from .errors import NumericHealthError, ParameterError
from .evaluation import train_reference_models
from .info import BinningSpec, CfdStats, cfd_stats
from .latent import InterferenceOperator, ProjectionEncoder, sample_latents
from .models import CriticModel, GeneratorModel, GeneratorShape, ReferenceModels
from .optim import Adam, AdamConfig

log = logging.getLogger(__name__)

LAMBDA_GRID = (0.1, 0.5, 1.0)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 64
    epochs: int = 200
    lambda_cfd: float = 1.0
    lambda_interf: float = 0.5
    lambda_phys: float = 1.0
    lambda_orth: float = 0.1
    gp_weight: float = 10.0
    critic_steps: int = 3
    seed: int = 0
    patience: int = 20
    latent_m: int = 8
    hidden: int = 32
    critic_hidden: tuple[int, ...] = (64,)
    operator: tuple[float, ...] = tuple(InterferenceOperator.from_couplings().to_list())
    learnable_operator: bool = False
    projection_interference: bool = True
    probe_size: int = 256
    n_bins: int = 8
    reference_epochs: int = 150

    def validate(self) -> None:
        positive = ("lr", "batch_size", "critic_steps", "latent_m", "hidden", "probe_size", "n_bins")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ParameterError("Adam betas must lie in (0, 1)")
        for name in ("epochs", "lambda_cfd", "lambda_interf", "lambda_phys", "lambda_orth", "gp_weight", "patience"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0")
        InterferenceOperator.from_list(self.operator)

    @property
    def adam(self) -> AdamConfig:
        return AdamConfig(self.lr, self.beta1, self.beta2)

    @property
    def lambdas(self) -> tuple[float, float, float]:
        return (self.lambda_cfd, self.lambda_interf, self.lambda_phys)

    def interference_operator(self) -> InterferenceOperator:
        return InterferenceOperator.from_list(self.operator)


def ablation(config: TrainConfig, variant: str) -> TrainConfig:
    """A1: no CFD loss, A2: zero interference operator, A3: no morphology loss."""
    if variant == "full":
        return config
    if variant == "A1":
        return dataclasses.replace(config, lambda_cfd=0.0)
    if variant == "A2":
        return dataclasses.replace(config, operator=tuple(InterferenceOperator.zeros().to_list()))
    if variant == "A3":
        return dataclasses.replace(config, lambda_phys=0.0)
    raise ParameterError(f"unknown ablation {variant!r}")


# ----------------------------------------------------------------------------
# splits

@dataclass
class Splits:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def split_indices(labels, seed: int = 0, fractions=(0.70, 0.15, 0.15)) -> Splits:
    """Class-stratified per-sample split, deterministic in ``seed``."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    parts = ([], [], [])
    for label in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == label))
        n = len(idx)
        n_train = int(round(fractions[0] * n))
        n_val = int(round(fractions[1] * n))
        parts[0].append(idx[:n_train])
        parts[1].append(idx[n_train:n_train + n_val])
        parts[2].append(idx[n_train + n_val:])
    train, val, test = (np.sort(np.concatenate(p)) for p in parts)
    if min(len(train), len(val), len(test)) == 0:
        raise ParameterError("a split is empty; dataset too small")
    return Splits(train, val, test)


# ----------------------------------------------------------------------------
# training state

@dataclass
class ClassState:
    label: int
    generator: GeneratorModel
    critic: CriticModel
    g_opt: Adam
    c_opt: Adam
    template: np.ndarray
    windows: tuple[tuple[int, int], tuple[int, int]] | None


@dataclass
class TrainResult:
    generators: dict[int, GeneratorModel]
    critics: dict[int, CriticModel]
    history: list[dict[str, float]]
    config: TrainConfig
    reference: ReferenceModels
    spec: BinningSpec
    real_stats: CfdStats
    best_epoch: int
    windows: dict[int, tuple[tuple[int, int], tuple[int, int]] | None] = field(default_factory=dict)
    splits: Splits | None = None


def class_windows(data: TriModalSet):
    """Median QRS/ST windows of a class, or None when fiducials are absent."""
    if len(data) == 0 or np.any(data.qrs[:, 0] < 0) or np.any(data.st[:, 0] < 0):
        return None
    qrs = tuple(int(v) for v in np.round(np.median(data.qrs, axis=0)))
    st = tuple(int(v) for v in np.round(np.median(data.st, axis=0)))
    if qrs[1] <= qrs[0] or st[1] <= st[0]:
        return None
    return qrs, st


def _snapshot(models) -> list[np.ndarray]:
    return [p.data.copy() for m in models for p in m.params()]


def _restore(models, values) -> None:
    params = [p for m in models for p in m.params()]
    for p, v in zip(params, values):
        p.data = v.copy()


def generate(generators: dict[int, GeneratorModel], n_per_class: int, seed: int,
             windows: dict | None = None, rng: np.random.Generator | None = None) -> TriModalSet:
    """Synthetic tri-modal set, ``n_per_class`` samples per generator, classes in key order."""
    rng = rng or np.random.default_rng(seed)
    parts = []
    for label in sorted(generators):
        g = generators[label]
        z = sample_latents(n_per_class, g.shape.latent_dim, rng)
        with ag.no_grad():
            t, f, s = g(z)
        w = (windows or {}).get(label)
        qrs = np.tile(w[0] if w else (-1, -1), (n_per_class, 1))
        st = np.tile(w[1] if w else (-1, -1), (n_per_class, 1))
        parts.append(TriModalSet(t.data, f.data, s.data.reshape((n_per_class,) + g.shape.s_shape),
                                 np.full(n_per_class, label), qrs, st))
    return TriModalSet.concat(parts)


def _check_finite(name: str, value: float) -> None:
    if not np.isfinite(value):
        raise NumericHealthError(f"{name} became non-finite ({value})")


class Trainer:
    """Holds per-class models and runs the alternating updates."""

    def __init__(self, train: TriModalSet, val: TriModalSet, config: TrainConfig,
                 reference: ReferenceModels | None = None):
        config.validate()
        if len(train) == 0 or len(val) == 0:
            raise ParameterError("empty training or validation split")
        if len(train.classes) < 2:
            raise ParameterError("training data needs two classes")
        self.config = config
        self.train_set, self.val_set = train, val
        seeds = np.random.SeedSequence(config.seed).spawn(5)
        init_rng, self.batch_rng = np.random.default_rng(seeds[0]), np.random.default_rng(seeds[1])
        probe_seed, val_seed = seeds[2], seeds[3]
        self.reference = reference or train_reference_models(
            train, seed=int(seeds[4].generate_state(1)[0]), epochs=config.reference_epochs)
        self.reference.freeze()
        self.spec = BinningSpec.fit(train, config.n_bins)
        self.real_stats = cfd_stats(train, self.spec)
        op = config.interference_operator()
        shape = GeneratorShape(3 * config.latent_m, config.hidden, train.t.shape[1], train.f.shape[1],
                               tuple(train.s.shape[1:]))
        self.shape = shape
        in_dim = shape.t_len + shape.f_len + shape.s_len
        self.encoder = ProjectionEncoder((shape.t_len, shape.f_len, shape.s_len), config.latent_m,
                                         seed=config.seed)
        self.states: list[ClassState] = []
        for label in train.classes:
            data = train.of_class(label)
            g = GeneratorModel.init(shape, op, init_rng, config.learnable_operator)
            c = CriticModel.init(in_dim, config.critic_hidden, init_rng)
            windows = class_windows(data)
            if windows is None and config.lambda_phys > 0:
                log.warning("class %s has no fiducials; morphology loss disabled for it", label)
            self.states.append(ClassState(label, g, c, Adam(g.params(), config.adam), Adam(c.params(), config.adam),
                                          data.t.mean(axis=0), windows))
        per_class = max(config.probe_size // len(self.states), 1)
        probe_rng = np.random.default_rng(probe_seed)
        self.probe_z = {s.label: sample_latents(per_class, shape.latent_dim, probe_rng) for s in self.states}
        val_rng = np.random.default_rng(val_seed)
        self.val_z = {s.label: sample_latents(max(len(val.of_class(s.label)), 2), shape.latent_dim, val_rng)
                      for s in self.states}
        self.last_gap = 0.0

    # -- pieces ---------------------------------------------------------------
    def real_energy_mean(self, state: ClassState, data: TriModalSet) -> ag.Tensor:
        # real amplitudes are constants, but their energies still depend on a learnable operator
        with ag.no_grad():
            a, b = losses.encode_amplitudes(self.encoder, data.t, data.f, data.s)
        return losses.energies(a, b, state.generator.op).mean()

    def generator_terms(self, state: ClassState, z: np.ndarray, real: TriModalSet) -> dict[str, ag.Tensor]:
        cfg = self.config
        t, f, s = state.generator(z)
        fake = losses.flat_features(t, f, s)
        terms = {"gan": losses.adversarial_loss(state.critic, fake)}
        terms["orth"] = losses.orthogonality_penalty(self.reference.modality_embeddings(t, f, s))
        if cfg.projection_interference:
            a, b = losses.encode_amplitudes(self.encoder, t, f, s)
        else:
            zt = ag.Tensor(z.real), ag.Tensor(z.imag)
            a, b = self._latent_amplitudes(*zt)
        gen_e = losses.energies(a, b, state.generator.op)
        terms["interf"] = losses.interference_term(self.real_energy_mean(state, real), gen_e)
        if state.windows is not None:
            terms["phys"] = losses.phys_loss(t, state.template, *state.windows)
        else:
            terms["phys"] = ag.Tensor(0.0)
        terms["cfd"] = terms["orth"] * cfg.lambda_orth + self.last_gap
        return terms

    @staticmethod
    def _latent_amplitudes(zr: ag.Tensor, zi: ag.Tensor):
        m = zr.shape[1] // 3
        a, b = [], []
        for k in range(3):
            br, bi = zr[:, k * m:(k + 1) * m], zi[:, k * m:(k + 1) * m]
            r = ((br * br + bi * bi).sum(axis=1) + 1e-24).sqrt()
            sr, si = br.sum(axis=1), bi.sum(axis=1)
            mag = (sr * sr + si * si + 1e-24).sqrt()
            a.append((r * sr / mag).reshape(-1, 1))
            b.append((r * si / mag).reshape(-1, 1))
        return ag.concat(a, axis=1), ag.concat(b, axis=1)

    def critic_step(self, state: ClassState, real_x: np.ndarray) -> dict[str, float]:
        cfg = self.config
        n = len(real_x)
        z = sample_latents(n, self.shape.latent_dim, self.batch_rng)
        with ag.no_grad():
            fake_x = losses.flat_features(*state.generator(z)).data
        u = self.batch_rng.uniform(size=n)
        total, w, gp = losses.critic_loss(state.critic, real_x, fake_x, u, cfg.gp_weight)
        _check_finite("critic loss", float(total))
        state.c_opt.step(ag.grad(total, state.c_opt.params))
        return {"critic_loss": float(total), "critic_w": float(w), "gp": float(gp)}

    def generator_step(self, state: ClassState, real: TriModalSet) -> dict[str, float]:
        z = sample_latents(len(real), self.shape.latent_dim, self.batch_rng)
        terms = self.generator_terms(state, z, real)
        total = losses.total_generator_loss(terms, self.config.lambdas)
        state.g_opt.step(ag.grad(total, state.g_opt.params))
        out = {f"l_{k}": float(v) for k, v in terms.items()}
        out["l_total"] = float(total)
        return out

    def run_class_epoch(self, state: ClassState) -> list[dict[str, float]]:
        data = self.train_set.of_class(state.label)
        real_flat = data.flat()
        order = self.batch_rng.permutation(len(data))
        records = []
        for start in range(0, len(data), self.config.batch_size):
            idx = order[start:start + self.config.batch_size]
            rec = {}
            for _ in range(self.config.critic_steps):
                rec = self.critic_step(state, real_flat[idx])
            rec.update(self.generator_step(state, data.subset(idx)))
            records.append(rec)
        return records

    # -- monitoring ---------------------------------------------------------
    def probe_stats(self) -> CfdStats:
        gens = {s.label: s.generator for s in self.states}
        parts = []
        for label, g in gens.items():
            with ag.no_grad():
                t, f, s = g(self.probe_z[label])
            n = len(self.probe_z[label])
            parts.append(TriModalSet(t.data, f.data, s.data.reshape((n,) + g.shape.s_shape), np.full(n, label)))
        return cfd_stats(TriModalSet.concat(parts), self.spec)

    def validation(self) -> dict[str, float]:
        cfg = self.config
        sums = {"gan": 0.0, "orth": 0.0, "interf": 0.0, "phys": 0.0}
        for state in self.states:
            real = self.val_set.of_class(state.label)
            with ag.no_grad():
                terms = self.generator_terms(state, self.val_z[state.label], real)
            for k in sums:
                sums[k] += float(terms[k]) / len(self.states)
        # critic scores drift as the critic trains, so L_GAN is logged but not selected on
        composite = (cfg.lambda_cfd * (self.last_gap + cfg.lambda_orth * sums["orth"])
                     + cfg.lambda_interf * sums["interf"] + cfg.lambda_phys * sums["phys"])
        unweighted = self.last_gap + cfg.lambda_orth * sums["orth"] + sums["interf"] + sums["phys"]
        return {"val_composite": composite, "val_unweighted": unweighted,
                **{f"val_{k}": v for k, v in sums.items()}}

    def models(self):
        return [s.generator for s in self.states]

    def fit(self) -> TrainResult:
        cfg = self.config
        history: list[dict[str, float]] = []
        best_value, best_epoch, best_params, stale = np.inf, 0, _snapshot(self.models()), 0
        for epoch in range(1, cfg.epochs + 1):
            records = []
            for state in self.states:
                records += self.run_class_epoch(state)
            probe = self.probe_stats()
            self.last_gap = abs(self.real_stats.c_tfs - probe.c_tfs)
            row = {"epoch": float(epoch)}
            for key in records[0]:
                row[key] = float(np.mean([r[key] for r in records]))
            row["l_cfd"] = self.last_gap + cfg.lambda_orth * row["l_orth"]
            row["cfd_gap"] = self.last_gap
            row["c_ratio_probe"] = probe.c_tfs / self.real_stats.c_tfs if self.real_stats.c_tfs else float("nan")
            row.update(self.validation())
            for key, value in row.items():
                _check_finite(key, value)
            history.append(row)
            log.info("epoch %d composite %.4f gap %.4f", epoch, row["val_composite"], self.last_gap)
            if row["val_composite"] < best_value:
                best_value, best_epoch, best_params, stale = row["val_composite"], epoch, _snapshot(self.models()), 0
            else:
                stale += 1
                if cfg.patience and stale >= cfg.patience:
                    break
        if history:
            _restore(self.models(), best_params)
        return TrainResult(
            generators={s.label: s.generator for s in self.states},
            critics={s.label: s.critic for s in self.states},
            history=history, config=cfg, reference=self.reference, spec=self.spec,
            real_stats=self.real_stats, best_epoch=best_epoch,
            windows={s.label: s.windows for s in self.states},
        )


def fit(train: TriModalSet, val: TriModalSet, config: TrainConfig,
        reference: ReferenceModels | None = None) -> TrainResult:
    return Trainer(train, val, config, reference).fit()


def train(dataset: TriModalSet, config: TrainConfig, reference: ReferenceModels | None = None) -> TrainResult:
    """Split 70/15/15 by class, train on the first part, select on the second."""
    splits = split_indices(dataset.labels, config.seed)
    result = fit(dataset.subset(splits.train), dataset.subset(splits.val), config, reference)
    result.splits = splits
    return result


def grid_search(dataset: TriModalSet, config: TrainConfig, grid=LAMBDA_GRID) -> tuple[TrainResult, list[dict]]:
    """Train every (l1, l2, l3) in ``grid``^3; keep the lowest unweighted validation loss."""
    splits = split_indices(dataset.labels, config.seed)
    train_set, val_set = dataset.subset(splits.train), dataset.subset(splits.val)
    reference = None
    best, table = None, []
    for l1 in grid:
        for l2 in grid:
            for l3 in grid:
                cfg = dataclasses.replace(config, lambda_cfd=l1, lambda_interf=l2, lambda_phys=l3)
                trainer = Trainer(train_set, val_set, cfg, reference)
                reference = trainer.reference
                result = trainer.fit()
                score = result.history[result.best_epoch - 1]["val_unweighted"] if result.history else np.inf
                table.append({"lambda_cfd": l1, "lambda_interf": l2, "lambda_phys": l3, "val_unweighted": score})
                if best is None or score < best[0]:
                    best = (score, result)
    best[1].splits = splits
    return best[1], table
