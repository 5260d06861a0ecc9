"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""
import json
import time

import numpy as np
import pytest

from qcfd import io
from qcfd.beats import make_dataset
from qcfd.cli import run_command
from qcfd.dsp import dft, hann, morlet_scalogram, preprocess, stft_logmag
from qcfd.evaluation import RawMetrics, evaluate, normalized_scores, train_reference_models
from qcfd.experiments import run_experiment
from qcfd.info import mutual_information, redundancy
from qcfd.latent import InterferenceOperator, interference_energy, sample_latent
from qcfd.optim import grad_check

from oracles import plugin_mi
from test_dsp import naive_dft
from tiny import loss_closures, tiny_setup


@pytest.fixture
def report(capsys):
    """Call with (number, ok, detail, seconds, limit); prints the verdict and asserts."""
    def _report(number, ok, detail, seconds, limit=None):
        within = limit is None or seconds < limit
        verdict = "PASS" if ok and within else "FAIL"
        budget = f" (limit {limit:.0f} s)" if limit else ""
        with capsys.disabled():
            print(f"\ncriterion {number}: {verdict} | {detail} | {seconds:.2f} s{budget}")
        assert ok, detail
        assert within, f"runtime {seconds:.2f} s exceeds {limit} s"
    return _report


def test_criterion_1_reference_scores(report, tmp_path, capsys):
    start = time.perf_counter()
    raw = tmp_path / "raw.csv"
    raw.write_text("model,sigma2,delta,c_ratio,e_rms\nreal,0.031,,,\nMI-GAN,0.042,0.214,0.56,11.2\n"
                   "Q-Base,0.039,0.187,0.68,9.6\nQ-CFD-GAN,0.033,0.157,0.91,3.8\n")
    out = tmp_path / "scores.csv"
    rc = run_command(["scores", "--raw", str(raw), "--out", str(out)])
    rows = io.read_csv(out)[1:] if rc == 0 else []
    expect = {"r_sigma": (1.000, 0.727, 0.182), "rho_delta": (0.0, 0.126, 0.266),
              "gamma": (1.000, 1.214, 1.625), "kappa": (1.000, 0.857, 0.339)}
    errors = [abs(float(r[k]) - v) for k, vals in expect.items() for r, v in zip(rows, vals)]
    library = normalized_scores([RawMetrics("a", 0.042, 0.214, 0.56, 11.2), RawMetrics("b", 0.039, 0.187, 0.68, 9.6),
                                 RawMetrics("c", 0.033, 0.157, 0.91, 3.8)], 0.031)
    errors += [abs(s[k] - v) for k, vals in expect.items() for s, v in zip(library, vals)]
    seconds = time.perf_counter() - start
    ok = rc == 0 and len(errors) == 24 and max(errors) <= 1e-3
    report(1, ok, f"12 entries via CLI and library, max error {max(errors, default=np.inf):.2e}", seconds, 1.0)


def test_criterion_2_mi_oracle(report):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        shape = tuple(int(v) for v in rng.integers(1, 17, size=3))
        counts = rng.integers(0, 6, size=shape) * (rng.random(shape) < 0.7)
        if counts.sum() == 0:
            counts.flat[0] = 1
        xy, zy = counts.sum(axis=1), counts.sum(axis=0)
        oracle_r = plugin_mi(xy) + plugin_mi(zy) - plugin_mi(counts)
        worst = max(worst, abs(mutual_information(counts) - plugin_mi(counts)),
                    abs(mutual_information(xy) - plugin_mi(xy)),
                    abs(redundancy(xy, zy, counts) - oracle_r))
    seconds = time.perf_counter() - start
    report(2, worst < 1e-12, f"200 joints up to 16x16x16, max deviation {worst:.2e}", seconds, 10.0)


def test_criterion_3_hermitian_realness(report):
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    worst_imag, bound_ok = 0.0, True
    for _ in range(1000):
        op = InterferenceOperator.from_couplings(*(rng.standard_normal(3) + 1j * rng.standard_normal(3)))
        state = sample_latent(3 * int(rng.integers(1, 17)), rng)
        energy, residue = interference_energy(state, op, return_residue=True)
        worst_imag = max(worst_imag, abs(residue))
        bound_ok &= abs(energy) <= np.max(np.abs(np.linalg.eigvalsh(op.w))) + 1e-12
    seconds = time.perf_counter() - start
    report(3, worst_imag < 1e-12 and bound_ok,
           f"1000 cases, max |Im| {worst_imag:.2e}, eigen bound {'held' if bound_ok else 'violated'}", seconds, 5.0)


def test_criterion_4_gradients(report):
    start = time.perf_counter()
    worst = {}
    for restart in range(20):
        for name, (loss, params) in loss_closures(tiny_setup(restart)).items():
            err = grad_check(loss, params, n_entries=40, seed=restart).max_rel_error
            worst[name] = max(worst.get(name, 0.0), err)
    seconds = time.perf_counter() - start
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(4, max(worst.values()) < 1e-4, f"20 restarts, worst relative error: {detail}", seconds, 60.0)


def test_criterion_5_dsp(report):
    rng = np.random.default_rng(5)
    start = time.perf_counter()
    dft_err = 0.0
    for n in (1, 7, 16, 64, 127):
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        dft_err = max(dft_err, np.max(np.abs(dft(x) - naive_dft(x))))
    cola_err = 0.0
    for window in (16, 64, 256):
        total = np.zeros(9 * window)
        for s in range(0, 8 * window, window // 2):
            total[s:s + window] += hann(window)
        cola_err = max(cola_err, np.max(np.abs(total[window:8 * window] - 1)))
    n = np.arange(256)
    bins_ok = all(int(np.argmax(stft_logmag(np.sin(2 * np.pi * q * n / 64), 64, 32))) == q for q in (1, 4, 9, 20, 31))
    scales_ok = True
    for freq in (3.0, 8.0, 15.0, 30.0):
        sc = morlet_scalogram(np.sin(2 * np.pi * freq * n / 250), 16, 64)
        row = int(np.argmax(np.sum(sc.grid**2, axis=1)))
        scales_ok &= row == int(np.argmin(np.abs(sc.frequencies - freq)))
    seconds = time.perf_counter() - start
    ok = dft_err < 1e-10 and cola_err < 1e-12 and bins_ok and scales_ok
    report(5, ok, f"dft {dft_err:.1e}, COLA {cola_err:.1e}, STFT bins {'ok' if bins_ok else 'off'}, "
                  f"scalogram rows {'ok' if scales_ok else 'off'}", seconds, 30.0)


@pytest.mark.slow
def test_criterion_6_directional_ablation(report):
    start = time.perf_counter()
    result = run_experiment(seeds=range(5), n_beats=512, epochs=30)
    m = result["means"]
    real = preprocess(make_dataset(256, seed=0))
    ref = train_reference_models(real, seed=0)
    self_report = evaluate(ref, real, {"real": real}).reports[0]
    seconds = time.perf_counter() - start
    beats_a1 = m["full"]["c_ratio"] > m["A1"]["c_ratio"]
    beats_a3 = m["full"]["e_rms"] < m["A3"]["e_rms"]
    self_ok = self_report.delta == 0 and abs(self_report.c_ratio - 1) <= 0.05
    detail = (f"C ratio full {m['full']['c_ratio']:.3f} vs A1 {m['A1']['c_ratio']:.3f}; "
              f"E_RMS full {m['full']['e_rms']:.2f} vs A3 {m['A3']['e_rms']:.2f}; "
              f"self delta {self_report.delta:.1e}, c_ratio {self_report.c_ratio:.3f}")
    report(6, beats_a1 and beats_a3 and self_ok, detail, seconds, 600.0)


def test_criterion_7_determinism(report, tmp_path, monkeypatch):
    monkeypatch.delenv("QCFD_SEED", raising=False)
    config = {"seed": 4, "sim": {"n_per_class": 48}, "n_synth_per_class": 16,
              "train": {"epochs": 3, "batch_size": 16, "probe_size": 32, "reference_epochs": 30}}
    files = ("sim/beats.csv", "real/T.tensor", "real/S.tensor", "m/model.ckpt", "m/reference.ckpt",
             "m/history.csv", "g/T.tensor", "g/F.tensor", "r/report.json", "r/scores.csv",
             "r/morph_hist_entropy.csv", "r/joint_rms_p2p.csv")
    start = time.perf_counter()
    outputs, codes = [], []
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        (d / "cfg.json").write_text(json.dumps(config))
        monkeypatch.chdir(d)
        c = ["--config", "cfg.json"]
        codes += [run_command(["simulate", *c, "--out", "sim"]),
                  run_command(["preprocess", *c, "--beats", "sim/beats.csv", "--out", "real"]),
                  run_command(["train", *c, "--data", "real", "--out", "m"]),
                  run_command(["generate", *c, "--checkpoint", "m/model.ckpt", "--out", "g"]),
                  run_command(["evaluate", *c, "--real", "m/test", "--synth", "g=g",
                               "--reference", "m/reference.ckpt", "--out", "r"])]
        outputs.append([(d / f).read_bytes() if (d / f).exists() else None for f in files])
    seconds = time.perf_counter() - start
    differing = [f for f, a, b in zip(files, *outputs) if a is None or a != b]
    ok = all(c == 0 for c in codes) and not differing
    report(7, ok, f"{len(files)} artifacts compared, differing: {differing or 'none'}", seconds)
