"""Command-line entry point: simulate, preprocess, train, generate, evaluate, scores.

Exit codes: 0 success, 1 usage error, 2 data/config error, 3 numeric-health abort.
Settings come from an optional JSON config; flags win over ``QCFD_SEED``,
which wins over the config file.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import io
from .beats import BeatParams, SimProfile, make_dataset
from .dsp import DspProfile, full_profile, preprocess
from .errors import DataError, NumericHealthError, QcfdError
from .evaluation import RawMetrics, evaluate, normalized_scores, train_reference_models
from .training import TrainConfig, generate, grid_search, train

log = logging.getLogger("qcfd")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class ConfigError(QcfdError):
    pass


# ----------------------------------------------------------------------------
# configuration

@dataclass
class SimSection:
    n_per_class: int = 256
    fs: float = 250.0
    duration: float = 1.024
    noise_std: float = 0.02
    st_offset: float = 0.15
    amplitude_jitter: float = 0.1
    center_jitter: float = 0.004
    width_jitter: float = 0.05

    def profile(self) -> SimProfile:
        base = BeatParams(fs=self.fs, duration=self.duration, noise_std=self.noise_std)
        base.validate()
        return SimProfile(base, self.st_offset, self.amplitude_jitter, self.center_jitter, self.width_jitter)


@dataclass
class RunConfig:
    profile: str = "desk"
    seed: int = 0
    n_synth_per_class: int = 128
    sim: SimSection = field(default_factory=SimSection)
    dsp: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)

    def dsp_profile(self) -> DspProfile:
        base = full_profile() if self.profile == "full" else DspProfile()
        values = dict(self.dsp)
        for key in ("band", "scale_band"):
            if key in values:
                values[key] = tuple(values[key])
        profile = dataclasses.replace(base, **values)
        profile.validate()
        return profile

    def train_config(self) -> TrainConfig:
        cfg = io.train_config_from_dict({**self.train, "seed": self.seed})
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {
            "profile": self.profile, "seed": self.seed, "n_synth_per_class": self.n_synth_per_class,
            "sim": dataclasses.asdict(self.sim),
            "dsp": io.config_to_dict(self.dsp_profile()),
            "train": {k: v for k, v in io.config_to_dict(self.train_config()).items() if k != "seed"},
        }


def _check_keys(section: str, given: dict, allowed) -> None:
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown {section} config keys: {', '.join(unknown)}")


def parse_config(raw: dict) -> RunConfig:
    """Validate a config mapping; unknown keys at any level are rejected."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys("top-level", raw, {f.name for f in dataclasses.fields(RunConfig)})
    sim = raw.get("sim", {})
    dsp = raw.get("dsp", {})
    trn = raw.get("train", {})
    for name, section in (("sim", sim), ("dsp", dsp), ("train", trn)):
        if not isinstance(section, dict):
            raise ConfigError(f"{name} config must be an object")
    _check_keys("sim", sim, {f.name for f in dataclasses.fields(SimSection)})
    _check_keys("dsp", dsp, {f.name for f in dataclasses.fields(DspProfile)})
    _check_keys("train", trn, {f.name for f in dataclasses.fields(TrainConfig)})
    cfg = RunConfig(
        profile=raw.get("profile", "desk"),
        seed=raw.get("seed", 0),
        n_synth_per_class=raw.get("n_synth_per_class", 128),
        sim=SimSection(**sim),
        dsp=dict(dsp),
        train={k: v for k, v in trn.items() if k != "seed"},
    )
    if cfg.profile not in ("desk", "full"):
        raise ConfigError(f"profile must be 'desk' or 'full', got {cfg.profile!r}")
    if not isinstance(cfg.seed, int) or cfg.seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    if cfg.n_synth_per_class < 1 or cfg.sim.n_per_class < 1:
        raise ConfigError("sample counts must be positive")
    # surface bad values now rather than mid-run
    cfg.sim.profile()
    cfg.dsp_profile()
    cfg.train_config()
    return cfg


def resolve_config(args: argparse.Namespace) -> RunConfig:
    raw: dict = {}
    if getattr(args, "config", None):
        try:
            raw = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror or exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from None
        # a report's embedded config can be fed back in directly
        if isinstance(raw, dict) and "run" in raw and isinstance(raw["run"], dict) and "config" in raw["run"]:
            raw = raw["run"]["config"]
    raw = dict(raw)
    env = os.environ.get("QCFD_SEED")
    if env is not None:
        try:
            raw["seed"] = int(env)
        except ValueError:
            raise ConfigError(f"QCFD_SEED must be an integer, got {env!r}") from None
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    if getattr(args, "profile", None):
        raw["profile"] = args.profile
    sim = dict(raw.get("sim", {}))
    if getattr(args, "n_per_class", None) is not None and args.command == "simulate":
        sim["n_per_class"] = args.n_per_class
    raw["sim"] = sim
    if getattr(args, "n_per_class", None) is not None and args.command == "generate":
        raw["n_synth_per_class"] = args.n_per_class
    trn = dict(raw.get("train", {}))
    for flag in ("epochs", "lr", "lambda_cfd", "lambda_interf", "lambda_phys", "lambda_orth", "patience"):
        value = getattr(args, flag, None)
        if value is not None:
            trn[flag] = value
    raw["train"] = trn
    try:
        return parse_config(raw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, QcfdError):
            raise
        raise ConfigError(f"invalid config: {exc}") from None


def _run_record(command: str, cfg: RunConfig, **inputs) -> dict:
    return {"command": command, "seed": cfg.seed, "config": cfg.to_dict(), "inputs": inputs}


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ----------------------------------------------------------------------------
# subcommands

def cmd_simulate(args, cfg: RunConfig) -> int:
    out = _out_dir(args.out)
    beats = make_dataset(cfg.sim.n_per_class, cfg.sim.profile(), cfg.seed)
    io.write_beats_csv(out / "beats.csv", beats)
    io.write_fiducials(out / "fiducials.json", beats)
    _write_json(out / "run.json", _run_record("simulate", cfg))
    log.info("wrote %d beats to %s", len(beats), out)
    return EXIT_OK


def cmd_preprocess(args, cfg: RunConfig) -> int:
    beats = io.load_beats_csv(args.beats, fs=cfg.sim.fs)
    fid = Path(args.fiducials) if args.fiducials else Path(args.beats).with_name("fiducials.json")
    if args.fiducials or fid.exists():
        beats = io.read_fiducials(fid, beats)
    data = preprocess(beats, cfg.dsp_profile())
    out = _out_dir(args.out)
    io.save_trimodal(out, data)
    _write_json(out / "run.json", _run_record("preprocess", cfg, beats=str(args.beats)))
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    data = io.load_trimodal(args.data)
    tc = cfg.train_config()
    out = _out_dir(args.out)
    if args.grid_search:
        result, table = grid_search(data, tc)
        io.write_csv(out / "grid.csv", ["lambda_cfd", "lambda_interf", "lambda_phys", "val_unweighted"], table)
        tc = result.config
    else:
        result = train(data, tc)
    io.save_generators(out / "model.ckpt", result.generators, tc, result.windows,
                       extra={"best_epoch": result.best_epoch})
    io.save_reference(out / "reference.ckpt", result.reference)
    io.write_history(out / "history.csv", result.history)
    io.save_trimodal(out / "test", data.subset(result.splits.test))
    _write_json(out / "run.json", {**_run_record("train", cfg, data=str(args.data)),
                                   "selected": io.config_to_dict(tc), "best_epoch": result.best_epoch})
    return EXIT_OK


def cmd_generate(args, cfg: RunConfig) -> int:
    generators, _, windows, _ = io.load_generators(args.checkpoint)
    data = generate(generators, cfg.n_synth_per_class, cfg.seed, windows)
    out = _out_dir(args.out)
    io.save_trimodal(out, data)
    _write_json(out / "run.json", _run_record("generate", cfg, checkpoint=str(args.checkpoint)))
    return EXIT_OK


def _synth_arg(text: str) -> tuple[str, str]:
    name, sep, path = text.partition("=")
    if not sep or not name or not path:
        raise argparse.ArgumentTypeError(f"expected NAME=DIR, got {text!r}")
    return name, path


def cmd_evaluate(args, cfg: RunConfig) -> int:
    real = io.load_trimodal(args.real)
    names = [n for n, _ in args.synth]
    if len(set(names)) != len(names):
        raise DataError("synthetic set names must be unique")
    synth = {name: io.load_trimodal(path) for name, path in args.synth}
    tc = cfg.train_config()
    if args.reference:
        reference = io.load_reference(args.reference)
    else:
        reference = train_reference_models(real, seed=cfg.seed, epochs=tc.reference_epochs)
    dsp = cfg.dsp_profile()
    ev = evaluate(reference, real, synth, window=dsp.window, k=dsp.k, n_bins=tc.n_bins)
    run = _run_record("evaluate", cfg, real=str(args.real), synth=[f"{n}={p}" for n, p in args.synth],
                      reference=str(args.reference) if args.reference else None)
    io.write_report(ev, args.out, run)
    return EXIT_OK


def cmd_scores(args, cfg: RunConfig) -> int:
    rows = io.read_csv(args.raw)
    if not rows:
        raise DataError(f"{args.raw}: empty table")
    required = {"model", "sigma2", "delta", "c_ratio", "e_rms"}
    missing = required - set(rows[0])
    if missing:
        raise DataError(f"{args.raw}: missing columns {', '.join(sorted(missing))}")
    real = [r for r in rows if r["model"].strip().lower() == "real"]
    if len(real) != 1:
        raise DataError(f"{args.raw}: need exactly one 'real' row")

    def num(row, key, line):
        try:
            return float(row[key])
        except (TypeError, ValueError):
            raise DataError(f"{args.raw}: row {line} column {key} is not numeric") from None

    sigma2_real = num(real[0], "sigma2", rows.index(real[0]) + 2)
    raw = [RawMetrics(r["model"], *(num(r, k, i + 2) for k in ("sigma2", "delta", "c_ratio", "e_rms")))
           for i, r in enumerate(rows) if r is not real[0]]
    if not raw:
        raise DataError(f"{args.raw}: no model rows")
    scores = normalized_scores(raw, sigma2_real)
    table = [{"model": "real", "sigma2": sigma2_real}]
    for r, s in zip(raw, scores):
        table.append({"model": r.name, "sigma2": r.sigma2, "delta": r.delta, "c_ratio": r.c_ratio,
                      "e_rms": r.e_rms, **s})
    if args.out:
        io.write_csv(args.out, io.SCORE_COLUMNS, table)
    else:
        for line in _format_scores(table):
            print(line)
    return EXIT_OK


def _format_scores(table) -> list[str]:
    lines = [",".join(io.SCORE_COLUMNS)]
    for row in table:
        cells = []
        for c in io.SCORE_COLUMNS:
            v = row.get(c)
            cells.append("" if v is None else v if isinstance(v, str) else f"{v:.3f}")
        lines.append(",".join(cells))
    return lines


# ----------------------------------------------------------------------------
# parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qcfd", description="Tri-modal ECG synthesis and evaluation.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def common(p):
        p.add_argument("--config", help="JSON run config")
        p.add_argument("--seed", type=int)
        p.add_argument("--profile", choices=("desk", "full"))
        return p

    p = common(sub.add_parser("simulate", help="write simulated beats and fiducials"))
    p.add_argument("--out", required=True)
    p.add_argument("--n-per-class", type=int)

    p = common(sub.add_parser("preprocess", help="beats CSV -> tri-modal tensor files"))
    p.add_argument("--beats", required=True)
    p.add_argument("--fiducials", help="defaults to fiducials.json next to the CSV, if present")
    p.add_argument("--out", required=True)

    p = common(sub.add_parser("train", help="train generators; write checkpoint and history"))
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--lambda-cfd", type=float)
    p.add_argument("--lambda-interf", type=float)
    p.add_argument("--lambda-phys", type=float)
    p.add_argument("--lambda-orth", type=float)
    p.add_argument("--grid-search", action="store_true", help="search lambda weights on the validation split")

    p = common(sub.add_parser("generate", help="sample synthetic tri-modal sets from a checkpoint"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-per-class", type=int)

    p = common(sub.add_parser("evaluate", help="score synthetic sets against real data"))
    p.add_argument("--real", required=True)
    p.add_argument("--synth", required=True, action="append", type=_synth_arg, metavar="NAME=DIR",
                   help="repeatable; the first set is the baseline")
    p.add_argument("--reference", help="reference checkpoint; trained on --real when omitted")
    p.add_argument("--out", required=True)

    p = common(sub.add_parser("scores", help="normalized scores from a raw-metrics table"))
    p.add_argument("--raw", required=True, help="CSV with model,sigma2,delta,c_ratio,e_rms and a 'real' row")
    p.add_argument("--out", help="output CSV (default: stdout)")
    return parser


COMMANDS = {
    "simulate": cmd_simulate, "preprocess": cmd_preprocess, "train": cmd_train,
    "generate": cmd_generate, "evaluate": cmd_evaluate, "scores": cmd_scores,
}


def _fail(code: int, message: str) -> int:
    print(f"qcfd: error: {' '.join(str(message).split())}", file=sys.stderr)
    return code


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except NumericHealthError as exc:
        return _fail(EXIT_NUMERIC, exc)
    except (QcfdError, ValueError, OSError) as exc:
        return _fail(EXIT_DATA, exc)


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
