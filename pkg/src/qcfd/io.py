"""On-disk formats: TensorFile, tri-modal directories, beat CSVs, checkpoints, reports.

TensorFile layout: one line of JSON ``{"dtype": "f32le", "shape": [...], "name": ...}``,
a newline, then the row-major little-endian float32 payload (4 * prod(shape)
bytes). Checkpoints use the same header/payload split with a float64 payload
so reloaded parameters are exact.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .beats import Label, RawBeat
from .dsp import TriModalSet
from .errors import DataError, ShapeError
from .evaluation import Evaluation
from .latent import InterferenceOperator
from .models import GeneratorModel, GeneratorShape, ReferenceModels
from .training import TrainConfig

DTYPES = {"f32le": np.dtype("<f4"), "f64le": np.dtype("<f8")}
TRIMODAL_FILES = ("T", "F", "S", "labels", "fiducials")
MORPH_KEYS = ("p2p", "rms", "entropy")
SCORE_COLUMNS = ("model", "sigma2", "r_sigma", "delta", "rho_delta", "c_ratio", "gamma", "e_rms", "kappa")


# ----------------------------------------------------------------------------
# TensorFile

def _encode(header: dict, payload: np.ndarray, dtype: str) -> bytes:
    line = json.dumps(header, sort_keys=True).encode()
    return line + b"\n" + np.ascontiguousarray(payload, dtype=DTYPES[dtype]).tobytes()


def _decode(raw: bytes, path) -> tuple[dict, bytes]:
    end = raw.find(b"\n")
    if end < 0:
        raise DataError(f"{path}: missing header line")
    try:
        header = json.loads(raw[:end])
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: bad header ({exc})") from None
    return header, raw[end + 1:]


def tensor_bytes(array, name: str = "") -> bytes:
    array = np.asarray(array)
    return _encode({"dtype": "f32le", "shape": list(array.shape), "name": name}, array, "f32le")


def write_tensor(path, array, name: str | None = None) -> Path:
    path = Path(path)
    path.write_bytes(tensor_bytes(array, name if name is not None else path.stem))
    return path


def read_tensor(path) -> tuple[np.ndarray, str]:
    """Array (float32) and its name."""
    path = Path(path)
    header, payload = _decode(path.read_bytes(), path)
    if header.get("dtype") != "f32le":
        raise DataError(f"{path}: unsupported dtype {header.get('dtype')!r}")
    shape = header.get("shape")
    if not isinstance(shape, list) or any(not isinstance(d, int) or d < 0 for d in shape):
        raise DataError(f"{path}: bad shape {shape!r}")
    if len(payload) != 4 * math.prod(shape):
        raise DataError(f"{path}: payload has {len(payload)} bytes, header implies {4 * math.prod(shape)}")
    return np.frombuffer(payload, dtype="<f4").reshape(shape).copy(), str(header.get("name", ""))


# ----------------------------------------------------------------------------
# tri-modal directories

def save_trimodal(directory, data: TriModalSet) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    fid = np.concatenate([data.qrs, data.st], axis=1)
    arrays = (data.t, data.f, data.s, data.labels, fid)
    return [write_tensor(directory / f"{name}.tensor", a, name) for name, a in zip(TRIMODAL_FILES, arrays)]


def load_trimodal(directory) -> TriModalSet:
    directory = Path(directory)
    missing = [n for n in TRIMODAL_FILES if not (directory / f"{n}.tensor").exists()]
    if missing:
        raise DataError(f"{directory}: missing {', '.join(missing)}")
    t, f, s, labels, fid = (read_tensor(directory / f"{n}.tensor")[0] for n in TRIMODAL_FILES)
    if fid.ndim != 2 or fid.shape[1] != 4:
        raise DataError(f"{directory}: fiducials must be (n, 4)")
    if not (len(t) == len(f) == len(s) == len(labels) == len(fid)):
        raise DataError(f"{directory}: tensors disagree in sample count")
    fid = fid.astype(int)
    return TriModalSet(t.astype(float), f.astype(float), s.astype(float), labels.astype(int), fid[:, :2], fid[:, 2:])


# ----------------------------------------------------------------------------
# beat CSVs

def _f32_text(v: float) -> str:
    return repr(float(np.float32(v)))


def write_beats_csv(path, beats: Sequence[RawBeat], header: bool = True) -> Path:
    """One row per beat: label then samples (float32-rounded, shortest repr)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        if header and beats:
            writer.writerow(["label"] + [f"s{i}" for i in range(len(beats[0]))])
        for beat in beats:
            writer.writerow([int(beat.label)] + [_f32_text(v) for v in beat.samples])
    return path


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_beats_csv(path, fs: float = 250.0) -> list[RawBeat]:
    """Parse ``label, x0, x1, ...`` rows; the first row may be a header.

    Fiducials are absent on loaded beats. Errors name the 1-based file row.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from None
    valid = {int(v) for v in Label}
    beats, width = [], None
    for number, row in enumerate(rows, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if number == 1 and not all(_is_number(c) for c in row):
            continue
        if len(row) < 2:
            raise DataError(f"{path}: row {number} has no samples")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DataError(f"{path}: row {number} has {len(row)} cells, expected {width}")
        try:
            values = [float(c) for c in row]
        except ValueError:
            raise DataError(f"{path}: row {number} has a non-numeric cell") from None
        if not all(math.isfinite(v) for v in values):
            raise DataError(f"{path}: row {number} has a non-finite value")
        if values[0] != int(values[0]) or int(values[0]) not in valid:
            raise DataError(f"{path}: row {number} has unknown label {row[0]!r}")
        beats.append(RawBeat(np.array(values[1:]), Label(int(values[0])), fs=fs))
    if not beats:
        raise DataError(f"{path}: no beats")
    return beats


def write_fiducials(path, beats: Sequence[RawBeat]) -> Path:
    rows = [{"qrs": list(b.qrs_window) if b.qrs_window else None,
             "st": list(b.st_window) if b.st_window else None} for b in beats]
    path = Path(path)
    path.write_text(json.dumps(rows) + "\n")
    return path


def read_fiducials(path, beats: Sequence[RawBeat]) -> list[RawBeat]:
    path = Path(path)
    try:
        rows = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: {exc}") from None
    if not isinstance(rows, list) or len(rows) != len(beats):
        raise DataError(f"{path}: expected {len(beats)} fiducial entries")
    out = []
    for beat, row in zip(beats, rows):
        qrs = tuple(row["qrs"]) if row.get("qrs") else None
        st = tuple(row["st"]) if row.get("st") else None
        out.append(dataclasses.replace(beat, qrs_window=qrs, st_window=st))
    return out


# ----------------------------------------------------------------------------
# checkpoints

def config_to_dict(config) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(config)))


def train_config_from_dict(d: dict) -> TrainConfig:
    names = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = set(d) - names
    if unknown:
        raise DataError(f"unknown train config keys: {sorted(unknown)}")
    d = dict(d)
    for key in ("critic_hidden", "operator"):
        if key in d:
            d[key] = tuple(d[key])
    return TrainConfig(**d)


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


def _write_bundle(path, meta: dict, arrays: Sequence[np.ndarray]) -> Path:
    meta = dict(meta, dtype="f64le", tensors=[list(np.shape(a)) for a in arrays])
    payload = np.concatenate([np.ravel(a) for a in arrays]) if arrays else np.zeros(0)
    path = Path(path)
    path.write_bytes(_encode(meta, payload, "f64le"))
    return path


def _read_bundle(path) -> tuple[dict, list[np.ndarray]]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from None
    meta, payload = _decode(raw, path)
    if meta.get("dtype") != "f64le":
        raise DataError(f"{path}: not a checkpoint")
    shapes = [tuple(s) for s in meta["tensors"]]
    flat = np.frombuffer(payload, dtype="<f8")
    if flat.size != sum(math.prod(s) for s in shapes):
        raise DataError(f"{path}: payload size does not match header")
    arrays, offset = [], 0
    for s in shapes:
        n = math.prod(s)
        arrays.append(flat[offset:offset + n].reshape(s).copy())
        offset += n
    return meta, arrays


def save_generators(path, generators: dict[int, GeneratorModel], config: TrainConfig, windows: dict,
                    extra: dict | None = None) -> Path:
    labels = sorted(generators)
    shape = generators[labels[0]].shape
    cfg = config_to_dict(config)
    meta = {
        "kind": "generators", "labels": labels, "shape": dataclasses.asdict(shape), "seed": config.seed,
        "config": cfg, "config_hash": config_hash(cfg),
        "operators": {str(k): generators[k].op.operator().to_list() for k in labels},
        "windows": {str(k): [list(w) for w in windows[k]] if windows.get(k) else None for k in labels},
        **(extra or {}),
    }
    arrays = [p.data for k in labels for p in generators[k].params()]
    return _write_bundle(path, meta, arrays)


def load_generators(path):
    """(generators, config, windows, meta) from a generator checkpoint."""
    meta, arrays = _read_bundle(path)
    if meta.get("kind") != "generators":
        raise DataError(f"{path}: not a generator checkpoint")
    config = train_config_from_dict(meta["config"])
    s = meta["shape"]
    shape = GeneratorShape(s["latent_dim"], s["hidden"], s["t_len"], s["f_len"], tuple(s["s_shape"]))
    generators, windows, pos = {}, {}, 0
    for label in meta["labels"]:
        op = InterferenceOperator.from_list(meta["operators"][str(label)])
        g = GeneratorModel.init(shape, op, None, config.learnable_operator)
        for p in g.params():
            if arrays[pos].shape != p.data.shape:
                raise DataError(f"{path}: parameter {pos} has shape {arrays[pos].shape}, expected {p.data.shape}")
            p.data = arrays[pos]
            pos += 1
        generators[int(label)] = g
        w = meta["windows"][str(label)]
        windows[int(label)] = (tuple(w[0]), tuple(w[1])) if w else None
    return generators, config, windows, meta


def save_reference(path, models: ReferenceModels) -> Path:
    meta = {
        "kind": "reference", "seed": models.seed,
        "dims": [e.in_dim for e in models.encoders], "embed": models.encoders[0].out_dim,
        "n_classes": models.classifier.out_dim,
    }
    return _write_bundle(path, meta, [p.data for p in models.params()])


def load_reference(path) -> ReferenceModels:
    meta, arrays = _read_bundle(path)
    if meta.get("kind") != "reference":
        raise DataError(f"{path}: not a reference checkpoint")
    models = ReferenceModels.init(meta["dims"], meta["embed"], meta["n_classes"], None, meta["seed"])
    params = models.params()
    if len(params) != len(arrays):
        raise DataError(f"{path}: expected {len(params)} tensors, found {len(arrays)}")
    for p, a in zip(params, arrays):
        if p.data.shape != a.shape:
            raise ShapeError(f"{path}: tensor shape {a.shape} != {p.data.shape}")
        p.data = a
    return models.freeze()


# ----------------------------------------------------------------------------
# tables and reports

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    return repr(float(v))


def write_csv(path, columns: Sequence[str], rows: Sequence[dict]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c)) for c in columns])
    return path


def read_csv(path) -> list[dict[str, str]]:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from None


def write_history(path, history: Sequence[dict]) -> Path:
    columns = list(history[0]) if history else ["epoch"]
    return write_csv(path, columns, history)


def histogram_rows(values: dict[str, np.ndarray], bins: int = 20) -> list[dict]:
    """Shared-edge histograms of one morphology statistic for several sets."""
    pooled = np.concatenate(list(values.values()))
    lo, hi = float(pooled.min()), float(pooled.max())
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    counts = {name: np.histogram(v, edges)[0] for name, v in values.items()}
    rows = []
    for i in range(bins):
        row = {"bin_lo": edges[i], "bin_hi": edges[i + 1]}
        row.update({name: float(c[i]) for name, c in counts.items()})
        rows.append(row)
    return rows


REPORT_FILES = ("report.json", "scores.csv", "morph_hist_p2p.csv", "morph_hist_rms.csv",
                "morph_hist_entropy.csv", "joint_rms_p2p.csv")


def write_report(evaluation: Evaluation, directory, run: dict | None = None) -> list[Path]:
    """Write the structured report and plot-data tables; returns the files written."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    report = {
        "run": run or {},
        "sigma2_real": evaluation.sigma2_real,
        "real_cfd": evaluation.real_cfd.as_dict(),
        "models": [
            {**r.table_row(), "cfd": r.cfd.as_dict() if r.cfd else None, "morphology": r.morphology_summary()}
            for r in evaluation.reports
        ],
    }
    text = json.dumps(report, indent=2, sort_keys=True, allow_nan=True)
    paths = [directory / "report.json"]
    paths[0].write_text(text + "\n")
    rows = [{"model": "real", "sigma2": evaluation.sigma2_real}] + [r.table_row() for r in evaluation.reports]
    paths.append(write_csv(directory / "scores.csv", SCORE_COLUMNS, rows))
    for key in MORPH_KEYS:
        values = {"real": evaluation.real_morphology[key], **{r.name: r.morphology[key] for r in evaluation.reports}}
        hist = histogram_rows(values)
        paths.append(write_csv(directory / f"morph_hist_{key}.csv", ["bin_lo", "bin_hi", *values], hist))
    joint = [{"model": "real", "rms": a, "p2p": b} for a, b in evaluation.real_joint_rms_p2p()]
    for r in evaluation.reports:
        joint += [{"model": r.name, "rms": a, "p2p": b} for a, b in r.joint_rms_p2p()]
    paths.append(write_csv(directory / "joint_rms_p2p.csv", ["model", "rms", "p2p"], joint))
    return paths
