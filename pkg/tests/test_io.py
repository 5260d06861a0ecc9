import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from qcfd import io
from qcfd.beats import Label, RawBeat, make_dataset
from qcfd.errors import DataError
from qcfd.evaluation import evaluate, train_reference_models
from qcfd.training import TrainConfig, fit, generate


@given(arrays(np.float32, st.lists(st.integers(0, 5), min_size=0, max_size=3),
              elements=st.floats(width=32, allow_nan=False)))
def test_tensor_round_trip_bit_exact(a):
    raw = io.tensor_bytes(a, "x")
    header, _, payload = raw.partition(b"\n")
    assert json.loads(header) == {"dtype": "f32le", "shape": list(a.shape), "name": "x"}
    assert payload == a.astype("<f4").tobytes()


def test_tensor_file(tmp_path):
    a = np.arange(12, dtype=np.float32).reshape(3, 4) / 7
    path = io.write_tensor(tmp_path / "T.tensor", a)
    back, name = io.read_tensor(path)
    assert name == "T" and back.tobytes() == a.tobytes()


@pytest.mark.parametrize("header,payload", [
    ({"dtype": "i16", "shape": [1], "name": ""}, b"\0\0"),
    ({"dtype": "f32le", "shape": [3], "name": ""}, b"\0" * 8),
    ({"dtype": "f32le", "shape": [-1], "name": ""}, b""),
])
def test_tensor_file_rejects_malformed(tmp_path, header, payload):
    path = tmp_path / "bad.tensor"
    path.write_bytes(json.dumps(header).encode() + b"\n" + payload)
    with pytest.raises(DataError):
        io.read_tensor(path)


def test_trimodal_round_trip(tmp_path, desk_set):
    io.save_trimodal(tmp_path, desk_set)
    back = io.load_trimodal(tmp_path)
    assert np.array_equal(back.labels, desk_set.labels)
    assert np.array_equal(back.qrs, desk_set.qrs) and np.array_equal(back.st, desk_set.st)
    assert np.array_equal(back.s, desk_set.s.astype(np.float32))
    (tmp_path / "F.tensor").unlink()
    with pytest.raises(DataError, match="F"):
        io.load_trimodal(tmp_path)


def test_beats_csv_round_trip(tmp_path):
    beats = make_dataset(3, seed=2)
    path = io.write_beats_csv(tmp_path / "beats.csv", beats)
    back = io.load_beats_csv(path)
    assert [b.label for b in back] == [b.label for b in beats]
    for a, b in zip(beats, back):
        assert np.array_equal(b.samples, a.samples.astype(np.float32).astype(float))
    io.write_beats_csv(tmp_path / "bare.csv", beats, header=False)
    assert len(io.load_beats_csv(tmp_path / "bare.csv")) == 6


@pytest.mark.parametrize("bad_row,message", [
    ("0,1.0,2.0", "row 5"), ("0,1.0,x,3.0", "row 5"), ("0,1.0,nan,3.0", "row 5"), ("7,1.0,2.0,3.0", "row 5")])
def test_beats_csv_errors_name_row(tmp_path, bad_row, message):
    lines = ["label,s0,s1,s2", "0,1,2,3", "1,1,2,3", "0,4,5,6", bad_row]
    path = tmp_path / "b.csv"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError, match=message):
        io.load_beats_csv(path)


def test_fiducials_round_trip(tmp_path):
    beats = make_dataset(2, seed=0) + [RawBeat(np.zeros(10), Label.NORMAL)]
    io.write_fiducials(tmp_path / "f.json", beats)
    bare = [RawBeat(b.samples, b.label) for b in beats]
    back = io.read_fiducials(tmp_path / "f.json", bare)
    assert [(b.qrs_window, b.st_window) for b in back] == [(b.qrs_window, b.st_window) for b in beats]
    with pytest.raises(DataError):
        io.read_fiducials(tmp_path / "f.json", bare[:2])


def test_generator_checkpoint_round_trip(tmp_path, desk_set):
    cfg = TrainConfig(epochs=1, batch_size=32, probe_size=32, seed=5)
    result = fit(desk_set.subset(np.arange(96)), desk_set.subset(np.arange(96, 128)), cfg)
    path = io.save_generators(tmp_path / "m.ckpt", result.generators, cfg, result.windows)
    gens, cfg2, windows, meta = io.load_generators(path)
    assert cfg2 == cfg and windows == result.windows
    assert meta["config_hash"] == io.config_hash(io.config_to_dict(cfg))
    a = generate(result.generators, 4, 1, result.windows)
    b = generate(gens, 4, 1, windows)
    assert a.t.tobytes() == b.t.tobytes() and a.s.tobytes() == b.s.tobytes()
    with pytest.raises(DataError):
        io.load_reference(path)


def test_config_rejects_unknown_keys():
    d = io.config_to_dict(TrainConfig())
    assert io.train_config_from_dict(d) == TrainConfig()
    with pytest.raises(DataError):
        io.train_config_from_dict({**d, "bogus": 1})


def test_reference_checkpoint_and_report(tmp_path, desk_set):
    ref = train_reference_models(desk_set, seed=0, epochs=20)
    back = io.load_reference(io.save_reference(tmp_path / "r.ckpt", ref))
    assert np.array_equal(ref.embed(desk_set), back.embed(desk_set))
    ev = evaluate(ref, desk_set, {"self": desk_set})
    paths = io.write_report(ev, tmp_path / "rep", {"seed": 0})
    assert sorted(p.name for p in paths) == sorted(io.REPORT_FILES)
    scores = io.read_csv(tmp_path / "rep" / "scores.csv")
    assert [r["model"] for r in scores] == ["real", "self"]
    assert float(scores[1]["delta"]) == 0 and float(scores[0]["sigma2"]) == ev.sigma2_real
    hist = io.read_csv(tmp_path / "rep" / "morph_hist_rms.csv")
    assert len(hist) == 20 and hist[0]["real"] == hist[0]["self"]
    report = json.loads((tmp_path / "rep" / "report.json").read_text())
    assert report["run"] == {"seed": 0} and report["models"][0]["model"] == "self"


def test_histogram_rows_share_edges():
    rows = io.histogram_rows({"a": np.array([0.0, 1.0]), "b": np.array([0.5, 0.5, 2.0])}, bins=4)
    assert rows[0]["bin_lo"] == 0.0 and rows[-1]["bin_hi"] == 2.0
    assert sum(r["a"] for r in rows) == 2 and sum(r["b"] for r in rows) == 3
