import json

import numpy as np
import pytest

from neurodenoise.checkpoint import identity_model, save_checkpoint
from neurodenoise.cli import main
from neurodenoise.config import ModelConfig, PartitionConfig, TrainingConfig, dump_config
from neurodenoise.spectral import AudioBuffer, StftConfig
from neurodenoise.wavio import read_wav, write_wav


@pytest.fixture
def noise_wav(tmp_path):
    x = np.random.default_rng(0).standard_normal(16000) * 0.1
    path = tmp_path / "in.wav"
    write_wav(path, AudioBuffer(x))
    return path


@pytest.fixture
def tiny_ckpt(tmp_path, tiny_model):
    return save_checkpoint(tiny_model, tmp_path / "tiny.ckpt")


def test_params_total(capsys):
    assert main(["params"]) == 0
    out = capsys.readouterr().out
    total = int(out.split("total")[1].split()[0].replace(",", ""))
    assert 900_000 <= total <= 1_030_000


def test_gradcheck_passes(capsys):
    assert main(["gradcheck", "--n-params", "200"]) == 0
    out = capsys.readouterr().out
    err = float(out.split("max relative error")[1].split()[0])
    assert err < 1e-4


def test_identity_checkpoint_reproduces_input(tmp_path, noise_wav):
    cfg = ModelConfig(partition=PartitionConfig(filter_orders=[0, 0, 0]))
    ckpt = save_checkpoint(identity_model(cfg), tmp_path / "id.ckpt")
    out = tmp_path / "out.wav"
    assert main(["enhance", "--model", str(ckpt), "--in", str(noise_wav), "--out", str(out)]) == 0
    x, y = read_wav(noise_wav).samples, read_wav(out).samples
    sl = cfg.stft.interior(len(x))
    # both files are 16-bit, so agreement is to one quantisation step
    assert np.max(np.abs(x[sl] - y[sl])) <= 1.5 / 32768


def test_stream_and_offline_files_identical(tmp_path, tiny_ckpt, noise_wav):
    a, b = tmp_path / "a.wav", tmp_path / "b.wav"
    ra, rb = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["enhance", "--model", str(tiny_ckpt), "--in", str(noise_wav), "--out", str(a),
                 "--report", str(ra)]) == 0
    assert main(["enhance", "--model", str(tiny_ckpt), "--in", str(noise_wav), "--out", str(b),
                 "--report", str(rb), "--stream"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert json.loads(ra.read_text())["synops"] == json.loads(rb.read_text())["synops"]


def test_profile_on_silence(tmp_path, tiny_ckpt, capsys):
    wav = tmp_path / "silence.wav"
    write_wav(wav, AudioBuffer(np.zeros(8000)))
    report = tmp_path / "r.json"
    assert main(["profile", "--model", str(tiny_ckpt), "--in", str(wav), "--report", str(report)]) == 0
    rep = json.loads(report.read_text())
    assert rep["synops"] == 0
    assert rep["neuronops"] > 0
    assert "latency" in capsys.readouterr().out


def _synth(tmp_path, seed=3):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"clip_s": 1.0, "n_pairs": 5,
                                "toy_corpus": {"n_sources": 4, "n_noises": 2, "seed": 5}}))
    out = tmp_path / f"data{seed}"
    assert main(["synthdata", "--spec", str(spec), "--out", str(out), "--seed", str(seed)]) == 0
    return out / "manifest.jsonl"


def _tiny_config(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(dump_config(ModelConfig.tiny(), TrainingConfig(steps_per_epoch=2, batch_size=2)))
    return path


def test_zero_epoch_train_writes_checkpoint_and_baseline(tmp_path):
    manifest = _synth(tmp_path)
    out = tmp_path / "m.ckpt"
    assert main(["train", "--config", str(_tiny_config(tmp_path)), "--data", str(manifest),
                 "--out", str(out), "--epochs", "0"]) == 0
    assert out.exists()
    lines = [json.loads(s) for s in (tmp_path / "m.ckpt.log.jsonl").read_text().splitlines()]
    assert len(lines) == 1 and lines[0]["epoch"] == 0
    assert np.isfinite(lines[0]["si_snr_i"])


def test_train_is_deterministic_under_seed(tmp_path):
    manifest = _synth(tmp_path)
    cfg = _tiny_config(tmp_path)
    logs = []
    for run in range(2):
        log = tmp_path / f"log{run}.jsonl"
        assert main(["train", "--config", str(cfg), "--data", str(manifest), "--epochs", "2",
                     "--out", str(tmp_path / f"m{run}.ckpt"), "--log", str(log), "--seed", "4"]) == 0
        entries = [json.loads(s) for s in log.read_text().splitlines()]
        logs.append([{k: v for k, v in e.items() if k != "seconds"} for e in entries])
    assert logs[0] == logs[1]
    assert (tmp_path / "m0.ckpt").read_bytes() == (tmp_path / "m1.ckpt").read_bytes()


def test_synthdata_is_deterministic(tmp_path):
    a = _synth(tmp_path, seed=3).read_text()
    b = (tmp_path / "again").mkdir() or _synth(tmp_path / "again", seed=3).read_text()
    strip = lambda text: [{k: v for k, v in json.loads(s).items() if not k.endswith("_path")}
                          for s in text.splitlines()]
    assert strip(a) == strip(b)


def test_exit_codes(tmp_path, tiny_ckpt, noise_wav, capsys):
    assert main(["params", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"model": {"theta": -1}}))
    assert main(["params", "--config", str(bad)]) == 2
    assert main(["enhance", "--model", str(tiny_ckpt), "--in", str(tmp_path / "nope.wav"),
                 "--out", str(tmp_path / "o.wav")]) == 3
    other = tmp_path / "other.json"
    other.write_text(dump_config(ModelConfig.tiny(theta=0.3)))
    assert main(["enhance", "--model", str(tiny_ckpt), "--config", str(other),
                 "--in", str(noise_wav), "--out", str(tmp_path / "o.wav")]) == 4
    junk = tmp_path / "junk.ckpt"
    junk.write_bytes(b"junk\n")
    assert main(["profile", "--model", str(junk), "--in", str(noise_wav)]) == 4
    assert "error" in capsys.readouterr().err
