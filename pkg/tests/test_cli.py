import json

import numpy as np
import pytest

from multihop_ser.cli import main
from multihop_ser.data import Utterance, write_manifest
from multihop_ser.toy import make_separable

SMALL = ["--set", "d_h_audio=3", "--set", "d_h_text=4", "--set", "d_e=4", "--set", "d_p=2",
         "--set", "max_epochs=2", "--set", "patience=1", "--set", "batch_size=8"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    manifest = write_manifest(make_separable(30, seed=4), root / "data")
    prepared = root / "prep"
    assert main(["prepare", str(manifest), str(prepared), *SMALL]) == 0
    return root, manifest, prepared


class TestPrepare:
    def test_outputs(self, workspace):
        _, _, prepared = workspace
        for name in ("manifest.jsonl", "config.txt", "folds.json", "report.json", "report.txt"):
            assert (prepared / name).exists()
        assert len(list((prepared / "vocab").glob("fold*.json"))) == 10
        report = json.loads((prepared / "report.json").read_text())
        assert report["n_utterances"] == 30 and sum(report["class_counts"].values()) == 30

    def test_rerun_is_byte_identical(self, workspace, tmp_path):
        _, manifest, prepared = workspace
        assert main(["prepare", str(manifest), str(tmp_path / "again"), *SMALL]) == 0
        for name in ("folds.json", "report.json", "config.txt"):
            assert (tmp_path / "again" / name).read_bytes() == (prepared / name).read_bytes()

    def test_only_excluded_labels(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        utts = [Utterance(f"f{i}", rng.standard_normal((3, 4)), np.zeros(2), "ugh", "sad") for i in range(3)]
        path = write_manifest(utts, tmp_path / "d")
        lines = path.read_text().splitlines()
        path.write_text("\n".join([lines[0]] + [ln.replace('"sad"', '"frustration"') for ln in lines[1:]]) + "\n")
        assert main(["prepare", str(path), str(tmp_path / "p"), *SMALL]) == 0
        assert "utterances: 0" in capsys.readouterr().out
        assert not (tmp_path / "p" / "folds.json").exists()
        assert len(json.loads((tmp_path / "p" / "report.json").read_text())["rejected"]) == 3

    def test_strict_dimension_error(self, workspace, tmp_path, capsys):
        _, manifest, _ = workspace
        assert main(["prepare", str(manifest), str(tmp_path / "x"), "--set", "d_h_text=81"]) == 1
        assert "2*d_h_text" in capsys.readouterr().err
        assert not (tmp_path / "x").exists()

    def test_missing_manifest(self, tmp_path):
        assert main(["prepare", str(tmp_path / "none.jsonl"), str(tmp_path / "o")]) != 0


class TestTrainPredict:
    def test_train_then_predict(self, workspace, tmp_path):
        root, manifest, prepared = workspace
        out = tmp_path / "run"
        assert main(["train", str(prepared), "--fold", "3", "--out", str(out)]) == 0
        log = [json.loads(x) for x in (out / "train_log.jsonl").read_text().splitlines()]
        assert 1 <= len(log) <= 2 and "dev_wa" in log[0]
        preds = tmp_path / "pred.jsonl"
        assert main(["predict", str(out / "model.ckpt"), str(manifest), "--out", str(preds)]) == 0
        recs = [json.loads(x) for x in preds.read_text().splitlines()]
        assert len(recs) == 30
        assert abs(sum(recs[0]["probabilities"].values()) - 1.0) < 1e-12

    def test_unknown_fold(self, workspace, tmp_path):
        _, _, prepared = workspace
        assert main(["train", str(prepared), "--fold", "10", "--out", str(tmp_path / "r")]) == 1

    def test_bad_checkpoint(self, workspace, tmp_path):
        _, manifest, _ = workspace
        (tmp_path / "bad.ckpt").write_bytes(b"garbage")
        assert main(["predict", str(tmp_path / "bad.ckpt"), str(manifest)]) == 1


class TestEvaluate:
    def test_report(self, workspace, tmp_path, capsys):
        _, _, prepared = workspace
        out = tmp_path / "eval"
        assert main(["evaluate", str(prepared), "--out", str(out), "--model", "audio-bre"]) == 0
        report = json.loads((out / "report.json").read_text())
        assert len(report["folds"]) == 10 and report["config"]["model"] == "audio-bre"
        assert report["seed"] == 0
        text = (out / "report.txt").read_text()
        row = text.strip().splitlines()[-1].split()
        assert row[:2] == ["audio-bre", "A"] and 0.0 <= float(row[2]) <= 1.0


class TestMisc:
    def test_dump_config(self, capsys):
        assert main(["--dump-config", "--set", "seed=9"]) == 0
        out = capsys.readouterr().out
        assert "seed = 9" in out and "model = mha-2" in out

    def test_config_file(self, tmp_path, capsys):
        (tmp_path / "c.txt").write_text("# comment\nmodel = mha-3\n")
        assert main(["--dump-config", "--config", str(tmp_path / "c.txt")]) == 0
        assert "model = mha-3" in capsys.readouterr().out

    def test_bad_override(self, capsys):
        assert main(["--dump-config", "--set", "nonsense=1"]) == 1

    def test_no_command(self, capsys):
        assert main([]) == 1

    def test_gradcheck(self, capsys):
        assert main(["gradcheck", "--models", "mha-1"]) == 0
        assert "gradcheck: PASS" in capsys.readouterr().out
