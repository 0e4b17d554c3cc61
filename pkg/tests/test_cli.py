import io
import json
import os

import numpy as np
import pytest

from gazecnn.cascade import save_cascade
from gazecnn.cli import run_cli
from gazecnn.imaging import write_pgm
from gazecnn.synth import write_scenes

FAST = ["--epochs", "1", "--c1", "2", "--batch", "32"]


def cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run_cli([str(a) for a in argv], stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def files(d):
    got = {}
    for root, _, names in os.walk(d):
        for n in names:
            p = os.path.join(root, n)
            with open(p, "rb") as f:
                got[os.path.relpath(p, d)] = f.read()
    return got


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert cli("synth", "--out", d / "data", "--subjects", 6, "--per-label", 4, "--seed", 3)[0] == 0
    code, out, _ = cli("split", "--manifest", d / "data/manifest.jsonl", "--train-out", d / "split/train.jsonl",
                       "--test-out", d / "split/test.jsonl")
    assert code == 0 and json.loads(out) == {"train": 58, "test": 14}
    code, _, _ = cli("train", "--manifest", d / "split/train.jsonl", "--out", d / "m.gzk",
                     "--history-out", d / "hist.csv", *FAST)
    assert code == 0
    return d


def test_help_and_usage_errors(capsys):
    assert run_cli(["--help"]) == 0
    assert run_cli(["eval", "--bogus"]) == 2
    assert "unrecognized" in capsys.readouterr().err
    assert run_cli([]) == 2
    code, _, err = cli("eval", "--model", "m.gzk")
    assert code == 2 and "--manifest" in err


def test_missing_input_file_is_usage_error(tmp_path):
    code, _, err = cli("eval", "--model", tmp_path / "nope.gzk", "--manifest", tmp_path / "nope.jsonl")
    assert code == 2 and err


def test_domain_error_exit_one(tmp_path, workspace):
    bad = tmp_path / "bad.gzk"
    bad.write_bytes(b"NOPE" + bytes(40))
    code, _, err = cli("eval", "--model", bad, "--manifest", workspace / "split/test.jsonl")
    assert code == 1 and "ModelFormatError" in err
    m = tmp_path / "m.jsonl"
    m.write_text('{"path": "a.pgm", "label": 7, "subject": "s"}\n')
    code, _, err = cli("eval", "--model", workspace / "m.gzk", "--manifest", m)
    assert code == 1 and "line 1" in err


def test_eval_outputs(workspace, tmp_path):
    code, out, _ = cli("eval", "--model", workspace / "m.gzk", "--manifest", workspace / "split/test.jsonl",
                       "--confusion-out", tmp_path / "c.csv")
    assert code == 0
    met = json.loads(out)
    assert met["n"] == 14 and sum(map(sum, met["confusion"])) == 14
    rows = (tmp_path / "c.csv").read_text().splitlines()
    assert rows[0] == "true\\pred,right,left,vague" and len(rows) == 4
    assert (workspace / "hist.csv").read_text().startswith("epoch,loss,val_accuracy\n0,")


def test_outputs_are_byte_identical(tmp_path, workspace):
    for tag in ("a", "b"):
        d = tmp_path / tag
        assert cli("synth", "--out", d / "data", "--subjects", 3, "--per-label", 2)[0] == 0
        assert cli("augment", "--manifest", d / "data/manifest.jsonl", "--out", d / "aug", "--multiplier", 3)[0] == 0
        assert cli("split", "--manifest", d / "aug/manifest.jsonl", "--train-out", d / "tr.jsonl",
                   "--test-out", d / "te.jsonl")[0] == 0
        assert cli("train", "--manifest", d / "tr.jsonl", "--out", d / "m.gzk", *FAST)[0] == 0
    a, b = files(tmp_path / "a"), files(tmp_path / "b")
    assert a == b and "m.gzk" in a
    # 3 subjects x 3 labels x 2 frames, 3 variants each
    assert sum(1 for k in a if k.startswith("aug") and k.endswith(".pgm")) == 54


def test_augment_flags(tmp_path, workspace):
    code, out, _ = cli("augment", "--manifest", workspace / "data/manifest.jsonl", "--out", tmp_path / "o",
                       "--multiplier", 1, "--ops", "", "--include-originals")
    assert code == 0 and json.loads(out)["entries"] == 2 * 72
    code, _, err = cli("augment", "--manifest", workspace / "data/manifest.jsonl", "--out", tmp_path / "p",
                       "--ops", "shear")
    assert code == 2 and "shear" in err


def test_config_file(tmp_path, workspace):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"manifest": str(workspace / "split/test.jsonl"), "model": str(workspace / "m.gzk")}))
    code, out, _ = cli("eval", "--config", cfg)
    assert code == 0 and json.loads(out)["n"] == 14
    # command line beats the file
    code, out, _ = cli("eval", "--config", cfg, "--manifest", workspace / "split/train.jsonl")
    assert code == 0 and json.loads(out)["n"] == 58
    cfg.write_text(json.dumps({"per-label": 3}))
    code, _, err = cli("eval", "--config", cfg)
    assert code == 2 and "per-label" in err
    cfg.write_text("[1, 2]")
    assert cli("eval", "--config", cfg)[0] == 2


def test_crossval_table(workspace, tmp_path):
    code, out, _ = cli("crossval", "--manifest", workspace / "data/manifest.jsonl", "--k", 3,
                       "--shuffle-baseline", "--json-out", tmp_path / "cv.json", *FAST)
    assert code == 0
    assert "grouped 3-fold mean accuracy" in out and "shuffled 80/20 accuracy" in out
    rep = json.loads((tmp_path / "cv.json").read_text())
    assert rep["k"] == 3 and "shuffle_accuracy" in rep
    assert cli("crossval", "--manifest", workspace / "data/manifest.jsonl", "--k", 7, *FAST)[0] == 1


@pytest.fixture(scope="module")
def model_files(cascades, workspace):
    face, eye = cascades
    save_cascade(face, workspace / "face.json")
    save_cascade(eye, workspace / "eye.json")
    frames = workspace / "frames"
    write_scenes(4, 99, frames)
    write_pgm(frames / "frame_blank.pgm", np.zeros((240, 320), np.uint8))
    return workspace


def test_detect_and_infer(model_files):
    d = model_files
    code, out, _ = cli("detect", "--cascade", d / "face.json", "--image", d / "frames/frame_00000.pgm",
                       "--min-size", 48)
    dets = json.loads(out)
    assert code == 0 and dets and set(dets[0]) == {"x", "y", "w", "h", "score", "neighbors"}

    code, out, _ = cli("infer", "--model", d / "m.gzk", "--face-cascade", d / "face.json",
                       "--eye-cascade", d / "eye.json", "--frames", d / "frames")
    lines = out.splitlines()
    assert code == 0 and len(lines) == 5
    ids = [ln.split(",")[0] for ln in lines]
    assert ids == ["frame_00000", "frame_00001", "frame_00002", "frame_00003", "frame_blank"]
    assert lines[-1].split(",")[1] == "FACE_NOT_FOUND"
    for ln in lines:
        fid, tag, ms = ln.split(",")
        assert tag in {"right", "left", "vague", "FACE_NOT_FOUND", "EYES_NOT_FOUND", "PREPROCESS_FAILED"}
        assert float(ms) >= 0


def test_infer_stdin(model_files, monkeypatch):
    d = model_files
    frame = np.zeros((240, 320, 3), np.uint8)

    class FakeStdin:
        buffer = io.BytesIO(frame.tobytes() * 2)
    monkeypatch.setattr("sys.stdin", FakeStdin)
    code, out, _ = cli("infer", "--model", d / "m.gzk", "--face-cascade", d / "face.json",
                       "--eye-cascade", d / "eye.json", "--stdin", "--width", 320, "--height", 240,
                       "--channels", 3)
    assert code == 0 and [ln.split(",")[:2] for ln in out.splitlines()] == [["0", "FACE_NOT_FOUND"], ["1", "FACE_NOT_FOUND"]]
    FakeStdin.buffer = io.BytesIO(bytes(100))
    code, _, err = cli("infer", "--model", d / "m.gzk", "--face-cascade", d / "face.json",
                       "--eye-cascade", d / "eye.json", "--stdin", "--width", 320, "--height", 240)
    assert code == 2 and "truncated" in err
    code, _, _ = cli("infer", "--model", d / "m.gzk", "--face-cascade", d / "face.json",
                     "--eye-cascade", d / "eye.json")
    assert code == 2


def test_bench_command(model_files, tmp_path):
    d = model_files
    code, out, _ = cli("bench", "--frames", d / "frames", "--model", d / "m.gzk", "--face-cascade", d / "face.json",
                       "--eye-cascade", d / "eye.json", "--repetitions", 8, "--json-out", tmp_path / "b.json")
    assert code == 0 and "end_to_end" in out
    rep = json.loads((tmp_path / "b.json").read_text())
    assert rep["frames"] == 5 * 8 - 5
    code, _, _ = cli("bench", "--frames", d / "frames", "--model", d / "m.gzk", "--face-cascade", d / "face.json",
                     "--eye-cascade", d / "eye.json")
    assert code == 1
    code, _, _ = cli("bench", "--frames", d / "missing", "--model", d / "m.gzk", "--face-cascade",
                     d / "face.json", "--eye-cascade", d / "eye.json")
    assert code == 2


def test_train_cascade_command(tmp_path):
    assert cli("synth", "--kind", "scenes", "--out", tmp_path / "sc", "--scenes", 20)[0] == 0
    code, out, _ = cli("train-cascade", "--kind", "eye", "--scenes", tmp_path / "sc", "--out", tmp_path / "e.json",
                       "--stages", 2, "--max-weak", 5, "--negatives", 100)
    assert code == 0 and json.loads(out)["stages"] >= 1
    assert (tmp_path / "e.json").exists()
