import json
import subprocess
import sys

import numpy as np
import pytest

from specklenet.cli import build_parser, main
from specklenet.imageio import RawImage, write_pnm
from specklenet.model import Model, ModelSpec, GAP, SOFTMAX, conv, dense
from specklenet.taxonomy import TAXONOMY_ENV, load_taxonomy
from specklenet.weights import save_weights

COMMANDS = ["synth", "train", "eval", "classify", "bench", "inspect"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def error_line(err):
    lines = err.strip().splitlines()
    assert len(lines) == 1
    return json.loads(lines[0])


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--out", str(root), "--classes", "3", "--per-class", "4", "2", "2",
                 "--resolution", "16"]) == 0
    return root


@pytest.fixture(scope="module")
def trained(dataset):
    weights = dataset / "best.spkn"
    assert main(["train", "--train", str(dataset / "train.txt"), "--val", str(dataset / "val.txt"),
                 "--out", str(weights), "--size", "16", "--max-epochs", "3", "--batch-size", "4"]) == 0
    return weights


def oracle_model(tmp_path):
    """59-way model that always predicts the class whose bias is largest."""
    tax = load_taxonomy()
    spec = ModelSpec((conv(1, 1), GAP, dense(59), SOFTMAX), num_classes=59)

    def make(cid):
        bias = np.zeros(59, np.float32)
        bias[cid] = 8.0
        return Model(spec, {"0.kernel": np.zeros((1, 1, 1, 1), np.float32), "0.bias": np.zeros(1, np.float32),
                            "2.weights": np.zeros((1, 59), np.float32), "2.bias": bias})
    return tax, make


# --- inspect ------------------------------------------------------------

def test_inspect_canonical_total(capsys):
    code, out, _ = run(capsys, "inspect", "canonical")
    assert code == 0
    assert "total parameters: 341307" in out.splitlines()
    assert "256x256x32" in out and "128x128x256" in out


def test_inspect_json(capsys):
    code, out, _ = run(capsys, "inspect", "canonical", "--json", "--size", "128")
    doc = json.loads(out)
    assert doc["total_parameters"] == 341307
    assert doc["layers"][0]["output_shape"] == [64, 64, 32]
    assert sum(r["parameters"] for r in doc["layers"]) == 341307


def test_inspect_weight_file(capsys, trained):
    code, out, _ = run(capsys, "inspect", str(trained), "--json")
    assert code == 0 and json.loads(out)["total_parameters"] == 341307


# --- usage --------------------------------------------------------------

@pytest.mark.parametrize("cmd", COMMANDS)
def test_help_for_every_command(cmd):
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args([cmd, "--help"])
    assert exc.value.code == 0


@pytest.mark.parametrize("argv", [["inspect", "canonical", "--bogus"], ["frobnicate"], [],
                                  ["eval", "--weights", "w"], ["synth", "--out", "x", "--classes", "two"]])
def test_usage_errors_exit_2(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 2 and out == ""
    assert error_line(err)["exit_code"] == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "specklenet", "inspect", "canonical", "--json"],
                          capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)["total_parameters"] == 341307


# --- data errors ----------------------------------------------------------

def test_missing_files_exit_3(capsys, tmp_path):
    code, _, err = run(capsys, "eval", "--weights", str(tmp_path / "w"), "--manifest", str(tmp_path / "m"))
    assert code == 3
    assert "no such file" in error_line(err)["message"]


def test_corrupt_weights_exit_3(capsys, tmp_path):
    (tmp_path / "w.spkn").write_bytes(b"NOPE" + bytes(20))
    img = tmp_path / "a.pgm"
    write_pnm(img, RawImage(np.zeros((8, 8, 1), np.uint8)))
    code, _, err = run(capsys, "classify", "--weights", str(tmp_path / "w.spkn"), "--image", str(img))
    assert code == 3 and error_line(err)["error"] == "BadMagicError"


def test_bad_taxonomy_env_exit_3(capsys, tmp_path, monkeypatch, dataset):
    monkeypatch.setenv(TAXONOMY_ENV, str(tmp_path / "missing.json"))
    code, _, err = run(capsys, "synth", "--out", str(tmp_path / "o"), "--classes", "2")
    assert code == 3 and error_line(err)["error"] == "TaxonomyError"


def test_non_finite_training_exit_4(capsys, dataset, tmp_path):
    code, _, err = run(capsys, "train", "--train", str(dataset / "train.txt"), "--val", str(dataset / "val.txt"),
                       "--out", str(tmp_path / "w.spkn"), "--size", "16", "--max-epochs", "2", "--lr", "1e30")
    assert code == 4
    assert error_line(err)["error"] == "NumericError"


# --- synth / train / eval / classify -------------------------------------

def test_synth_layout_and_idempotence(capsys, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        code, out, _ = run(capsys, "synth", "--out", str(d), "--classes", "2", "--per-class", "2", "1", "1",
                           "--resolution", "16", "--json")
        assert code == 0 and json.loads(out)["seed"] == 42
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert len(files) == 8 + 3 + 1
    assert all((a / f).read_bytes() == (b / f).read_bytes() for f in files)


def test_train_outputs_and_idempotence(capsys, dataset, trained, tmp_path):
    hist = trained.with_name(trained.name + ".history.csv")
    assert hist.read_text().startswith("epoch,train_loss,train_acc,val_loss,val_acc,lr")
    again = tmp_path / "again.spkn"
    code, out, _ = run(capsys, "train", "--train", str(dataset / "train.txt"), "--val", str(dataset / "val.txt"),
                       "--out", str(again), "--size", "16", "--max-epochs", "3", "--batch-size", "4", "--json")
    assert code == 0 and json.loads(out)["seed"] == 42
    assert again.read_bytes() == trained.read_bytes()
    assert again.with_name(again.name + ".history.csv").read_text() == hist.read_text()


def test_train_prints_seed(capsys, dataset, tmp_path):
    code, out, _ = run(capsys, "train", "--train", str(dataset / "train.txt"), "--val", str(dataset / "val.txt"),
                       "--out", str(tmp_path / "w.spkn"), "--size", "16", "--max-epochs", "1", "--seed", "7")
    assert code == 0 and "seed: 7" in out


def test_eval_reports(capsys, dataset, trained, tmp_path):
    code, out, _ = run(capsys, "eval", "--weights", str(trained), "--manifest", str(dataset / "test.txt"),
                       "--size", "16", "--granularity", "nine", "--report-out", str(tmp_path / "r.csv"),
                       "--plot", str(tmp_path / "cm.txt"), "--json")
    doc = json.loads(out)
    assert code == 0 and doc["samples"] == 6 and doc["granularity"] == "nine"
    assert (tmp_path / "r.csv").read_text().startswith("class,pred_0")
    assert (tmp_path / "cm.txt").stat().st_size > 0


def test_eval_perfect_at_five(capsys, tmp_path):
    tax, make = oracle_model(tmp_path)
    cid = tax.index_of("pvc_grey")
    save_weights(make(cid), tmp_path / "w.spkn")
    write_pnm(tmp_path / "a.pgm", RawImage(np.zeros((8, 8, 1), np.uint8)))
    write_pnm(tmp_path / "b.pgm", RawImage(np.ones((8, 8, 1), np.uint8)))
    # the second image is truly pvc_white, which shares pvc_grey's family
    (tmp_path / "m.txt").write_text("a.pgm\tpvc_grey\nb.pgm\tpvc_white\n")
    code, out, _ = run(capsys, "eval", "--weights", str(tmp_path / "w.spkn"), "--manifest", str(tmp_path / "m.txt"),
                       "--size", "8", "--granularity", "five", "--report-out", str(tmp_path / "r.json"), "--json")
    assert code == 0 and json.loads(out)["accuracy"] == 1.0
    code, out, _ = run(capsys, "eval", "--weights", str(tmp_path / "w.spkn"), "--manifest", str(tmp_path / "m.txt"),
                       "--size", "8", "--json")
    assert json.loads(out)["accuracy"] == 0.5
    assert "macro_f1" in json.loads((tmp_path / "r.json").read_text())


def test_classify_one_json_line(capsys, dataset, trained):
    img = next((dataset / "hardwood_oak").glob("test_*.pgm"))
    code, out, _ = run(capsys, "classify", "--weights", str(trained), "--image", str(img), "--size", "16")
    lines = out.strip().splitlines()
    assert code == 0 and len(lines) == 1
    doc = json.loads(lines[0])
    assert {"class", "confidence", "family9", "family5", "preset", "allowed"} <= set(doc)
    assert 0 < doc["confidence"] <= 1


def test_classify_hazard_refusal(capsys, tmp_path):
    tax, make = oracle_model(tmp_path)
    save_weights(make(tax.index_of("lexan_clear")), tmp_path / "w.spkn")
    write_pnm(tmp_path / "x.ppm", RawImage(np.full((8, 8, 3), 100, np.uint8)))
    code, out, _ = run(capsys, "classify", "--weights", str(tmp_path / "w.spkn"), "--image", str(tmp_path / "x.ppm"))
    doc = json.loads(out)
    assert code == 0 and doc["allowed"] is False and doc["refusal_reason"] == "hazardous_material"


def test_classify_class_count_mismatch(capsys, tmp_path):
    spec = ModelSpec((conv(1, 1), GAP, dense(3), SOFTMAX), num_classes=3)
    m = Model(spec, {"0.kernel": np.zeros((1, 1, 1, 1), np.float32), "0.bias": np.zeros(1, np.float32),
                     "2.weights": np.zeros((1, 3), np.float32), "2.bias": np.zeros(3, np.float32)})
    save_weights(m, tmp_path / "w.spkn")
    write_pnm(tmp_path / "a.pgm", RawImage(np.zeros((8, 8, 1), np.uint8)))
    code, _, err = run(capsys, "classify", "--weights", str(tmp_path / "w.spkn"), "--image", str(tmp_path / "a.pgm"))
    assert code == 3 and "taxonomy" in error_line(err)["message"]


# --- bench ----------------------------------------------------------------

def test_bench_synthetic(capsys):
    code, out, _ = run(capsys, "bench", "--count", "3", "--size", "32", "--json")
    doc = json.loads(out)
    assert code == 0 and doc["samples"] == 3 and doc["seed"] == 42
    assert abs(doc["images_per_second"] * doc["seconds_per_sample"] - 1) <= 1e-6
    assert doc["reference_seconds_per_sample"] == 0.00339 and doc["reference_images_per_second"] == 295


def test_bench_text_mentions_reference(capsys, dataset, trained):
    code, out, _ = run(capsys, "bench", "--weights", str(trained), "--manifest", str(dataset / "test.txt"),
                       "--size", "16")
    assert code == 0 and "hardware-dependent" in out and "0.00339" in out and "seed: 42" in out
