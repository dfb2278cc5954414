from pathlib import Path

import numpy as np
import pytest

from mpikit import io
from mpikit.cli import main
from mpikit.io import parse_key_values
from mpikit.nn import ModelConfig, build_model, evaluate
from mpikit.nn import gradcheck as gc_mod
from mpikit.nn.config import load_train_config
from mpikit.nn.train import Dataset

ROOT = Path(__file__).resolve().parents[1]

SMOKE_CFG = ("epochs=2\nlr=0.001\nwidths=4,8,8\ndecoder_width=8\naux_width=4\n"
             "foreground_mode=ground_truth\nseed=5\n")
# losses logged by the first run of the smoke config below, frozen
SMOKE_LOSSES = [("1.7616073760471904", "0.6872533042006352", "1.0743540718465552"),
                ("1.7422020975646348", "0.6860571513961433", "1.0561449461684915")]


def records(text):
    return [dict(kv.split("=", 1) for kv in line.split()) for line in text.splitlines()
            if "=" in line and not line.startswith("#")]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "d"
    assert main(["gen-data", "--out", str(out), "--n", "10", "--h", "32", "--w", "64", "--seed", "9"]) == 0
    return out


def test_gen_data_layout(tmp_path, capsys):
    assert main(["gen-data", "--out", str(tmp_path / "a"), "--n", "8", "--seed", "2"]) == 0
    out = capsys.readouterr().out
    assert "seed=2" in out and "n=8" in out
    triplets, header = io.read_dataset(tmp_path / "a")
    assert len(triplets) == 8 and header["count"] == "8"
    assert len(list((tmp_path / "a").glob("*.p?m"))) == 24


def test_gen_data_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["gen-data", "--out", str(tmp_path / name), "--n", "3", "--seed", "4"]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


@pytest.mark.parametrize("argv", [
    ["gen-data", "--out", "x", "--n", "0"],
    ["gen-data", "--out", "x", "--n", "3", "--bogus", "1"],
    ["gradcheck", "--scope", "everything"],
    ["ablate", "--data", "x", "--out", "y", "--handlers", "magic"],
    ["nonexistent-command"],
    [],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == 2


def _write_label_fixture(tmp_path):
    labels = np.array([[0, 0, 1, 1, 1], [0, 0, 1, 1, 1], [2, 2, 2, 1, 1], [2, 2, 2, 2, 1],
                       [0, 2, 2, 2, 2]], dtype=np.uint8)
    mask = np.ones((5, 5), dtype=np.uint8)
    mask[1:4, 1] = 0
    mask[3, 1:4] = 0
    io.write_labels(tmp_path / "labels.pgm", labels)
    io.write_mask(tmp_path / "mask.pgm", mask)
    return labels, mask


def test_inpaint_golden(tmp_path):
    _write_label_fixture(tmp_path)
    code = main(["inpaint", "--labels", str(tmp_path / "labels.pgm"), "--mask", str(tmp_path / "mask.pgm"),
                 "--out", str(tmp_path / "out.pgm"), "--erosion", "0"])
    assert code == 0
    golden = np.array([[0, 0, 1, 1, 1], [0, 0, 1, 1, 1], [2, 0, 2, 1, 1], [2, 0, 1, 1, 1],
                       [0, 2, 2, 2, 2]], dtype=np.uint8)
    np.testing.assert_array_equal(io.read_labels(tmp_path / "out.pgm"), golden)


def test_inpaint_no_foreground_is_identity(tmp_path):
    labels, _ = _write_label_fixture(tmp_path)
    io.write_mask(tmp_path / "full.pgm", np.ones((5, 5), np.uint8))
    for mode in ("zero", "masked"):
        assert main(["inpaint", "--labels", str(tmp_path / "labels.pgm"), "--mask", str(tmp_path / "full.pgm"),
                     "--out", str(tmp_path / "o.pgm"), "--mode", mode]) == 0
        assert (tmp_path / "o.pgm").read_bytes() == (tmp_path / "labels.pgm").read_bytes()


def test_inpaint_errors(tmp_path, capsys):
    _write_label_fixture(tmp_path)
    assert main(["inpaint", "--labels", str(tmp_path / "missing.pgm"), "--mask", str(tmp_path / "mask.pgm"),
                 "--out", str(tmp_path / "o.pgm")]) == 2
    io.write_mask(tmp_path / "fg.pgm", np.zeros((5, 5), np.uint8))
    code = main(["inpaint", "--labels", str(tmp_path / "labels.pgm"), "--mask", str(tmp_path / "fg.pgm"),
                 "--out", str(tmp_path / "o.pgm")])
    assert code == 1
    assert "background" in capsys.readouterr().err
    io.write_mask(tmp_path / "small.pgm", np.ones((2, 2), np.uint8))
    assert main(["inpaint", "--labels", str(tmp_path / "labels.pgm"), "--mask", str(tmp_path / "small.pgm"),
                 "--out", str(tmp_path / "o.pgm")]) == 2


def test_train_smoke_reproduces_frozen_losses(dataset, tmp_path, capsys):
    cfg = tmp_path / "smoke.cfg"
    cfg.write_text(SMOKE_CFG)
    assert main(["train", "--data", str(dataset), "--config", str(cfg), "--out", str(tmp_path / "t")]) == 0
    out = capsys.readouterr().out
    assert "# resolved config" in out and "seed=5" in out
    log = records((tmp_path / "t" / "training_log.txt").read_text())
    assert [(r["loss"], r["loss_f"], r["loss_b"]) for r in log] == SMOKE_LOSSES
    assert set(io.read_checkpoint(tmp_path / "t" / "checkpoint")) == set(
        build_model(load_train_config(SMOKE_CFG)[0]).params)
    result = records((tmp_path / "t" / "result.txt").read_text())[0]
    assert set(result) == {"iou_all", "iou_fg", "seed"}
    # the written config reproduces the run
    assert load_train_config((tmp_path / "t" / "config.txt").read_text()) == load_train_config(SMOKE_CFG)


def test_train_lr_zero_keeps_initial_metrics(dataset, tmp_path, capsys):
    cfg = tmp_path / "zero.cfg"
    cfg.write_text(SMOKE_CFG.replace("lr=0.001", "lr=0").replace("epochs=2", "epochs=1"))
    assert main(["train", "--data", str(dataset), "--config", str(cfg), "--out", str(tmp_path / "t")]) == 0
    capsys.readouterr()
    triplets, _ = io.read_dataset(dataset)
    val = Dataset.from_triplets(triplets[-2:])
    model_cfg, _ = load_train_config(SMOKE_CFG)
    expect = evaluate(build_model(model_cfg), val)
    got = records((tmp_path / "t" / "training_log.txt").read_text())[0]
    assert float(got["iou_all"]) == expect[0]


def test_train_divergence_exit_code(dataset, tmp_path, capsys):
    cfg = tmp_path / "boom.cfg"
    cfg.write_text(SMOKE_CFG.replace("lr=0.001", "lr=1e30"))
    assert main(["train", "--data", str(dataset), "--config", str(cfg), "--out", str(tmp_path / "t")]) == 1
    assert "non-finite" in capsys.readouterr().err


def test_train_bad_config(dataset, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("learning_rate=1\n")
    assert main(["train", "--data", str(dataset), "--config", str(cfg), "--out", str(tmp_path / "t")]) == 2


def test_default_preset_is_mid_with_fake_masks():
    model, opt = load_train_config((ROOT / "configs" / "toy_default.cfg").read_text())
    assert model.mpi_position == "mid" and model.fake_masks and model.occlusion_handling == "mpi"


def test_eval_identity_and_undefined(dataset, tmp_path, capsys):
    assert main(["eval", "--pred", str(dataset), "--gt", str(dataset), "--fg-mask", str(dataset)]) == 0
    rec = records(capsys.readouterr().out)[-1]
    assert rec == {"iou_all": "1.000000", "iou_fg": "1.000000"}
    io.write_labels(tmp_path / "l.pgm", np.zeros((3, 3), np.uint8))
    io.write_mask(tmp_path / "m.pgm", np.ones((3, 3), np.uint8))
    assert main(["eval", "--pred", str(tmp_path / "l.pgm"), "--gt", str(tmp_path / "l.pgm"),
                 "--fg-mask", str(tmp_path / "m.pgm")]) == 0
    rec = records(capsys.readouterr().out)[-1]
    assert rec["iou_fg"] == "undefined"


def test_eval_golden_fixture(tmp_path, capsys):
    gt = np.array([[0, 0, 1, 1], [0, 0, 1, 1], [2, 2, 2, 2], [2, 2, 2, 2]], dtype=np.uint8)
    pred = gt.copy()
    pred[1, 1] = 1
    hole = np.ones((4, 4), np.uint8)
    hole[1:3, 1:3] = 0
    io.write_labels(tmp_path / "p.pgm", pred)
    io.write_labels(tmp_path / "g.pgm", gt)
    io.write_mask(tmp_path / "h.pgm", hole)
    assert main(["eval", "--pred", str(tmp_path / "p.pgm"), "--gt", str(tmp_path / "g.pgm"),
                 "--fg-mask", str(tmp_path / "h.pgm")]) == 0
    out = capsys.readouterr().out
    assert records(out)[-1] == {"iou_all": "0.850000", "iou_fg": "0.500000"}
    assert "IoU (foreground region)" in out


def test_eval_label_out_of_range(tmp_path, capsys):
    io.write_labels(tmp_path / "p.pgm", np.full((2, 2), 7, np.uint8))
    io.write_labels(tmp_path / "g.pgm", np.zeros((2, 2), np.uint8))
    io.write_mask(tmp_path / "m.pgm", np.ones((2, 2), np.uint8))
    assert main(["eval", "--pred", str(tmp_path / "p.pgm"), "--gt", str(tmp_path / "g.pgm"),
                 "--fg-mask", str(tmp_path / "m.pgm")]) == 2
    assert "out of range" in capsys.readouterr().err


def test_ablate_single_run_equals_train(dataset, tmp_path, capsys):
    cfg = tmp_path / "smoke.cfg"
    cfg.write_text(SMOKE_CFG)
    assert main(["ablate", "--data", str(dataset), "--out", str(tmp_path / "a"), "--config", str(cfg),
                 "--positions", "mid", "--handlers", "mpi", "--seeds", "5"]) == 0
    assert main(["train", "--data", str(dataset), "--config", str(cfg), "--out", str(tmp_path / "t")]) == 0
    capsys.readouterr()
    run_log = (tmp_path / "a" / "runs" / "mid_mpi_on_seed5.log").read_text()
    assert run_log == (tmp_path / "t" / "training_log.txt").read_text()
    rows = records((tmp_path / "a" / "results.txt").read_text())
    assert len(rows) == 1
    row = rows[0]
    assert row["position"] == "mid" and row["handler"] == "mpi" and row["seeds"] == "5"
    train_result = records((tmp_path / "t" / "result.txt").read_text())[0]
    assert float(row["iou_fg_mean"]) == pytest.approx(float(train_result["iou_fg"]), abs=1e-6)
    assert "IoU(fg)" in (tmp_path / "a" / "results_table.txt").read_text()


def test_ablate_grid_parses(dataset, tmp_path, capsys):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(SMOKE_CFG.replace("epochs=2", "epochs=1"))
    assert main(["ablate", "--data", str(dataset), "--out", str(tmp_path / "a"), "--config", str(cfg),
                 "--positions", "input,late", "--handlers", "mpi,blackout", "--seeds", "1,2",
                 "--fake-masks", "on,off"]) == 0
    capsys.readouterr()
    text = (tmp_path / "a" / "results.txt").read_text()
    rows = records(text)
    assert len(rows) == 8
    for line in text.splitlines():
        parse_key_values(line.replace(" ", "\n"))
    assert {(r["position"], r["handler"], r["fake_masks"]) for r in rows} == {
        (p, h, f) for p in ("input", "late") for h in ("mpi", "blackout") for f in ("on", "off")}


def test_ablate_threads_env(dataset, tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(SMOKE_CFG.replace("epochs=2", "epochs=1"))
    outs = []
    for threads in ("1", "2"):
        monkeypatch.setenv("MPIKIT_THREADS", threads)
        out = tmp_path / f"a{threads}"
        assert main(["ablate", "--data", str(dataset), "--out", str(out), "--config", str(cfg),
                     "--positions", "mid", "--handlers", "mpi,blackout", "--seeds", "0"]) == 0
        outs.append((out / "results.txt").read_text())
    assert f"threads=2" in capsys.readouterr().out
    assert outs[0] == outs[1]


def test_gradcheck_exit_codes(monkeypatch, capsys):
    assert main(["gradcheck", "--scope", "conv"]) == 0
    assert "status=PASS" in capsys.readouterr().out
    factory, eps, _ = gc_mod.SCOPES["conv"]
    monkeypatch.setitem(gc_mod.SCOPES, "conv", (factory, eps, 0.0))
    assert main(["gradcheck", "--scope", "conv"]) == 1
    out = capsys.readouterr().out
    assert "status=FAIL" in out and "worst=" in out
