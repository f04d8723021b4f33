import json

import numpy as np
import pytest

from volseg.cli import EXIT_INPUT_ERROR, EXIT_OK, main
from volseg.volgrid import BinaryMask, read_vvf, write_vvf


@pytest.fixture
def cube_pair(tmp_path):
    def cube(lo):
        d = np.zeros((8, 8, 8), dtype=np.float32)
        d[lo:lo + 4, 1:5, 1:5] = 1.0
        return BinaryMask(d)
    pred, gt = tmp_path / "pred.vvf", tmp_path / "gt.vvf"
    write_vvf(cube(2), pred, "u8")
    write_vvf(cube(1), gt, "u8")
    return str(pred), str(gt)


def test_evaluate(cube_pair, capsys):
    pred, gt = cube_pair
    assert main(["evaluate", "--pred", pred, "--gt", gt]) == EXIT_OK
    blob = json.loads(capsys.readouterr().out)
    assert blob["dsc"] == pytest.approx(0.75)
    assert blob["arvd_pct"] == pytest.approx(0.0)
    assert blob["flags"] == []


def test_evaluate_missing_file(tmp_path, capsys):
    missing = str(tmp_path / "nope.vvf")
    assert main(["evaluate", "--pred", missing, "--gt", missing]) \
        == EXIT_INPUT_ERROR
    assert "input error" in capsys.readouterr().err


def test_evaluate_mhd(tmp_path, capsys):
    d = np.zeros((4, 4, 4), dtype=np.uint8)
    d[:2] = 1
    (tmp_path / "m.raw").write_bytes(d.tobytes(order="F"))
    (tmp_path / "m.mhd").write_text(
        "ObjectType = Image\nNDims = 3\nDimSize = 4 4 4\n"
        "ElementSpacing = 1 1 1\nElementType = MET_UCHAR\n"
        "ElementDataFile = m.raw\n")
    p = str(tmp_path / "m.mhd")
    assert main(["evaluate", "--pred", p, "--gt", p]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["dsc"] == 1.0


@pytest.mark.parametrize("loss", ["dsc", "jaccard", "wce"])
def test_gradcheck_passes(loss, capsys):
    assert main(["gradcheck", "--loss", loss, "--trials", "3"]) == EXIT_OK
    blob = json.loads(capsys.readouterr().out)
    assert blob["failures"] == 0
    assert blob["worst_rel_err"] <= 1e-4


def test_gradcheck_nosquare_reports_defect(capsys):
    assert main(["gradcheck", "--loss", "dsc-nosquare", "--trials", "3"]) \
        == EXIT_OK
    blob = json.loads(capsys.readouterr().out)
    assert blob["defect_constant_gradient_per_class"] is True


def test_gradcheck_zero_trials_vacuous(capsys):
    assert main(["gradcheck", "--trials", "0"]) == EXIT_OK
    blob = json.loads(capsys.readouterr().out)
    assert blob["trials"] == 0
    assert "vacuous" in blob["note"]


def test_theorems_all(capsys):
    assert main(["theorems", "--suite", "all", "--trials", "50"]) == EXIT_OK
    reports = json.loads(capsys.readouterr().out)
    assert [r["theorem"] for r in reports] == ["theorem1", "theorem2",
                                               "theorem3"]
    assert all(r["passed"] for r in reports)


def test_theorems_single_suite(capsys):
    assert main(["theorems", "--suite", "1", "--trials", "20"]) == EXIT_OK
    reports = json.loads(capsys.readouterr().out)
    assert len(reports) == 1


def test_synth_writes_dataset(tmp_path, capsys):
    cfg = tmp_path / "s.cfg"
    cfg.write_text("dims = 16 16 16\ncount = 3\nfg_max = 0.05\n"
                   "blob_radius_min = 1.5\nblob_radius_max = 3\n")
    out = tmp_path / "data"
    assert main(["synth", "--config", str(cfg), "--out", str(out),
                 "--seed", "1"]) == EXIT_OK
    blob = json.loads(capsys.readouterr().out)
    assert blob["count"] == 3
    for i in range(3):
        img = read_vvf(out / f"img_{i:03d}.vvf")
        mask = read_vvf(out / f"mask_{i:03d}.vvf")
        assert img.dims == (16, 16, 16)
        assert set(np.unique(mask.data)) <= {0.0, 1.0}
        assert 0 < mask.data.mean() <= 0.05


def test_synth_bad_config_key(tmp_path, capsys):
    cfg = tmp_path / "s.cfg"
    cfg.write_text("sizes = 16 16 16\n")
    assert main(["synth", "--config", str(cfg),
                 "--out", str(tmp_path / "d")]) == EXIT_INPUT_ERROR
    assert "unknown config keys" in capsys.readouterr().err


def test_train_command(tmp_path, capsys):
    cfg = tmp_path / "t.cfg"
    cfg.write_text("dims = 16 16 16\nfg_max = 0.05\nblob_radius_min = 1.5\n"
                   "blob_radius_max = 3\niterations = 3\nwidths = 2 4 8\n"
                   "n_train = 2\nn_val = 2\nval_interval = 0\n")
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    blob = json.loads(capsys.readouterr().out)
    assert 0.0 <= blob["final_val_dice"] <= 1.0
    assert blob["config"]["iterations"] == 3
    assert (out / "train_log.csv").exists()
    assert (out / "checkpoint.vsc").exists()


def test_train_seed_override_changes_log(tmp_path, capsys):
    cfg = tmp_path / "t.cfg"
    cfg.write_text("dims = 16 16 16\nfg_max = 0.05\nblob_radius_min = 1.5\n"
                   "blob_radius_max = 3\niterations = 2\nwidths = 2 4 8\n"
                   "n_train = 2\nn_val = 1\nval_interval = 0\n")
    outs = []
    for seed in ("0", "1"):
        out = tmp_path / f"run{seed}"
        assert main(["train", "--config", str(cfg), "--out", str(out),
                     "--seed", seed]) == EXIT_OK
        capsys.readouterr()
        outs.append((out / "train_log.csv").read_bytes())
    assert outs[0] != outs[1]


def test_ablate_command(tmp_path, capsys):
    cfg = tmp_path / "a.cfg"
    cfg.write_text("dims = 16 16 16\nfg_max = 0.05\nblob_radius_min = 1.5\n"
                   "blob_radius_max = 3\niterations = 2\nwidths = 2 4 8\n"
                   "n_train = 2\nn_val = 1\nval_interval = 0\n"
                   "table = table6\nseeds = 0\n")
    out = tmp_path / "abl"
    assert main(["ablate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    blob = json.loads(capsys.readouterr().out)
    assert blob["table"] == "table6"
    assert blob["rows"] == 2
    assert (out / "table6.csv").exists()


def test_ablate_requires_table(tmp_path, capsys):
    assert main(["ablate", "--out", str(tmp_path / "x")]) == EXIT_INPUT_ERROR
    assert "table" in capsys.readouterr().err
