import json
import subprocess
import sys

import pytest

from psno.cli import main
from psno.config import ConfigError, load_config, parse_config

SMALL = ["--n-train", "24", "--n-val", "8", "--n-test", "4"]
TINY_MODEL = {"deeponet": {"branch_widths": [6], "trunk_widths": [5], "basis": 4},
              "fno": {"width": 4, "layers": 1, "modes": 4, "projection_widths": [4]},
              "lnode": {"encoder_widths": [6], "latent_dim": 3, "dynamics_widths": [4],
                        "decoder_widths": [4]}}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config = root / "run.json"
    config.write_text(json.dumps({"model": TINY_MODEL, "training": {"epochs": 2},
                                  "evaluation": {"n_boot": 200}}))
    assert main(["generate", "--config", str(config), "--unstable-fraction", "0.25",
                 "--out", str(root / "coarse"), *SMALL]) == 0
    assert main(["generate", "--config", str(config), "--unstable-fraction", "0.25",
                 "--dt", "5e-5", "--out", str(root / "fine"), *SMALL]) == 0
    return root, config


def test_generate_summary(workspace):
    root, _ = workspace
    summary = json.loads((root / "coarse" / "dataset_summary.json").read_text())
    assert summary["input_length"] == 3 and summary["target_length"] == 29
    assert summary["splits"]["train"] == {"records": 24, "unstable": 6, "stable": 18}
    fine = json.loads((root / "fine" / "dataset_summary.json").read_text())
    assert fine["input_length"] == 4001 and fine["target_length"] == 56001
    for split in ("train", "val", "test"):
        assert (root / "coarse" / f"dataset_{split}.nops").exists()


def test_generate_idempotent(workspace, tmp_path):
    root, config = workspace
    assert main(["generate", "--config", str(config), "--unstable-fraction", "0.25",
                 "--out", str(tmp_path), *SMALL]) == 0
    for name in ("dataset_train.nops", "dataset_val.nops", "dataset_test.nops", "dataset_summary.json"):
        assert (tmp_path / name).read_bytes() == (root / "coarse" / name).read_bytes()


def test_seed_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("PSNO_SEED", "123")
    assert load_config().seeds.data == 123
    assert main(["generate", "--out", str(tmp_path), "--n-train", "2", "--n-val", "0",
                 "--n-test", "0"]) == 0
    summary = json.loads((tmp_path / "dataset_summary.json").read_text())
    assert summary["config"]["seed"] == 123


def test_invalid_config_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"sampling": {"bogus": 1}}))
    assert main(["generate", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "bogus" in capsys.readouterr().err
    assert main(["generate", "--dt", "0.07", "--out", str(tmp_path)]) == 2


def test_config_parsing():
    with pytest.raises(ConfigError):
        parse_config({"extra": {}})
    with pytest.raises(ConfigError):
        parse_config({"model": {"fno": {"depth": 2}}})
    with pytest.raises(ConfigError):
        parse_config({"training": {"epochs": 0}})
    cfg = parse_config({"seeds": {"data": 4}}, env={})
    assert cfg.sampling_config().seed == 4


@pytest.mark.parametrize("kind", ["deeponet", "fno", "lnode-fixed", "lnode-adaptive"])
def test_train_each_model(workspace, kind, capsys):
    root, config = workspace
    ck = root / f"{kind}.ck"
    code = main(["train", "--config", str(config), "--model", kind, "--allow-any-size",
                 "--data", str(root / "coarse" / "dataset"), "--out", str(ck)])
    assert code == 0
    out = capsys.readouterr().out
    assert "parameters:" in out and "best validation loss:" in out
    loss = float(out.split("best validation loss:")[1].split()[0])
    assert loss == loss and loss < float("inf")
    assert ck.exists() and ck.with_suffix(".csv").exists()


def test_train_budget_violation(workspace, capsys):
    root, config = workspace
    code = main(["train", "--config", str(config), "--model", "deeponet",
                 "--data", str(root / "coarse" / "dataset"), "--out", str(root / "x.ck")])
    assert code == 2
    assert "700000" in capsys.readouterr().err


def test_train_missing_data(workspace, capsys):
    root, _ = workspace
    code = main(["train", "--model", "fno", "--data", str(root / "nowhere" / "dataset"),
                 "--out", str(root / "y.ck")])
    assert code == 3
    assert "nowhere" in capsys.readouterr().err


def test_train_reference_count_printed(workspace, capsys):
    root, _ = workspace
    code = main(["train", "--model", "deeponet", "--epochs", "1",
                 "--data", str(root / "coarse" / "dataset"), "--out", str(root / "ref.ck")])
    assert code == 0
    count = int(capsys.readouterr().out.split("parameters:")[1].split()[0])
    assert count == 726_914 and abs(count - 700_000) <= 70_000


def test_eval_oracle_and_checkpoints(workspace, capsys):
    root, config = workspace
    ck = root / "deeponet.ck"
    if not ck.exists():
        pytest.skip("depends on test_train_each_model")
    out = root / "superres.csv"
    code = main(["eval", "--config", str(config), "--coarse-test", str(root / "coarse" / "dataset_test.nops"),
                 "--fine-test", str(root / "fine" / "dataset_test.nops"), "--oracle",
                 "--checkpoint", str(ck), "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("model,coarse_rmse_mean")
    oracle = [line for line in lines if line.startswith("oracle,")][0].split(",")
    assert [float(v) for v in oracle[1:5]] == [0.0, 0.0, 0.0, 0.0]
    again = root / "superres2.csv"
    main(["eval", "--config", str(config), "--coarse-test", str(root / "coarse" / "dataset_test.nops"),
          "--fine-test", str(root / "fine" / "dataset_test.nops"), "--oracle",
          "--checkpoint", str(ck), "--out", str(again)])
    assert again.read_bytes() == out.read_bytes()


def test_eval_mismatched_datasets(workspace, tmp_path, capsys):
    root, config = workspace
    assert main(["generate", "--seed", "99", "--dt", "5e-5", "--out", str(tmp_path), *SMALL]) == 0
    code = main(["eval", "--coarse-test", str(root / "coarse" / "dataset_test.nops"),
                 "--fine-test", str(tmp_path / "dataset_test.nops"), "--oracle",
                 "--out", str(tmp_path / "o.csv")])
    assert code == 2
    assert "share SMIB parameters" in capsys.readouterr().err


def test_eval_missing_and_corrupt_files(workspace, tmp_path):
    root, _ = workspace
    assert main(["eval", "--coarse-test", str(tmp_path / "none.nops"),
                 "--fine-test", str(tmp_path / "none.nops"), "--oracle",
                 "--out", str(tmp_path / "o.csv")]) == 3
    junk = tmp_path / "junk.nops"
    junk.write_bytes(b"not a dataset")
    assert main(["eval", "--coarse-test", str(junk), "--fine-test", str(junk), "--oracle",
                 "--out", str(tmp_path / "o.csv")]) == 3


def test_sweep_and_report(workspace, capsys):
    root, config = workspace
    ck = root / "deeponet.ck"
    if not ck.exists():
        pytest.skip("depends on test_train_each_model")
    sweep = root / "sweep.csv"
    assert main(["sweep", "--config", str(config), "--mix0", str(ck), "--mix20", str(ck),
                 "--points", "21", "--out", str(sweep)]) == 0
    text = sweep.read_text()
    assert "# marker_pm=0.4" in text
    threshold = float(text.split("# marker_threshold=")[1].splitlines()[0])
    # bracketed independently with scipy's DOP853 at rtol 1e-12
    assert abs(threshold - 1.75435918) < 1e-6
    assert "model,pm1,mase_mix0,mase_mix20,flags" in text

    report_dir = root / "report"
    code = main(["report", "--superres", str(root / "superres.csv"), "--sweep", str(sweep),
                 "--checkpoint", str(ck), "--checkpoint", str(root / "fno.ck"),
                 "--test", str(root / "coarse" / "dataset_test.nops"), "--out", str(report_dir)])
    assert code == 0
    svgs = sorted(p.name for p in report_dir.glob("trajectory_*.svg"))
    assert svgs == ["trajectory_deeponet_deeponet.svg", "trajectory_fno_fno.svg"]
    overlay = (report_dir / svgs[0]).read_text()
    assert overlay.startswith("<svg") and "stroke-dasharray" in overlay
    assert (report_dir / "sweep_deeponet.svg").exists()
    summary = (report_dir / "summary.md").read_text()
    assert "Percent Difference" in summary and "instability threshold" in summary


def test_help_lists_defaults():
    out = subprocess.run([sys.executable, "-m", "psno.cli", "--help"], capture_output=True,
                         text=True, check=True).stdout
    for needle in ("generate", "train", "eval", "sweep", "report", "PSNO_SEED", "n_boot",
                   "steps_per_unit", "batch_size"):
        assert needle in out


@pytest.mark.slow
def test_generate_full_size_mix(tmp_path):
    assert main(["generate", "--unstable-fraction", "0.2", "--n-train", "8000", "--n-val", "0",
                 "--n-test", "0", "--jobs", "8", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "dataset_summary.json").read_text())
    assert summary["splits"]["train"]["unstable"] == 1600
