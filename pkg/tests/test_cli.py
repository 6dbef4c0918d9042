"""
Command-line and run configuration tests on a tiny synthetic setup.
"""
import json
import logging

import numpy as np
import pytest
from pydantic import ValidationError

from cli import build_parser, config_from_args, main
from core.exceptions import DivergenceError, NonFiniteError, WeightMismatchError
from models.schemas import DEFAULT_SWEEP_FORMATS, AccuracyStat, RunConfig
from modules.backbone import build_arch
from modules.data import write_weights
from services import ExperimentService
from utils.error_handler import exit_code_for
from utils.logger import logger, set_level


TINY = [
    "--num-classes", "8", "--base-classes", "3", "--samples-per-class", "12",
    "--image-size", "8", "--base-width", "2", "--epochs", "1", "--batch-size", "8",
    "--ways", "5", "--queries", "5", "--episodes", "5",
]


def _tiny_config(command, tmp_path, **overrides):
    values = {
        "command": command, "num_classes": 8, "base_classes": 3, "samples_per_class": 12,
        "image_size": 8, "base_width": 2, "epochs": 1, "batch_size": 8, "ways": 5,
        "queries": 5, "episodes": 5, "out": str(tmp_path),
    }
    values.update(overrides)
    return RunConfig.model_validate(values)


# ============= RUN CONFIGURATION =============

@pytest.mark.parametrize("values", [
    {"command": "sweep"},
    {"command": "sweep", "formats": ["4.4", "q8.8"], "sweep_shots": [1, 5], "sweep_modes": ["ptq"]},
    {"command": "ptq", "weights": "w.qfxw", "int_bits": 6, "frac_bits": 6},
    {"command": "eval", "mode": "qat", "qformat": "Q5.5", "preprocess": "center_only"},
    {"command": "train", "mode": "float", "hflip": True, "cosine_lr": True, "learning_rate": 0.0},
])
def test_run_config_round_trip(values):
    cfg = RunConfig.model_validate(values)
    assert RunConfig.model_validate(cfg.model_dump()) == cfg
    assert RunConfig.model_validate_json(cfg.model_dump_json()) == cfg


def test_config_normalization():
    cfg = RunConfig.model_validate({"command": "sweep", "formats": ["4/4"]})
    assert cfg.formats == ["Q4.4"]
    assert cfg.sweep_shots == [1]
    assert RunConfig.model_validate({"command": "sweep"}).formats == DEFAULT_SWEEP_FORMATS

    ptq = RunConfig.model_validate({"command": "ptq", "weights": "w", "qformat": "q3.5"})
    assert (ptq.mode, ptq.qformat, ptq.int_bits, ptq.frac_bits) == ("ptq", "Q3.5", 3, 5)


@pytest.mark.parametrize("values", [
    {"command": "eval", "mode": "qat"},
    {"command": "eval", "int_bits": 4},
    {"command": "eval", "qformat": "Q4.4", "int_bits": 5, "frac_bits": 5},
    {"command": "train", "mode": "ptq", "qformat": "Q4.4"},
    {"command": "ptq", "qformat": "Q4.4"},
    {"command": "eval", "mode": "ptq", "qformat": "Q4.4"},
    {"command": "eval", "num_classes": 5, "base_classes": 5},
    {"command": "eval", "sweep_shots": [1, 5]},
    {"command": "sweep", "sweep_modes": []},
    {"command": "eval", "ways": 1},
    {"command": "eval", "unknown_field": 1},
    {"command": "deploy"},
])
def test_invalid_combinations(values):
    with pytest.raises(ValidationError):
        RunConfig.model_validate(values)


def test_flags_override_config_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"episodes": 50, "arch": "resnet12", "qformat": "Q4.4"}))
    args = build_parser().parse_args(["eval", "--config", str(path), "--episodes", "7", "--mode", "qat"])
    cfg = config_from_args(args)
    assert (cfg.episodes, cfg.arch, cfg.mode, cfg.qformat) == (7, "resnet12", "qat", "Q4.4")


def test_int_and_frac_flags_replace_file_format(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"qformat": "Q4.4"}))
    args = build_parser().parse_args(["eval", "--config", str(path), "--int-bits", "6", "--frac-bits", "2"])
    assert config_from_args(args).qformat == "Q6.2"


def test_shots_flag():
    cfg = config_from_args(build_parser().parse_args(["sweep", "--shots", "1", "5"]))
    assert cfg.shots == 1 and cfg.sweep_shots == [1, 5]


# ============= EXIT CODES =============

def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["eval", "--mode", "qat", "--out", str(tmp_path)]) == 2
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["exit_code"] == 2
    assert main(["eval", "--qformat", "Q0.4", "--out", str(tmp_path)]) == 2
    assert main(["eval", "--config", str(tmp_path / "missing.json")]) == 2


def test_data_errors_exit_3(tmp_path):
    assert main(["eval", "--dataset", str(tmp_path / "nowhere"), "--out", str(tmp_path)]) == 3
    assert main(["ptq", "--weights", str(tmp_path / "missing.qfxw"), "--qformat", "Q4.4",
                 "--out", str(tmp_path)] + TINY) == 3


def test_numeric_errors_map_to_4():
    assert exit_code_for(DivergenceError(1, 2, float("nan"))) == 4
    assert exit_code_for(NonFiniteError("conv")) == 4
    assert exit_code_for(RuntimeError("other")) == 1


def test_ptq_with_mismatched_architecture_lists_every_tensor(tmp_path, capsys):
    weights = tmp_path / "lite_w2.qfxw"
    write_weights(str(weights), build_arch("resnet_lite", 1, 2).weights)
    argv = ["ptq", "--weights", str(weights), "--qformat", "Q8.8", "--out", str(tmp_path)] + TINY
    argv[argv.index("--base-width") + 1] = "4"
    assert main(argv) == 3
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error_code"] == "WeightMismatchError"
    assert "block1.conv1.weight" in error["error_message"]
    assert "block2.shortcut.conv.weight" in error["error_message"]


# ============= COMMANDS =============

def test_untrained_model_matches_random_init_eval(tmp_path):
    trained = ExperimentService(_tiny_config("train", tmp_path / "t", epochs=0)).run()
    evaluated = ExperimentService(_tiny_config("eval", tmp_path / "e")).run()
    assert trained.accuracy == evaluated.accuracy


def test_train_writes_weights_and_loss_history(tmp_path):
    report = ExperimentService(_tiny_config("train", tmp_path, mode="qat", qformat="Q8.8")).run()
    assert report.qformat == "Q8.8"
    assert (tmp_path / "resnet_lite_qat_Q8.8.qfxw").is_file()
    lines = (tmp_path / "loss_resnet_lite_qat_Q8.8.csv").read_text().splitlines()
    assert lines[0] == "epoch,batch,loss,train_acc"
    assert len(lines) == 1 + 5  # 36 base samples in batches of 8


def test_ptq_command_saves_artifacts(tmp_path):
    weights = tmp_path / "float.qfxw"
    write_weights(str(weights), build_arch("resnet_lite", 1, 2).weights)
    report = ExperimentService(_tiny_config("ptq", tmp_path, weights=str(weights), qformat="Q6.6")).run()
    sidecar = json.loads((tmp_path / "ptq_resnet_lite_Q6.6" / "ptq_weights.json").read_text())
    assert sidecar["weight_format"] == "Q6.6"
    assert report.mode == "ptq" and report.artifacts["sidecar"].endswith("ptq_weights.json")


def test_sweep_is_byte_identical_across_runs(tmp_path, capsys):
    argv = TINY + ["--formats", "Q4.4", "Q8.8", "--shots", "1", "2"]
    assert main(["sweep", "--out", str(tmp_path / "a")] + argv) == 0
    assert main(["sweep", "--out", str(tmp_path / "b")] + argv) == 0
    out = capsys.readouterr().out
    assert "1-shot float:" in out and "2-shot Q8.8 ptq:" in out

    for shots in (1, 2):
        for ext in ("csv", "md"):
            name = f"sweep_resnet_lite_{shots}shot.{ext}"
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    lines = (tmp_path / "a" / "sweep_resnet_lite_1shot.csv").read_text().splitlines()
    assert lines[0] == "int_bits,frac_bits,total_bits,mode,mean,half_width,episodes,error"
    assert [line.split(",")[3] for line in lines[1:]] == ["ptq", "qat", "ptq", "qat", "float"]
    markdown = (tmp_path / "a" / "sweep_resnet_lite_1shot.md").read_text()
    assert "| int bit-width | frac bit-width | QAT | PTQ |" in markdown
    assert "| float | float |" in markdown


def test_sweep_records_failed_rows(tmp_path, monkeypatch):
    cfg = _tiny_config("sweep", tmp_path, formats=["Q8.8"], sweep_modes=["ptq"])
    service = ExperimentService(cfg)

    def broken(*args, **kwargs):
        raise WeightMismatchError(["x"], [])

    monkeypatch.setattr("services.experiment_service.run_ptq", broken)
    monkeypatch.setattr(service, "evaluate_float", lambda store, plans: AccuracyStat(mean=50.0, half_width=1.0, episodes=5))
    report = service.run()[0]
    assert report.rows[0].accuracy is None
    assert report.rows[0].error.startswith("WeightMismatchError")
    assert "Failed rows:" in (tmp_path / "sweep_resnet_lite_1shot.md").read_text()


def test_verbose_flag_enables_debug_logs(tmp_path):
    try:
        assert main(["eval", "--mode", "qat", "--verbose", "--out", str(tmp_path)]) == 2
        assert logger.level == logging.DEBUG
        assert all(handler.level == logging.DEBUG for handler in logger.handlers)
    finally:
        set_level("INFO")
