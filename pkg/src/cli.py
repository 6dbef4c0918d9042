"""
Command-line driver.

    python src/cli.py sweep --arch resnet_lite --shots 1 5 --episodes 2000
    python src/cli.py train --mode qat --qformat Q5.5 --epochs 10
    python src/cli.py ptq --weights results/resnet_lite_float.qfxw --int-bits 6 --frac-bits 6
    python src/cli.py eval --mode float --weights results/resnet_lite_float.qfxw

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric divergence.
"""
import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from controllers.experiment_controller import ExperimentController
from core.config import settings
from core.exceptions import ConfigError, QuantFewShotError
from models.schemas import RunConfig
from utils.error_handler import exit_code_for, format_error_response
from utils.logger import logger, set_level


# flag dest -> RunConfig field
_FIELDS = {
    "arch": "arch", "mode": "mode", "qformat": "qformat", "int_bits": "int_bits",
    "frac_bits": "frac_bits", "formats": "formats", "sweep_modes": "sweep_modes",
    "ways": "ways", "queries": "queries", "episodes": "episodes", "seed": "seed",
    "dataset": "dataset", "num_classes": "num_classes", "base_classes": "base_classes",
    "samples_per_class": "samples_per_class", "image_size": "image_size", "noise": "noise",
    "base_width": "base_width", "epochs": "epochs", "batch_size": "batch_size",
    "lr": "learning_rate", "momentum": "momentum", "weight_decay": "weight_decay",
    "preprocess": "preprocess", "weights": "weights", "out": "out",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qfx",
        description="Fixed-point quantization of few-shot CNN backbones (float / QAT / PTQ).",
    )
    parser.add_argument("command", choices=["train", "ptq", "eval", "sweep"])
    parser.add_argument("--config", help="JSON file mirroring RunConfig; flags override it")
    parser.add_argument("--verbose", action="store_true", help="Per-batch training logs (DEBUG)")

    fmt = parser.add_argument_group("fixed-point format")
    fmt.add_argument("--qformat", help="Format as 'Q4.4'")
    fmt.add_argument("--int-bits", type=int, help="Integer bits, sign included")
    fmt.add_argument("--frac-bits", type=int, help="Fraction bits")
    fmt.add_argument("--mode", choices=["float", "qat", "ptq"])
    fmt.add_argument("--formats", nargs="+", help="Sweep formats (default Q3.3 ... Q8.8, Q16.16)")
    fmt.add_argument("--sweep-modes", nargs="+", choices=["qat", "ptq"])

    proto = parser.add_argument_group("few-shot protocol")
    proto.add_argument("--ways", type=int)
    proto.add_argument("--shots", type=int, nargs="+", help="One value, or several for sweep")
    proto.add_argument("--queries", type=int)
    proto.add_argument("--episodes", type=int)
    proto.add_argument("--seed", type=int)
    proto.add_argument("--preprocess", choices=["center_normalize", "center_only", "none"])

    data = parser.add_argument_group("data")
    data.add_argument("--dataset", help="'synthetic' or a raw dataset directory")
    data.add_argument("--num-classes", type=int)
    data.add_argument("--base-classes", type=int)
    data.add_argument("--samples-per-class", type=int)
    data.add_argument("--image-size", type=int)
    data.add_argument("--noise", type=float)

    model = parser.add_argument_group("backbone and training")
    model.add_argument("--arch", choices=["resnet12", "resnet_lite"])
    model.add_argument("--base-width", type=int)
    model.add_argument("--epochs", type=int)
    model.add_argument("--batch-size", type=int)
    model.add_argument("--lr", type=float)
    model.add_argument("--momentum", type=float)
    model.add_argument("--weight-decay", type=float)
    model.add_argument("--hflip", action="store_true", default=None)
    model.add_argument("--cosine-lr", action="store_true", default=None)

    paths = parser.add_argument_group("paths")
    paths.add_argument("--weights", help="Float weight file")
    paths.add_argument("--out", help="Output directory")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """File values first, then every flag that was given."""
    values: Dict[str, Any] = {"seed": settings.DEFAULT_SEED, "ways": settings.DEFAULT_WAYS,
                              "shots": settings.DEFAULT_SHOTS, "queries": settings.DEFAULT_QUERIES,
                              "episodes": settings.DEFAULT_EPISODES}
    if args.config:
        path = Path(args.config)
        try:
            values.update(json.loads(path.read_text()))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config file {path}: {e}", field="config") from e
    values["command"] = args.command

    for dest, field_name in _FIELDS.items():
        value = getattr(args, dest)
        if value is not None:
            values[field_name] = value
    for flag in ("hflip", "cosine_lr"):
        if getattr(args, flag):
            values[flag] = True
    if args.shots:
        values["shots"] = args.shots[0]
        values["sweep_shots"] = list(args.shots)
    if args.int_bits is not None and args.qformat is None:
        values.pop("qformat", None)
    return RunConfig.model_validate(values)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        set_level("DEBUG")
    try:
        cfg = config_from_args(args)
        payload = ExperimentController.run(cfg)
    except ValidationError as e:
        logger.error(f"[ERROR] Invalid configuration: {e}")
        print(json.dumps({"status": "error", "error_code": "ConfigError",
                          "error_message": str(e), "exit_code": 2}), file=sys.stderr)
        return 2
    except QuantFewShotError as e:
        logger.error(f"[ERROR] {type(e).__name__}: {e}")
        print(json.dumps(format_error_response(e)), file=sys.stderr)
        return exit_code_for(e)

    for line in ExperimentController.summarize(payload):
        print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
