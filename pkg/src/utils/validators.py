"""Input validation and normalization for fixed-point formats, report names and run paths"""
import re
from pathlib import Path
from typing import Tuple

from core.config import settings
from core.exceptions import ConfigError, InvalidFormatError
from models.schemas import RunConfig
from modules.fixedpoint import QFormat


_REPORT_NAME = re.compile(r'^[A-Za-z0-9][A-Za-z0-9_.\-]{0,127}$')


def normalize_qformat_input(text: str) -> Tuple[QFormat, str]:
    """
    Normalize a format given as "Q4.4", "q4.4", "4.4" or "4/4".

    Returns:
        Tuple of (QFormat, canonical text)

    Raises:
        InvalidFormatError: If the text is not a valid format

    Examples:
        >>> normalize_qformat_input("q8.8")
        (QFormat(int_bits=8, frac_bits=8), 'Q8.8')
        >>> normalize_qformat_input(" 4/4 ")
        (QFormat(int_bits=4, frac_bits=4), 'Q4.4')
    """
    if not isinstance(text, str) or not text.strip():
        raise InvalidFormatError(str(text), "empty format")
    q = QFormat.parse(text)
    return q, str(q)


def validate_report_name(name: str) -> str:
    """
    Report names are plain file stems; path separators and '..' are rejected.
    """
    if not _REPORT_NAME.match(name) or ".." in name:
        raise ConfigError(f"invalid report name '{name}'", field="name")
    return name


def confine_path(value: str, root: str, field: str) -> str:
    """
    Resolve a path and require it to be root or lie below it.

    Returns:
        The resolved absolute path

    Raises:
        ConfigError: If the path escapes root
    """
    base = Path(root).resolve()
    path = Path(value).resolve()
    if path != base and base not in path.parents:
        raise ConfigError(f"'{value}' is outside {root}", field=field)
    return str(path)


def confine_run_paths(cfg: RunConfig) -> RunConfig:
    """
    Paths of a remotely submitted run: outputs and weights under the results
    directory, raw datasets under the datasets directory.
    """
    update = {"out": confine_path(cfg.out, settings.RESULTS_DIR, "out")}
    if cfg.weights:
        update["weights"] = confine_path(cfg.weights, settings.RESULTS_DIR, "weights")
    if cfg.dataset != "synthetic":
        update["dataset"] = confine_path(cfg.dataset, settings.DATASETS_DIR, "dataset")
    return cfg.model_copy(update=update)
