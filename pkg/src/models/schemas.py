"""
Request, configuration and report data models using Pydantic.

RunConfig is the single description of an experiment run: the CLI builds it
from flags or a JSON file, the HTTP API accepts it as a request body, and
every report embeds it for provenance.
"""
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from core.config import settings
from core.exceptions import InvalidFormatError
from modules.data.synthetic import DEFAULT_NOISE
from modules.fixedpoint import QFormat
from modules.nn.ops import QuantConfig


# Rows of the bit-width tables: 3/3 ... 8/8 and 16/16
DEFAULT_SWEEP_FORMATS = ["Q3.3", "Q4.4", "Q5.5", "Q6.6", "Q7.7", "Q8.8", "Q16.16"]


def _normalize_format(value: Optional[str]) -> Optional[str]:
    if value is None:
        return None
    try:
        return str(QFormat.parse(value))
    except InvalidFormatError as e:
        raise ValueError(str(e)) from e


# ============= STATISTICS =============

class AccuracyStat(BaseModel):
    """
    Few-shot accuracy over an episode stream: mean percentage and the
    half-width of its 95% normal-approximation confidence interval.
    """
    mean: float = Field(..., ge=0.0, le=100.0, description="Mean episode accuracy (%)", examples=[60.35])
    half_width: float = Field(..., ge=0.0, description="1.96 * std / sqrt(episodes)", examples=[0.17])
    episodes: int = Field(..., ge=1, description="Episodes evaluated", examples=[2000])
    runs: int = Field(1, ge=1, description="Independent runs pooled")

    def formatted(self) -> str:
        """Table cell form, e.g. '60.35±0.17'."""
        return f"{self.mean:.2f}±{self.half_width:.2f}"


class LossRecord(BaseModel):
    epoch: int
    batch: int
    loss: float
    train_acc: float


# ============= TRAINING =============

class TrainConfig(BaseModel):
    """
    Backbone training hyperparameters. mode "qat" trains with fake
    quantization in the loop at qformat.
    """
    model_config = ConfigDict(frozen=True)

    epochs: int = Field(10, ge=0)
    batch_size: int = Field(32, ge=1)
    learning_rate: float = Field(0.05, ge=0.0)
    momentum: float = Field(0.9, ge=0.0)
    weight_decay: float = Field(5e-4, ge=0.0)
    seed: int = 0
    mode: Literal["float", "qat"] = "float"
    qformat: Optional[str] = None
    hflip: bool = False
    cosine_lr: bool = False

    @field_validator("qformat")
    @classmethod
    def _qformat(cls, v: Optional[str]) -> Optional[str]:
        return _normalize_format(v)

    @model_validator(mode="after")
    def _check_mode(self) -> "TrainConfig":
        if self.mode == "qat" and self.qformat is None:
            raise ValueError("qat mode requires qformat")
        return self

    def quant_config(self) -> Optional[QuantConfig]:
        if self.mode != "qat":
            return None
        return QuantConfig.uniform(QFormat.parse(self.qformat))


# ============= RUN CONFIGURATION =============

class RunConfig(BaseModel):
    """
    Complete description of one CLI/API run. Serializing and re-parsing a
    validated RunConfig yields the same RunConfig.
    """
    model_config = ConfigDict(extra="forbid")

    command: Literal["train", "ptq", "eval", "sweep"]
    arch: Literal["resnet12", "resnet_lite"] = "resnet_lite"
    mode: Literal["float", "qat", "ptq"] = "float"
    qformat: Optional[str] = Field(None, description="Fixed-point format, e.g. 'Q4.4'")
    int_bits: Optional[int] = Field(None, ge=1)
    frac_bits: Optional[int] = Field(None, ge=0)
    formats: List[str] = Field(default_factory=list, description="Sweep formats")
    sweep_modes: List[Literal["qat", "ptq"]] = Field(default_factory=lambda: ["qat", "ptq"])

    # few-shot protocol
    ways: int = Field(5, ge=2)
    shots: int = Field(1, ge=1)
    sweep_shots: List[int] = Field(default_factory=list, description="Shot counts a sweep reports on")
    queries: int = Field(15, ge=1)
    episodes: int = Field(2000, ge=1)
    seed: int = 0

    # data
    dataset: str = Field("synthetic", description="'synthetic' or a raw dataset directory")
    num_classes: int = Field(20, ge=2, description="Synthetic classes (base + novel)")
    base_classes: int = Field(10, ge=1, description="Classes used for backbone training")
    samples_per_class: int = Field(60, ge=1)
    image_size: int = Field(32, ge=4)
    noise: float = Field(DEFAULT_NOISE, ge=0.0, description="Pixel noise std of the synthetic gratings")

    # backbone / training
    base_width: int = Field(16, ge=1)
    epochs: int = Field(10, ge=0)
    batch_size: int = Field(32, ge=1)
    learning_rate: float = Field(0.05, ge=0.0)
    momentum: float = Field(0.9, ge=0.0)
    weight_decay: float = Field(5e-4, ge=0.0)
    hflip: bool = False
    cosine_lr: bool = False
    preprocess: Literal["center_normalize", "center_only", "none"] = "center_normalize"

    # paths
    weights: Optional[str] = Field(None, description="Float weight file (PTQ source / eval input)")
    out: str = Field(default_factory=lambda: settings.RESULTS_DIR, description="Output directory")

    @field_validator("qformat")
    @classmethod
    def _qformat(cls, v: Optional[str]) -> Optional[str]:
        return _normalize_format(v)

    @field_validator("formats")
    @classmethod
    def _formats(cls, v: List[str]) -> List[str]:
        return [_normalize_format(f) for f in v]

    @model_validator(mode="after")
    def _check_combination(self) -> "RunConfig":
        if (self.int_bits is None) != (self.frac_bits is None):
            raise ValueError("int_bits and frac_bits must be given together")
        if self.int_bits is not None:
            from_bits = _normalize_format(f"Q{self.int_bits}.{self.frac_bits}")
            if self.qformat is not None and self.qformat != from_bits:
                raise ValueError(f"qformat {self.qformat} conflicts with int/frac bits {from_bits}")
            self.qformat = from_bits
        if self.qformat is not None:
            q = QFormat.parse(self.qformat)
            self.int_bits, self.frac_bits = q.int_bits, q.frac_bits

        if self.command == "sweep":
            if not self.formats:
                self.formats = list(DEFAULT_SWEEP_FORMATS)
            if not self.sweep_modes:
                raise ValueError("sweep needs at least one of qat/ptq in sweep_modes")
            if not self.sweep_shots:
                self.sweep_shots = [self.shots]
            if min(self.sweep_shots) < 1:
                raise ValueError("sweep shot counts must be >= 1")
        else:
            if self.mode in ("qat", "ptq") and self.qformat is None:
                raise ValueError(f"mode '{self.mode}' requires a qformat")
            if len(self.sweep_shots) > 1:
                raise ValueError("several shot counts are only supported by sweep")
        if self.command == "train" and self.mode == "ptq":
            raise ValueError("train supports modes float and qat; PTQ is the 'ptq' command")
        if self.command == "ptq":
            if self.weights is None:
                raise ValueError("ptq requires source float weights (--weights)")
            if self.qformat is None:
                raise ValueError("ptq requires a qformat")
            self.mode = "ptq"
        if self.command == "eval" and self.mode == "ptq" and self.weights is None:
            raise ValueError("eval in ptq mode requires source float weights (--weights)")
        if self.dataset == "synthetic" and self.base_classes >= self.num_classes:
            raise ValueError("base_classes must leave at least one novel class")
        return self

    def quant_format(self) -> Optional[QFormat]:
        return QFormat.parse(self.qformat) if self.qformat else None

    def train_config(self, mode: str = "float", qformat: Optional[str] = None) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            seed=self.seed,
            mode=mode,
            qformat=qformat,
            hflip=self.hflip,
            cosine_lr=self.cosine_lr,
        )


# ============= REPORTS =============

class SweepRow(BaseModel):
    int_bits: Optional[int] = Field(None, description="None for the float baseline row")
    frac_bits: Optional[int] = None
    mode: Literal["float", "qat", "ptq"]
    accuracy: Optional[AccuracyStat] = None
    error: Optional[str] = Field(None, description="Failure message when the sub-run failed")

    @property
    def total_bits(self) -> int:
        return (self.int_bits or 0) + (self.frac_bits or 0)


class SweepReport(BaseModel):
    """
    Bit-width sweep: one row per (format, mode) plus exactly one float
    baseline row; rows sorted by total bit width.
    """
    rows: List[SweepRow]
    baseline: SweepRow
    metadata: Dict[str, object] = Field(default_factory=dict)
    run_config: RunConfig

    @model_validator(mode="after")
    def _check_rows(self) -> "SweepReport":
        if self.baseline.mode != "float":
            raise ValueError("baseline row must be float")
        if any(row.mode == "float" for row in self.rows):
            raise ValueError("exactly one float baseline row is allowed")
        self.rows = sorted(self.rows, key=lambda r: (r.total_bits, r.int_bits or 0, r.mode))
        return self


class EvalReport(BaseModel):
    command: str
    mode: str
    qformat: Optional[str] = None
    accuracy: AccuracyStat
    preprocess: str
    run_config: RunConfig
    artifacts: Dict[str, str] = Field(default_factory=dict)
    metadata: Dict[str, object] = Field(default_factory=dict)


class PtqSidecar(BaseModel):
    """JSON sidecar written next to a PTQ weight file."""
    weight_format: str
    activation_format: str
    enabled: bool
    mean_vector: List[float]
    preprocess: str
    source_sha256: Optional[str] = None
    transfer_max_error: Dict[str, float] = Field(default_factory=dict)


# ============= API MODELS =============

class QuantizeRequest(BaseModel):
    values: List[float] = Field(..., min_length=1, description="Real values to quantize", examples=[[9.1, 0.03, -100.0]])
    qformat: str = Field(..., description="Fixed-point format", examples=["Q4.4"])


class QuantizeResponse(BaseModel):
    status: str = Field("success")
    qformat: str
    quantized: List[float]
    codes: List[int]
    range: Dict[str, float] = Field(..., description="min_value, max_value and step")


class ErrorResponse(BaseModel):
    status: str = Field("error", description="Response status")
    error_code: str = Field(..., description="Error class name", examples=["InvalidFormatError"])
    error_message: str = Field(..., description="Human-readable error message")
    exit_code: Optional[int] = Field(None, description="CLI exit code for this error")
    request_id: Optional[str] = Field(None, description="Request identifier for tracking")
