"""
Experiment Service

Orchestrates the modules into the four commands:
- train: float or QAT backbone training on base classes, then evaluation
- eval:  few-shot evaluation of a float checkpoint (float, QAT-style
         fake-quantized inference, or the PTQ pipeline)
- ptq:   the six-step PTQ pipeline from a float weight file, with artifacts
- sweep: QAT (fresh training per format) and PTQ (one shared float
         checkpoint) over a list of formats, plus the float baseline

Every accuracy is measured by the same feature pipeline (average vector of
base-class features, standardization, NCM) on one seeded episode stream.
"""
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Dict, List, Mapping, Optional

import numpy as np

from core.config import settings
from models.schemas import EvalReport, RunConfig, SweepReport, SweepRow
from modules.backbone import BackboneModel, build_arch
from modules.data import (
    LabeledImages,
    SyntheticDatasetSpec,
    generate_synthetic,
    load_cifar_like,
    read_weights,
    split_classes,
    write_weights,
)
from modules.fewshot import EpisodePlan, sample_episodes
from modules.fixedpoint import QFormat
from modules.nn.ops import QuantConfig
from modules.ptq import evaluate_pipeline, run_ptq
from modules.training import TrainResult, init_head, train
from services.storage_service import StorageService
from utils.error_handler import ErrorHandler
from utils.logger import logger


CI_DEFINITION = "1.96 * std(ddof=1) / sqrt(episodes)"


@dataclass
class ExperimentData:
    base: LabeledImages
    novel: LabeledImages


def _float_config() -> QuantConfig:
    # formats are unused when disabled
    return QuantConfig.uniform(QFormat(16, 16), enabled=False)


class ExperimentService:
    """
    Runs one RunConfig. Data and episode plans are built once per service
    and shared by every measurement of the run.
    """

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.storage = StorageService(cfg.out)
        self._data: Optional[ExperimentData] = None

    # ============= DATA =============

    @property
    def data(self) -> ExperimentData:
        if self._data is None:
            cfg = self.cfg
            if cfg.dataset == "synthetic":
                full = generate_synthetic(SyntheticDatasetSpec(
                    num_classes=cfg.num_classes,
                    samples_per_class=cfg.samples_per_class,
                    image_size=cfg.image_size,
                    seed=cfg.seed,
                    noise=cfg.noise,
                ))
            else:
                full = load_cifar_like(cfg.dataset)
            base, novel = split_classes(full, cfg.base_classes)
            logger.info(f"[DATA] {len(base)} base samples, {len(novel)} novel samples")
            self._data = ExperimentData(base=base, novel=novel)
        return self._data

    def plans(self, shots: int) -> List[EpisodePlan]:
        cfg = self.cfg
        return sample_episodes(self.data.novel.labels, cfg.ways, shots, cfg.queries, cfg.episodes, cfg.seed)

    def new_model(self) -> BackboneModel:
        return build_arch(self.cfg.arch, self.data.base.channels, self.cfg.base_width, seed=self.cfg.seed)

    def metadata(self, shots: int) -> Dict[str, object]:
        cfg = self.cfg
        meta: Dict[str, object] = {
            "arch": cfg.arch,
            "seed": cfg.seed,
            "protocol": {"ways": cfg.ways, "shots": shots, "queries": cfg.queries, "episodes": cfg.episodes},
            "dataset": cfg.dataset,
            "preprocess": cfg.preprocess,
            "ci": CI_DEFINITION,
            "hyperparameters": "desk-scale defaults",
        }
        if settings.REPORT_TIMESTAMPS:
            meta["timestamp"] = datetime.now(timezone.utc).isoformat()
        return meta

    # ============= BUILDING BLOCKS =============

    def train_backbone(self, mode: str, qformat: Optional[str] = None) -> TrainResult:
        model = self.new_model()
        head = init_head(model.feature_dim, len(self.data.base.classes()), seed=self.cfg.seed)
        logger.info(f"[TRAIN] {self.cfg.arch} {mode}{' ' + qformat if qformat else ''}: "
                    f"{model.count_parameters()} parameters, {self.cfg.epochs} epochs")
        return train(model, head, self.data.base, self.cfg.train_config(mode, qformat))

    def float_store(self) -> tuple:
        """(float weights, source SHA-256) from --weights, or a freshly trained float checkpoint."""
        if self.cfg.weights:
            return read_weights(self.cfg.weights)
        result = self.train_backbone("float")
        self.storage.save_loss_history(f"loss_{self.cfg.arch}_float", result.history)
        path = str(self.storage.storage_dir / f"{self.cfg.arch}_float.qfxw")
        write_weights(path, result.model.weights)
        return read_weights(path)

    def evaluate_float(self, store: Mapping[str, np.ndarray], plans: List[EpisodePlan]):
        """Float pipeline: the PTQ pipeline with quantization disabled."""
        _, accuracy = run_ptq(store, self.new_model(), _float_config(), self.data.base.images,
                              plans, self.data.novel.images, self.cfg.preprocess)
        return accuracy

    def evaluate_qat(self, model: BackboneModel, q: QFormat, plans: List[EpisodePlan]):
        """Fake-quantized inference of an unfolded model (batch-norm in float, output rounded)."""
        _, accuracy = evaluate_pipeline(model, QuantConfig.uniform(q), self.data.base.images,
                                        plans, self.data.novel.images, self.cfg.preprocess)
        return accuracy

    def _eval_report(self, command: str, mode: str, accuracy, artifacts: Dict[str, str]) -> EvalReport:
        cfg = self.cfg
        report = EvalReport(
            command=command,
            mode=mode,
            qformat=cfg.qformat if mode != "float" else None,
            accuracy=accuracy,
            preprocess=cfg.preprocess,
            run_config=cfg,
            artifacts=artifacts,
            metadata=self.metadata(cfg.shots),
        )
        stem = f"{command}_{cfg.arch}_{mode}{'_' + cfg.qformat if mode != 'float' else ''}_{cfg.shots}shot"
        report.artifacts.update(self.storage.save_eval(stem, report))
        return report

    # ============= COMMANDS =============

    def cmd_train(self) -> EvalReport:
        cfg = self.cfg
        qformat = cfg.qformat if cfg.mode == "qat" else None
        result = self.train_backbone(cfg.mode, qformat)
        tag = f"{cfg.arch}_{cfg.mode}{'_' + qformat if qformat else ''}"
        artifacts = {
            "weights": str(self.storage.storage_dir / f"{tag}.qfxw"),
            "loss_history": self.storage.save_loss_history(f"loss_{tag}", result.history),
        }
        write_weights(artifacts["weights"], result.model.weights)

        plans = self.plans(cfg.shots)
        if cfg.mode == "qat":
            accuracy = self.evaluate_qat(result.model, cfg.quant_format(), plans)
        else:
            accuracy = self.evaluate_float(result.model.weights, plans)
        return self._eval_report("train", cfg.mode, accuracy, artifacts)

    def cmd_eval(self) -> EvalReport:
        cfg = self.cfg
        if cfg.weights:
            store, _ = read_weights(cfg.weights)
        else:
            logger.info("[EVAL] No --weights given; evaluating the seeded random initialization")
            store = self.new_model().weights
        plans = self.plans(cfg.shots)
        if cfg.mode == "float":
            accuracy = self.evaluate_float(store, plans)
        elif cfg.mode == "qat":
            accuracy = self.evaluate_qat(self.new_model().with_weights(store), cfg.quant_format(), plans)
        else:
            _, accuracy = run_ptq(store, self.new_model(), QuantConfig.uniform(cfg.quant_format()),
                                  self.data.base.images, plans, self.data.novel.images, cfg.preprocess)
        return self._eval_report("eval", cfg.mode, accuracy, {})

    def cmd_ptq(self) -> EvalReport:
        cfg = self.cfg
        store, sha = read_weights(cfg.weights)
        artifacts, accuracy = run_ptq(
            store, self.new_model(), QuantConfig.uniform(cfg.quant_format()),
            self.data.base.images, self.plans(cfg.shots), self.data.novel.images,
            cfg.preprocess, source_sha256=sha,
        )
        paths = artifacts.save(str(self.storage.storage_dir / f"ptq_{cfg.arch}_{cfg.qformat}"))
        return self._eval_report("ptq", "ptq", accuracy, paths)

    def cmd_sweep(self) -> List[SweepReport]:
        """
        One SweepReport per shot count. QAT backbones are trained once per
        format and PTQ rows share one float checkpoint; a failing row is
        recorded with its error and the sweep continues.
        """
        cfg = self.cfg
        formats = [QFormat.parse(f) for f in cfg.formats]
        logger.info(f"[SWEEP] {len(formats)} formats x {cfg.sweep_modes}, shots {cfg.sweep_shots}")

        store, _ = self.float_store()

        qat_models: Dict[str, Optional[BackboneModel]] = {}
        qat_errors: Dict[str, str] = {}
        if "qat" in cfg.sweep_modes:
            for q in formats:
                with ErrorHandler(f"QAT training at {q}") as handler:
                    qat_models[str(q)] = self.train_backbone("qat", str(q)).model
                if handler.error is not None:
                    qat_errors[str(q)] = handler.message

        reports = []
        for shots in cfg.sweep_shots:
            plans = self.plans(shots)
            baseline = SweepRow(mode="float", accuracy=self.evaluate_float(store, plans))
            rows: List[SweepRow] = []
            for q in formats:
                for mode in cfg.sweep_modes:
                    rows.append(self._sweep_row(q, mode, store, plans, qat_models, qat_errors))

            run_config = cfg.model_copy(update={"shots": shots})
            report = SweepReport(rows=rows, baseline=baseline, metadata=self.metadata(shots), run_config=run_config)
            paths = self.storage.save_sweep(f"sweep_{cfg.arch}_{shots}shot", report)
            logger.info(f"[SUCCESS] Sweep {shots}-shot: {paths['markdown']}")
            reports.append(report)
        return reports

    def _sweep_row(self, q: QFormat, mode: str, store, plans, qat_models, qat_errors) -> SweepRow:
        row = SweepRow(int_bits=q.int_bits, frac_bits=q.frac_bits, mode=mode)
        if mode == "qat" and str(q) in qat_errors:
            row.error = qat_errors[str(q)]
            return row
        with ErrorHandler(f"{mode.upper()} evaluation at {q}") as handler:
            if mode == "qat":
                row.accuracy = self.evaluate_qat(qat_models[str(q)], q, plans)
            else:
                _, row.accuracy = run_ptq(store, self.new_model(), QuantConfig.uniform(q),
                                          self.data.base.images, plans, self.data.novel.images,
                                          self.cfg.preprocess)
        if handler.error is not None:
            logger.warning(f"[WARN] Sweep row {q} {mode} failed; continuing")
            row.error = handler.message
        logger.info(f"[SWEEP] {q} {mode}: {row.accuracy.formatted() if row.accuracy else 'failed'}")
        return row

    def run(self):
        commands = {
            "train": self.cmd_train,
            "eval": self.cmd_eval,
            "ptq": self.cmd_ptq,
            "sweep": self.cmd_sweep,
        }
        return commands[self.cfg.command]()
