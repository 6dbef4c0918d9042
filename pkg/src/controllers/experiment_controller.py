"""
Experiment Controller

Shared entry point of the CLI and the HTTP API.
Delegates business logic to ExperimentService and StorageService.
"""
import uuid
from typing import Any, Dict, List

from fastapi import HTTPException
from fastapi.concurrency import run_in_threadpool

from core.config import settings
from core.exceptions import QuantFewShotError, ReportNotFoundError
from models.schemas import EvalReport, QuantizeRequest, QuantizeResponse, RunConfig
from modules.fixedpoint import encode_array, quantize_array
from services.experiment_service import ExperimentService
from services.storage_service import StorageService
from utils.error_handler import format_error_response, http_status_for
from utils.logger import logger
from utils.validators import confine_run_paths, normalize_qformat_input, validate_report_name


class ExperimentController:
    """
    Controller for experiment runs and the fixed-point calculator.

    Responsibilities:
    - Run a validated RunConfig and shape its result
    - Map engine errors to HTTP responses
    - Serve stored reports
    """

    @staticmethod
    def run(cfg: RunConfig) -> Dict[str, Any]:
        """
        Execute one command synchronously.

        Returns:
            {"command": ..., "reports": [report dicts]}
        """
        logger.info(f"[INIT] {cfg.command} ({cfg.arch}, mode={cfg.mode}, qformat={cfg.qformat})")
        result = ExperimentService(cfg).run()
        reports = result if isinstance(result, list) else [result]
        return {
            "status": "success",
            "command": cfg.command,
            "reports": [r.model_dump(mode="json") for r in reports],
        }

    @staticmethod
    def summarize(payload: Dict[str, Any]) -> List[str]:
        """Human-readable result lines for the console."""
        lines = []
        for report in payload["reports"]:
            if "rows" in report:
                shots = report["run_config"]["shots"]
                base = report["baseline"]["accuracy"]
                lines.append(f"{shots}-shot float: {base['mean']:.2f}±{base['half_width']:.2f}")
                for row in report["rows"]:
                    fmt = f"Q{row['int_bits']}.{row['frac_bits']}"
                    acc = row["accuracy"]
                    value = f"{acc['mean']:.2f}±{acc['half_width']:.2f}" if acc else f"failed ({row['error']})"
                    lines.append(f"{shots}-shot {fmt} {row['mode']}: {value}")
            else:
                acc = EvalReport.model_validate(report).accuracy
                label = report["mode"] + (f" {report['qformat']}" if report.get("qformat") else "")
                lines.append(f"{report['command']} {label}: {acc.formatted()}")
        return lines

    @staticmethod
    async def run_experiment(cfg: RunConfig) -> Dict[str, Any]:
        request_id = str(uuid.uuid4())[:8]
        try:
            cfg = confine_run_paths(cfg)
            payload = await run_in_threadpool(ExperimentController.run, cfg)
            payload["request_id"] = request_id
            logger.info(f"[{request_id}] [SUCCESS] {cfg.command} complete")
            return payload
        except QuantFewShotError as e:
            logger.error(f"[{request_id}] [ERROR] {cfg.command} failed: {e}")
            raise HTTPException(status_code=http_status_for(e), detail=format_error_response(e, request_id))
        except Exception as e:
            logger.error(f"[{request_id}] [ERROR] {cfg.command} failed: {e}", exc_info=True)
            raise HTTPException(status_code=500, detail=format_error_response(e, request_id))

    @staticmethod
    async def quantize_values(request: QuantizeRequest) -> QuantizeResponse:
        """Round real values onto a Q(i,f) grid; codes are the stored integers."""
        try:
            q, text = normalize_qformat_input(request.qformat)
            return QuantizeResponse(
                qformat=text,
                quantized=[float(v) for v in quantize_array(request.values, q)],
                codes=[int(c) for c in encode_array(request.values, q)],
                range={"min_value": q.min_value(), "max_value": q.max_value(), "step": q.step()},
            )
        except QuantFewShotError as e:
            raise HTTPException(status_code=http_status_for(e), detail=format_error_response(e))

    @staticmethod
    async def list_reports() -> Dict[str, Any]:
        names = StorageService(settings.RESULTS_DIR).list_reports()
        return {"status": "success", "reports": names, "count": len(names)}

    @staticmethod
    async def get_report(name: str) -> Dict[str, Any]:
        try:
            validate_report_name(name)
        except QuantFewShotError as e:
            raise HTTPException(status_code=400, detail=format_error_response(e))
        document = StorageService(settings.RESULTS_DIR).load_report(name)
        if document is None:
            error = ReportNotFoundError(name)
            raise HTTPException(status_code=http_status_for(error), detail=format_error_response(error))
        return {"status": "success", "name": name, "report": document}
