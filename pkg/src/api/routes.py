"""FastAPI routes for the fixed-point calculator and experiment runs"""
from fastapi import APIRouter

from controllers.experiment_controller import ExperimentController
from models.schemas import QuantizeRequest, QuantizeResponse, RunConfig


router = APIRouter()


@router.post("/quantize", response_model=QuantizeResponse)
async def quantize_values(request: QuantizeRequest) -> QuantizeResponse:
    """
    **Quantize Values**

    Round real values to the nearest point of a Q(i,f) grid (ties to even,
    saturating at the range ends).

    **Input**: `{"values": [9.1, 0.03], "qformat": "Q4.4"}`
    **Output**: quantized values, integer codes and the format's range
    """
    return await ExperimentController.quantize_values(request)


@router.post("/experiments")
async def run_experiment(config: RunConfig):
    """
    **Run Experiment**

    Execute a train / eval / ptq / sweep RunConfig and return its reports.
    Reports are also written to the run's output directory.
    """
    return await ExperimentController.run_experiment(config)


@router.get("/reports")
async def list_reports():
    """
    **List Reports**

    Names of the JSON reports stored in the results directory.
    """
    return await ExperimentController.list_reports()


@router.get("/reports/{name}")
async def get_report(name: str):
    """
    **Get Report**

    One stored report by name.
    """
    return await ExperimentController.get_report(name)
