"""
Fixed-Point Few-Shot Quantization Engine - Service

HTTP surface of the engine: a fixed-point calculator, experiment runs and
stored report browsing. The command-line driver (cli.py) runs the same
controller.
"""
from contextlib import asynccontextmanager

import uvicorn
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, RedirectResponse

from api.routes import router
from core.config import settings
from core.exceptions import QuantFewShotError
from utils.error_handler import format_error_response, http_status_for
from utils.logger import logger


# ============= APPLICATION LIFECYCLE =============

@asynccontextmanager
async def lifespan(app: FastAPI):
    logger.info("=" * 60)
    logger.info("[INIT] Fixed-Point Few-Shot Quantization Engine")
    logger.info(f"[CONFIG] Environment: {settings.ENVIRONMENT}")
    logger.info(f"[CONFIG] Results directory: {settings.RESULTS_DIR}")
    logger.info(f"[LINK] Swagger Docs: http://localhost:{settings.PORT}/docs")
    logger.info("=" * 60)

    yield  # Server runs here

    logger.info("[INIT] Server shutting down")


# ============= FASTAPI APPLICATION SETUP =============

app = FastAPI(
    title="Fixed-Point Few-Shot Quantization API",
    description="""
Fixed-point Q(i,f) quantization of CNN backbones for few-shot learning.

## Quick Start
```json
POST /api/v1/quantize {"values": [7.95, 0.40], "qformat": "Q4.4"}
POST /api/v1/experiments {"command": "eval", "mode": "qat", "qformat": "Q8.8", "episodes": 100}
GET  /api/v1/reports
```
    """,
    version="1.0.0",
    lifespan=lifespan,
    docs_url="/docs",
    redoc_url="/redoc",
)

# ============= API ROUTES =============

app.include_router(
    router,
    prefix="/api/v1",
    tags=["Quantization"]
)


# ============= ERROR HANDLING =============

@app.exception_handler(QuantFewShotError)
async def engine_error_handler(request: Request, exc: QuantFewShotError) -> JSONResponse:
    """Engine errors not mapped by a controller: status by error family, body as in the CLI."""
    logger.error(f"[ERROR] {request.url.path}: {type(exc).__name__}: {exc}")
    return JSONResponse(status_code=http_status_for(exc), content=format_error_response(exc))


# ============= ROOT ENDPOINTS =============

@app.get("/", include_in_schema=False)
async def root():
    return RedirectResponse(url="/docs")


@app.get("/health", tags=["Monitoring"])
async def simple_health():
    """Basic server status for load balancers and monitoring tools."""
    return {
        "status": "healthy",
        "service": "qfx-fewshot",
        "version": "1.0.0"
    }


# ============= SERVER STARTUP =============

if __name__ == "__main__":
    uvicorn.run(
        "main:app",
        host="0.0.0.0",
        port=settings.PORT,
        reload=settings.ENVIRONMENT == "development",
        log_level=settings.LOG_LEVEL.lower(),
        access_log=settings.ENVIRONMENT != "test"
    )
