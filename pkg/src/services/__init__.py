"""
Services Package

Business logic services that orchestrate domain operations.

Services:
- experiment_service: train / eval / ptq / sweep orchestration
- storage_service: report persistence (CSV, Markdown, JSON)
"""

from services.experiment_service import ExperimentService
from services.storage_service import StorageService

__all__ = [
    'ExperimentService',
    'StorageService'
]
