"""
Controllers Package

Request handlers shared by the CLI and the HTTP API.
Controllers are responsible for:
- Calling appropriate services
- Mapping errors to exit codes / HTTP responses
- Formatting responses

No business logic should be in controllers - delegate to services.
"""

from controllers.experiment_controller import ExperimentController

__all__ = [
    'ExperimentController'
]
