"""FastAPI service wrapping the extraction engine."""

from .app import create_app
from .scoring import create_scoring_app

__all__ = ["create_app", "create_scoring_app"]
