"""HTTP service: membership filters and experiments over FastAPI."""

from .app import create_app

__all__ = ["create_app"]
