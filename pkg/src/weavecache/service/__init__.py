"""HTTP service over the streaming-memory core."""

from .app import create_app

__all__ = ["create_app"]
