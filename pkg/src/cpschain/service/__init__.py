"""JSON/HTTP facade over the framework core."""

from .app import create_app

__all__ = ["create_app"]
