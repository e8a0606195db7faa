"""embed-service: HTTP sentence-embedding endpoint for stackdigest."""

__version__ = "0.1.0"

from .app import ServiceConfig, create_app
from .backends import HashingBackend, load_backend

__all__ = ["ServiceConfig", "create_app", "HashingBackend", "load_backend"]
