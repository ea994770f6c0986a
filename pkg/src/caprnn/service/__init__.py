"""FastAPI service wrapping the caprnn pipeline.

Request and response schemas live in :mod:`caprnn.service.schemas`; the app
factory in :mod:`caprnn.service.app`.  All endpoints operate on paths local
to the server process.
"""

from .app import create_app

__all__ = ["create_app"]
