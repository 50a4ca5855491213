"""HTTP sentence-encoding service and vector-file exporter."""

from .app import create_app
from .encoder import EncoderUnavailable, HashEncoder, SentenceEncoder
from .export import ExportError, export_vectors, write_vectors

__all__ = [
    "create_app",
    "EncoderUnavailable",
    "HashEncoder",
    "SentenceEncoder",
    "ExportError",
    "export_vectors",
    "write_vectors",
]
