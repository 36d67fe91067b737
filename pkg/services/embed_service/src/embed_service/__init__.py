"""Reference embedding/generation service."""

__version__ = "0.1.0"

from .app import ServiceConfig, make_server, script_key  # noqa: F401
from .vectors import hash_unit_vector, image_vector, text_vector  # noqa: F401
