"""Core configuration, constants and error types."""

from .config import Settings, configure_logging, get_settings

__all__ = ["get_settings", "configure_logging", "Settings"]
