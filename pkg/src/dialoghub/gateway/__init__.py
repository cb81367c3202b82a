"""Network surface: HTTP app, connector client, config, and CLI."""

from .config import GatewayConfig, load_config

__all__ = ["GatewayConfig", "load_config"]
