"""
Configuration package for the probabilistic verifier.
"""
from app.config.settings import Settings, ConfigManager, config_manager

__all__ = ["Settings", "ConfigManager", "config_manager"]
