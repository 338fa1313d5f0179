"""HTTP service exposing model lifecycle, data loading, calculation,
views, write-back, rules, trace and documentation."""

from .app import ModelRegistry, create_app

__all__ = ["ModelRegistry", "create_app"]
