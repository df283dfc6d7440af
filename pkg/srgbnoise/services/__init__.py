"""Service package initialization."""

__all__ = []
