"""Unit tests for models, schemas and services."""
