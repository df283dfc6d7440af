"""srgbnoise test suite."""
