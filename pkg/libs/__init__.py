"""Top-level shared package namespace."""
