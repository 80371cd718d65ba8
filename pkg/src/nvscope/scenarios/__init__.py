"""Bundled scenario configuration files."""
