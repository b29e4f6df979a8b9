"""Configuration, output and mesh-generation helpers."""
