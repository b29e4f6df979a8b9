"""Tests for FEM Parasitics."""
