"""Domain types for FEM Parasitics."""
