"""FEM Parasitics: impedance extraction from tagged tetrahedral meshes."""

# FEM Parasitics

__version__ = "0.1.0"
