"""Finite-element core: mesh, elements, assembly and linear solves."""
