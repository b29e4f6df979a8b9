"""Desk-scale accuracy suites.

These tests build fixture meshes with tens of thousands of tetrahedra and compare the
extracted parasitics with the analytic oracle. Run them with ``--run-acceptance``.
"""
