"""Collision dynamics of planar point masses."""

from ._core import cli, enumerate_cc, preset_names, simulate, solve_cc

__all__ = ["cli", "enumerate_cc", "preset_names", "simulate", "solve_cc"]
