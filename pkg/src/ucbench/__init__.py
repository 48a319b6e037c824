"""Numerical testbench for quantitative unique continuation from Cauchy data on an annulus."""

__version__ = "0.1.0"
