"""Bregman-divergence information geometry and reverse em-problem solvers
for classical, wiretap and classical-quantum channel capacities."""

__version__ = "0.1.0"
