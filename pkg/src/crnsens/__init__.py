"""Exact simulation and Girsanov / finite-difference sensitivity estimation
for stochastic reaction networks under classical system-size scaling."""

__version__ = "0.1.0"
