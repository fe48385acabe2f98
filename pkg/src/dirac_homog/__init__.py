"""Homogenization of Dirac operators with rapidly oscillating potentials.

Cell problems on the unit torus, the effective tensor they produce, bulk gaps
and Chern numbers, interface edge spectra and a resolvent convergence bench.
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"
