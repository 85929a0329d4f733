"""Simulator and analysis toolchain for offloading load sequences over a CXL fabric."""

__version__ = "0.1.0"

FORMAT_VERSION = 1
