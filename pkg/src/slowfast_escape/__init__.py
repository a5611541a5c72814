"""Switching times of slow-fast bistable systems from optimal paths and center-manifold reduction."""

__version__ = "0.1.0"
