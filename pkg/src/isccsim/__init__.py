"""Deterministic simulator for joint sensing, communication, and computing
resource orchestration in an edge learning subnetwork."""

__version__ = "0.1.0"
