"""Event-stream perception with adaptive sampling, motion hypergraphs and dual-space GCNs."""

__version__ = "0.1.0"
