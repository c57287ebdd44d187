"""Cooperative ISAC network analysis: closed forms, Monte Carlo oracles and tradeoff search."""
from __future__ import annotations

__version__ = "0.1.0"
