"""Folded space-time tensor networks for quenched Ising chains."""

from __future__ import annotations

__version__ = "0.1.0"
