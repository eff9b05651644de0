"""Opcode-frequency malware triage toolkit.

Extracts per-file Dalvik opcode histograms from raw ``.dex`` binaries,
assembles labeled feature datasets, and evaluates plain versus
cluster-then-classify detection pipelines.
"""

__version__ = "0.1.0"

from .errors import DroidlensError

__all__ = ["DroidlensError", "__version__"]
