"""
Opt-in ledger of reproduction reports and search outcomes.
"""

from .repository import RunRecorder, get_run_recorder

__all__ = ["RunRecorder", "get_run_recorder"]
