"""
Workflow definitions for regenerating the worked examples.
"""

from .reproduce_flow import FIGURES, reproduce_figure

__all__ = ["FIGURES", "reproduce_figure"]
