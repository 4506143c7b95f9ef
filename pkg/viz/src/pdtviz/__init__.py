"""Plotting for pdt experiment artifacts.

Consumes only the training package's file formats (metrics JSONL and analysis
JSON); never imports the training package itself.
"""

from .series import aggregate_curves, ci_half_width  # noqa: F401
