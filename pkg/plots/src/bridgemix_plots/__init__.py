"""Renders bridgemix run artifacts into figures.

Pure consumer: reads only the documented CSV/JSON/flat-binary outputs of the
bridgemix CLI and never recomputes model quantities.
"""

__version__ = "0.1.0"
