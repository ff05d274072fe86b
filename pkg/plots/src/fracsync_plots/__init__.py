"""Diagnostic figures for fracsync outputs.

Strictly a consumer of the published CSV/JSON file formats; no imports from
the simulation package.
"""

__version__ = "0.1.0"

FIGURE_KINDS = (
    "log-R-decay",
    "lambda1-vs-kappa",
    "atom-scatter",
    "attractor-diameter",
    "occupation-vs-v",
)
