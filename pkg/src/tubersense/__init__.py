"""Aboveground RF sensing toolkit for belowground tuber monitoring.

Synthetic multilayer channel simulation, swept-frequency CFR processing,
growth features, LTE heatmap fusion, map/stage evaluation and condition
statistics.
"""

__version__ = "0.1.0"
