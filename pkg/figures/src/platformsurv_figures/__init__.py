"""Figure rendering for platformsurv result tables.

Reads the documented CSV schemas (metrics, SE ratios, survival curves) and
renders publication-style panels. No statistics are recomputed here; the CSVs
are the single source of numerical truth.
"""

from .panels import FigureSpec, SchemaMismatch, render_curve_bands, render_metrics_panel, render_ratio_panel

__version__ = "0.1.0"
