"""Figure rendering for bibc experiment CSV outputs."""

from bibc_plots.figures import FigureSpec, SchemaError, plot_nmse, plot_pe, plot_pg_map, render

__all__ = ["FigureSpec", "SchemaError", "plot_nmse", "plot_pe", "plot_pg_map", "render"]
