"""Figure rendering for wncc experiment CSV outputs."""

from .figures import (FIGURE_KINDS, FigureSpec, RenderResult, SchemaError,
                      render, render_all)

__version__ = "0.1.0"
