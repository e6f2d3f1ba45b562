from .render import FigureRequest, SchemaError, render

__all__ = ["FigureRequest", "SchemaError", "render"]
