"""Random 2D slice visualization of movement-control optimization landscapes."""

__version__ = "0.1.0"
