"""Transfer operators and period functions for Hecke-type Fuchsian groups."""

__version__ = "0.1.0"
