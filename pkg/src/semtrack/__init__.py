"""Semantic-distillation multi-object tracking testbed for low-quality video."""

from semtrack.autodiff import Matrix, Parameter, Tape

__all__ = ["Matrix", "Parameter", "Tape"]
__version__ = "0.1.0"
