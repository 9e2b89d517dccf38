"""Current-source-model logic simulation with LUT and neural-network backends."""

__version__ = "0.1.0"
