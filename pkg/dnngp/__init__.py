# Dynamic nearest-neighbor Gaussian process toolkit

__version__ = "1.0.0"
