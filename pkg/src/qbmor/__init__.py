"""Input-tailored moment matching for quadratic-bilinear systems."""

__version__ = "0.1.0"
