"""Optimal empirical quantization: measures, transport costs, quantizers and asymptotics."""

__version__ = "0.1.0"
