"""accelbench: benchmark construction, three-stage evaluation, and a
GA-driven agent loop for diffusion inference acceleration code."""

__version__ = "0.1.0"
