"""Discovery of PDEs with spatially varying coefficients via spatial kernel sparse regression."""

__version__ = "0.1.0"
