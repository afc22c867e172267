"""p-harmonic Dirichlet and Perron problems on planar grid domains."""

__version__ = "0.1.0"
