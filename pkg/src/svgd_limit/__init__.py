"""Numerical lab for the vanishing-bandwidth limit of mean-field SVGD."""
__version__ = "0.3.0"
