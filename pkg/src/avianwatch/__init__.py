"""Weekly epidemic-intelligence analysis of case reports and online signals."""

__version__ = "0.1.0"
