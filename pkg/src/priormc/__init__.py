"""Nuclear-norm matrix completion with prior information via correlation maximisation."""

__version__ = "0.1.0"
