"""Safety verification for parameterized programs under release-acquire."""

__version__ = "0.1.0"
