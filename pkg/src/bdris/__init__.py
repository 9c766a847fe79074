"""Beyond-diagonal RIS with lossy transmission-line interconnections."""

__version__ = "0.1.0"
