"""memsx: dimensionless laboratory for electrostatically actuated plates."""

__version__ = "0.1.0"
