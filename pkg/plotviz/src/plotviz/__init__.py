"""Figure regeneration from the experiment harness CSVs.

Every figure is a pure function of its input tables: slopes and fitted
exponents are read from the exponent table, never recomputed, so the
plots cannot drift from the numbers the harness reported.
"""

from .figures import FIGURES, render
from .io import SchemaError, load_table

__all__ = ["FIGURES", "render", "SchemaError", "load_table"]
