"""Noncommutative residues of Laplacians on warped products."""

from . import charts, exprlang, geometry, moments, residue, symbols
from .errors import *  # noqa: F401,F403
from .exprlang import Expression, parse
from .geometry import MetricField, WarpedConfig, WarpedProduct, build_warped_product, expression_metric
from .moments import integrate_polynomial_over_sphere, monomial_moment, sphere_area
from .residue import (
    QuadratureGrid,
    ResidueReport,
    SixTerms,
    assembled_density,
    bimetric_eh,
    chart_density,
    closed_form_density,
    density_terms,
    wres,
)

__version__ = "0.1.0"
