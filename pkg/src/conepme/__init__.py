"""Porous medium flow on manifolds with conical singularities.

Cross-section spectra, indicial roots and weight bookkeeping, truncated
asymptotic algebras, residue bases of tip asymptotics, weighted norms, a
semi-implicit solver and exponent fits of its output.
"""

from .errors import (AlgebraError, ConeError, ConfigError, ConstraintError, FitError,
                     GreenError, IndicialError, NormError, QuenchError, SolverError,
                     SpectrumError)
from .geometry import ConeGeometry, CrossSection, WarpData, cutoff
from .spectrum import SpectrumTable, spectrum_analytic, spectrum_numeric
from .indicial import (IndicialChart, ParameterSet, check_parameters, indicial_roots,
                       interpolation_window, mellin_symbol, mellin_symbol_inverse,
                       midpoint_gamma, validate_parameters)
from .asymp import AsympExpansion, add, invert, multiply, real_power
from .green import (contour_quadrature_oracle, full_space, hat_space, residue_closed_form)
from .norms import GriddedFunction, mellin_norm, membership_suite, submultiplicativity_smoke
from .solver import ConeSolver, SolverConfig, evolve, flat_bump, harmonic_seed, step
from .fit import fit_exponent, project_modes, verify_prediction

__version__ = "0.1.0"
