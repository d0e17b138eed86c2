"""Validated lower bounds on the periods of periodic orbits of polynomial ODEs.

Pipeline: :mod:`systems` (vector fields) -> :mod:`sosbuilder` (exact SOS
identity at fixed C) -> :mod:`sdpengine` (floating solve, pruning, search
over C) -> :mod:`certify` (exact rational certificate and bound).
:mod:`orbitlab` holds the numerical orbit tools and :mod:`cli` the
command line.
"""
from .certify import RationalCertificate, ValidatedBound, ValidationError, finalize, validate
from .polycore import Polynomial, SignSymmetry, parse_polynomial
from .sosbuilder import DegreeConfig, assemble_identity, build_library, flatten
from .systems import SystemSpec, get_system, henon_heiles, lorenz, lorenz_rescaled

__version__ = "0.1.0"
