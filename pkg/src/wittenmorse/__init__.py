"""Morse inequalities through the Witten deformation, verified numerically.

Subpackages by concern: ``spectral`` (sparse symmetric eigenproblems),
``simplicial`` (discrete exterior calculus), ``morse`` (critical points and
the inequalities), ``witten`` (deformed complexes on meshes and grids),
``susy`` (supercharge and spectral pairing), ``semiclassical`` (harmonic
models and Schrodinger grids), ``harness`` and ``cli`` (experiments).
"""

from . import errors, harness, morse, semiclassical, simplicial, smith, spectral, susy, witten
from .config import ExperimentConfig
from .errors import WittenMorseError
from .harness import ReportRow, emit_csv, emit_json, run
from .morse import MorseFunctionSpec
from .simplicial import HodgeStarSet, SimplicialComplex
from .spectral import SparseSymOperator, SpectrumRequest, SpectrumResult, kernel_dimension, smallest_eigs
from .witten import DeformedComplex, GridWittenComplex, TorusGrid

__version__ = "0.1.0"
