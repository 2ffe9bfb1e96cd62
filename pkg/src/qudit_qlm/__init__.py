"""Qudit circuits, exact reference dynamics and noise simulation for the spin-1 U(1) quantum link model."""

__version__ = "0.1.0"

from .errors import (AllTrajectoriesDiscarded, BudgetError, ConfigError, DimensionError, GaugeViolation,
                     InvalidGate, QLMError, TraceCollapse)
from .hilbert import BasisConfig, PureState, QuditRegister
from .model import LatticeModel, build_terms, enumerate_physical
from .compiler import Circuit, WallSchedule, assemble_trotter, gate_count
from .exact import ExactEvolver, evolve_exact, expm_local
from .noise import NoiseModel, leakage_fraction, run_kraus_physical, run_trajectories
from .records import ObservableRecord
from .scattering import ScatteringProtocol, preset, run_experiment, subtract_free, subtract_vacuum
