"""Coherent population trapping and phonon-limited spin relaxation in a
Lambda-type emitter: level structure, master-equation dynamics, spectrum
and pulse-sequence synthesis, temperature laws and the fits that connect
them.

Set ``SIVCPT_NUMBA=0`` before import to run the hot kernels as plain numpy.
"""

from ._jit import USE_NUMBA
from .dynamics import LambdaParams
from .fitting import FitProblem, FitResult, least_squares
from .levels import LevelParams
from .phonons import ThermalModel
from .pulses import PulseSequence
from .signals import FluorescenceTrace, Spectrum

__version__ = "0.1.0"

__all__ = [
    "USE_NUMBA", "LambdaParams", "FitProblem", "FitResult", "least_squares", "LevelParams",
    "ThermalModel", "PulseSequence", "FluorescenceTrace", "Spectrum", "__version__",
]
