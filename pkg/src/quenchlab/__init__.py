"""quenchlab: entanglement production after coupling quenches of chaotic systems.

Simulation of random-matrix transition ensembles and coupled kicked rotors,
with analytic theory curves for the entanglement entropies and a
configuration-driven command line runner.
"""

__version__ = "0.1.0"

from .errors import (
    AccuracyError,
    ConfigError,
    DomainError,
    NumericalFailure,
    QuenchLabError,
)

__all__ = [
    "AccuracyError",
    "ConfigError",
    "DomainError",
    "NumericalFailure",
    "QuenchLabError",
    "__version__",
]
