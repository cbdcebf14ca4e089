"""Bloch oscillations of a condensate in a tilted ring lattice.

Mean-field (DNLSE) and exact Bose-Hubbard dynamics, Floquet stability,
Husimi ensembles and Floquet-Bogoliubov depletion.
"""

__version__ = "0.1.0"

from .integrate import IntegrationError, IntegratorConfig  # noqa: E402,F401
from .lattice import (  # noqa: E402,F401
    LatticeParams,
    MeanFieldState,
    ModeState,
    energy,
    mode_populations,
    momentum,
    to_modes,
    to_sites,
)
