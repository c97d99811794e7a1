"""Photon entanglement in cavity electromechanics: Fock-space and Gaussian simulators.

Modules
-------
fock        truncated Fock spaces, operators, canonical states
model       system specifications and their compilation to operators
closedform  exact three-mode Heisenberg propagator
gaussian    drift/diffusion moment engine and Lyapunov steady states
lindblad    master-equation integrators and the stroboscopic scheduler
metrics     Duan variance, fidelity, occupations, purity
device      SI parameter calculator and regime checks
cli         scenario runner
"""

from .errors import (
    ConfigError,
    ConvergenceError,
    EmsqueezeError,
    InvalidStateError,
    NoSteadyStateError,
    RegimeError,
    SpaceError,
    SpecError,
    StepSizeError,
    TruncationError,
    UnsupportedTermError,
)

__version__ = "0.1.0"
