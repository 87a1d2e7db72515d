"""octrl: a modular optimal-control toolkit.

Layers, bottom up: core types (states, trajectories, systems, controllers),
ODE integrators, derivatives (finite differences and forward-mode AD),
cost and constraint containers, linear-quadratic solvers (CARE/DARE/LQR and
the Gauss-Newton Riccati sweep), nonlinear trajectory optimization (iLQR and
GNMS), and a receding-horizon NMPC wrapper. The ``octrl`` CLI solves
problems defined in INI-style config files.
"""

from . import (cli, config, constraint, core, cost, diff, dual, integrate, lq,
               models, mpc, nloc, parallel)
from .errors import (ConfigurationError, ConvergenceFault, LineSearchFault,
                     NumericalFault, OctrlError, ParseError,
                     RegularizationFault, SingularityFault, StiffnessFault,
                     ValidationError)

__version__ = "0.1.0"

__all__ = [
    "cli", "config", "constraint", "core", "cost", "diff", "dual",
    "integrate", "lq", "models", "mpc", "nloc", "parallel",
    "OctrlError", "ConfigurationError", "NumericalFault", "StiffnessFault",
    "SingularityFault", "ConvergenceFault", "RegularizationFault",
    "LineSearchFault", "ParseError", "ValidationError",
    "__version__",
]
