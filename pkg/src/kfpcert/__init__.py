"""Phase-space solver and certification engine for kinetic Fokker-Planck equations.

The package is organized around one pipeline: define a model on (x, v) phase
space (`model`), attach a multiplicative weight and certify drift/decay
conditions on it (`weights`), turn certified constants into explicit
convergence rates (`harris`), evolve densities with a conservative
positivity-preserving scheme (`solver`), check quantitative spreading and
lower bounds along trajectories (`positivity`), and validate the functional
identities and regularization estimates the rates rest on (`diagnostics`).
`cli` wires everything to TOML-configured subcommands.
"""

from kfpcert.model import FitzHughNagumo, GeneralKFP, KineticFokkerPlanck
from kfpcert.weights import ComparisonH, GaussianQuadratic, KfpWeight

__all__ = [
    "ComparisonH",
    "FitzHughNagumo",
    "GaussianQuadratic",
    "GeneralKFP",
    "KfpWeight",
    "KineticFokkerPlanck",
]

__version__ = "0.1.0"
