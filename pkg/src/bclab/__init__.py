"""Monte Carlo laboratory for BC-type hypergroups on Grassmannians and their random walks."""

from .algebra import FMatrix, ScalarField
from .chamber import ChamberPoint, ModelParams, inverse_log_cosh, log_cosh_map
from .sampling import MeasureSpec, RngStream

__version__ = "0.1.0"

__all__ = [
    "ChamberPoint",
    "FMatrix",
    "MeasureSpec",
    "ModelParams",
    "RngStream",
    "ScalarField",
    "__version__",
    "inverse_log_cosh",
    "log_cosh_map",
]
