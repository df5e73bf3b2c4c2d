"""Block SDP data model, interior-point solver and SDPA sparse io."""

from .problem import SdpObjective, SdpProblem, SdpRow, SdpSolution, check_solution
from .presolve import StructuralInfeasibility, presolve
from .sdpa import SdpaFormatError, export_sdpa, import_sdpa
from .solver import SolveOptions, solve

__all__ = [
    "SdpObjective",
    "SdpProblem",
    "SdpRow",
    "SdpSolution",
    "check_solution",
    "StructuralInfeasibility",
    "presolve",
    "SdpaFormatError",
    "export_sdpa",
    "import_sdpa",
    "SolveOptions",
    "solve",
]
