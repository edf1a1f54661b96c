"""bsdelab: a numerical laboratory for BSDEs with continuous, non-Lipschitz drivers.

Lipschitz inf/sup-convolution envelopes of the driver feed a monotone lattice
scheme for the minimal and maximal solutions.  The dependence tools then
measure how those solutions move when the terminal value or driver changes.
"""

__version__ = "0.1.0"

from .drivers import (  # noqa: E402
    CATALOG,
    Driver,
    DriverFamily,
    TerminalValue,
    as_driver,
    audit_linear_growth,
    audit_lipschitz,
    catalog_lookup,
)
from .dsl import DSLError, EvaluationError, ParseError, evaluate, parse, pretty  # noqa: E402
from .envelope import (  # noqa: E402
    EnvelopeDriver,
    EnvelopeTransformer,
    lower_envelope,
    upper_envelope,
)
from .lattice import AdaptedField, LatticeModel, build  # noqa: E402
from .solver import (  # noqa: E402
    BSDESolver,
    SolutionField,
    maximal_solution,
    minimal_solution,
    picard_iterate,
    solve_lipschitz,
)
from .dependence import (  # noqa: E402
    DependenceReport,
    counterexample_curve,
    lambda_dependence_curve,
    sup_distance,
    uniqueness_gap,
    xi_dependence_curve,
)

__all__ = [
    "__version__", "CATALOG", "Driver", "DriverFamily", "TerminalValue", "as_driver",
    "audit_linear_growth", "audit_lipschitz", "catalog_lookup", "DSLError",
    "EvaluationError", "ParseError", "evaluate", "parse", "pretty", "EnvelopeDriver",
    "EnvelopeTransformer", "lower_envelope", "upper_envelope", "AdaptedField",
    "LatticeModel", "build", "BSDESolver", "SolutionField", "maximal_solution",
    "minimal_solution", "picard_iterate", "solve_lipschitz", "DependenceReport",
    "counterexample_curve", "lambda_dependence_curve", "sup_distance", "uniqueness_gap",
    "xi_dependence_curve",
]
