"""DAE-aware control barrier functions: projected dynamics, safety filtering
and verification for semi-explicit control-affine DAEs."""

import jax

# Every quantity in this package is float64; rank decisions at 1e-10 are
# meaningless in single precision.
jax.config.update("jax_enable_x64", True)

__version__ = "0.1.0"

from daecbf.errors import (  # noqa: E402
    DaeCbfError,
    DegenerateRow,
    InconsistentIndex,
    MaxIterations,
    NoBoundarySamples,
    NoConvergence,
    NonFinite,
    OffManifold,
    OracleDisagreement,
    RegularityViolated,
    StructuralInfeasibility,
)

__all__ = [
    "DaeCbfError",
    "DegenerateRow",
    "InconsistentIndex",
    "MaxIterations",
    "NoBoundarySamples",
    "NoConvergence",
    "NonFinite",
    "OffManifold",
    "OracleDisagreement",
    "RegularityViolated",
    "StructuralInfeasibility",
    "__version__",
]
