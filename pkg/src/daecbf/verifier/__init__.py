"""Verification of DAE-aware barrier candidates: correctness and feasibility."""

from daecbf.verifier.correctness import CorrectnessVerdict, grid_oracle, verify_correctness
from daecbf.verifier.feasibility import FeasibilityVerdict, stack_margin, verify_feasibility
from daecbf.verifier.lp import FarkasCertificate, LpResult, lp_feasible_arrays, lp_minimize
from daecbf.verifier.report import CHECKS, VerificationReport
from daecbf.verifier.stacks import (
    DEFAULT_BOUNDARY_BAND,
    FeasibilityStack,
    StackKind,
    assemble_stack,
    lp_feasible,
    stack_from_terms,
    stacks_batch,
)

__all__ = [
    "CHECKS",
    "CorrectnessVerdict",
    "DEFAULT_BOUNDARY_BAND",
    "FarkasCertificate",
    "FeasibilityStack",
    "FeasibilityVerdict",
    "LpResult",
    "StackKind",
    "VerificationReport",
    "assemble_stack",
    "grid_oracle",
    "lp_feasible",
    "lp_feasible_arrays",
    "lp_minimize",
    "stack_from_terms",
    "stack_margin",
    "stacks_batch",
    "verify_correctness",
    "verify_feasibility",
]
