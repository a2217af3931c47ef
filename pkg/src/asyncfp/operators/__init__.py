"""Operator library: every fixed-point map the solver framework ships."""

from .admm import AdmmDualOp, AdmmSide, ConsensusAdmmOp, DecentralAdmmOp
from .fbs import FbsL1LogisticOp, FbsL1QuadraticOp
from .gradient import (
    DecentralGradOp,
    GradOp,
    LocalSmooth,
    SparseTerm,
    decentral_grad_step,
    metropolis_weights,
)
from .jacobi import JacobiOp
from .local import (
    BoxIndicator,
    IsoQuadratic,
    L1Norm,
    LocalFunction,
    QuadraticForm,
    SmoothFn,
    ZeroFn,
    soft_threshold,
)
from .prs import BoxProj, HalfspaceProj, PrsFeasibilityOp

__all__ = [
    "AdmmDualOp",
    "AdmmSide",
    "BoxIndicator",
    "BoxProj",
    "ConsensusAdmmOp",
    "DecentralAdmmOp",
    "DecentralGradOp",
    "FbsL1LogisticOp",
    "FbsL1QuadraticOp",
    "GradOp",
    "HalfspaceProj",
    "IsoQuadratic",
    "JacobiOp",
    "L1Norm",
    "LocalFunction",
    "LocalSmooth",
    "PrsFeasibilityOp",
    "QuadraticForm",
    "SmoothFn",
    "SparseTerm",
    "ZeroFn",
    "decentral_grad_step",
    "metropolis_weights",
    "soft_threshold",
]
