"""Bipartite CRF engine for panoptic segmentation.

Combines semantic unary potentials and instance detections into a jointly
consistent panoptic labeling via parallel mean-field inference, with an
exact enumeration oracle, reverse-mode gradients through the unrolled
solver, and PQ/SQ/RQ metrics.
"""

__version__ = "0.1.0"

from .errors import (
    BcrfError,
    FitDivergedError,
    InputError,
    InvariantError,
    SizeGuardError,
)
from .types import (
    BcrfParams,
    FeatureField,
    KernelComponent,
    KernelSpec,
    LabelSchema,
    MarginalPair,
    PanopticMap,
    PotentialField,
    TermWeights,
    default_params,
    potts_matrix,
    validate_schema,
)
