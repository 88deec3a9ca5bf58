"""Shared domain types: label schema, score fields, factorized marginals,
model parameters, and panoptic label maps.

Every type is an immutable value object; numpy payloads are copied on
construction and stored read-only, so instances are safe to share across
concurrent readers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import InputError, InvariantError

SIMPLEX_TOL = 1e-6

SPATIAL = "spatial"
BILATERAL = "bilateral"
FEATURE_DIMS = {SPATIAL: 2, BILATERAL: 5}


def _frozen_array(values, dtype):
    out = np.array(values, dtype=dtype, order="C", copy=True)
    out.setflags(write=False)
    return out


def _require_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise InvariantError(f"{what} contains non-finite entries")


# ---------------------------------------------------------------------------
# Label schema


@dataclass(frozen=True)
class LabelSchema:
    """The semantic label set (stuff/things partition) plus the instance
    label set.

    Semantic ids are dense integers 0..L-1 fixed by the order of `labels`;
    names are metadata. Instance id 0 is reserved for "no instance"; ids
    1..N map to detections in input order, with `instance_class[t-1]`
    giving the semantic class of instance t.
    """

    labels: tuple[str, ...]
    stuff: frozenset[int]
    things: frozenset[int]
    instance_class: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(str(n) for n in self.labels))
        object.__setattr__(self, "stuff", frozenset(int(i) for i in self.stuff))
        object.__setattr__(self, "things", frozenset(int(i) for i in self.things))
        object.__setattr__(
            self, "instance_class", tuple(int(c) for c in self.instance_class)
        )

    @property
    def num_labels(self) -> int:
        return len(self.labels)

    @property
    def num_instances(self) -> int:
        return len(self.instance_class)

    @property
    def num_instance_labels(self) -> int:
        """Size of the instance label set, including the reserved id 0."""
        return self.num_instances + 1

    @property
    def stuff_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.stuff))

    @property
    def things_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.things))

    def class_of(self, t: int) -> Optional[int]:
        """Semantic class of instance label t; None encodes the null class."""
        if t == 0:
            return None
        return self.instance_class[t - 1]

    @property
    def cross_classes(self) -> tuple[Optional[int], ...]:
        """Index order of the cross-compatibility matrix: null, then things."""
        return (None,) + self.things_ids

    @property
    def cross_size(self) -> int:
        return len(self.things) + 1

    def cross_index(self, c: Optional[int]) -> int:
        if c is None:
            return 0
        return 1 + self.things_ids.index(c)

    def with_instances(self, instance_class: Sequence[int]) -> "LabelSchema":
        return replace(self, instance_class=tuple(int(c) for c in instance_class))


def validate_schema(schema: LabelSchema) -> None:
    """Check every schema invariant; raises InputError on the first violation."""
    labels = set(range(schema.num_labels))
    if schema.num_labels == 0:
        raise InputError("schema has no semantic labels")
    if len(set(schema.labels)) != schema.num_labels:
        raise InputError("label names are not unique")
    overlap = schema.stuff & schema.things
    if overlap:
        raise InputError(f"labels in both stuff and things: {sorted(overlap)}")
    union = schema.stuff | schema.things
    if union != labels:
        missing = sorted(labels - union)
        extra = sorted(union - labels)
        if missing:
            raise InputError(f"labels in neither stuff nor things: {missing}")
        raise InputError(f"stuff/things reference unknown label ids: {extra}")
    for t, c in enumerate(schema.instance_class, start=1):
        if c not in schema.things:
            raise InputError(
                f"instance {t} has class {c}, which is not a things label"
            )


# ---------------------------------------------------------------------------
# Dense per-pixel fields


@dataclass(frozen=True)
class PotentialField:
    """An H x W x C field of real scores, stored pixel-major/channel-minor.

    Used for unaries in negative-log space, marginal distributions, and
    message accumulators. Entries must be finite.
    """

    height: int
    width: int
    channels: int
    data: np.ndarray

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0 or self.channels <= 0:
            raise InputError("field dimensions must be positive")
        data = _frozen_array(self.data, np.float64)
        if data.shape != (self.height * self.width, self.channels):
            raise InputError(
                f"field data has shape {data.shape}, expected "
                f"({self.height * self.width}, {self.channels})"
            )
        _require_finite(data, "potential field")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_grid(cls, grid) -> "PotentialField":
        grid = np.asarray(grid, dtype=np.float64)
        if grid.ndim != 3:
            raise InputError(f"expected an (H, W, C) array, got shape {grid.shape}")
        h, w, c = grid.shape
        return cls(h, w, c, grid.reshape(h * w, c))

    @classmethod
    def zeros(cls, height: int, width: int, channels: int) -> "PotentialField":
        return cls(height, width, channels, np.zeros((height * width, channels)))

    def grid(self) -> np.ndarray:
        """Read-only (H, W, C) view of the data."""
        return self.data.reshape(self.height, self.width, self.channels)

    @property
    def num_pixels(self) -> int:
        return self.height * self.width


def check_simplex_rows(data: np.ndarray, what: str, tol: float = SIMPLEX_TOL) -> None:
    if np.min(data) < -tol:
        raise InvariantError(f"{what} has negative entries (min {np.min(data)})")
    sums = data.sum(axis=1)
    worst = np.max(np.abs(sums - 1.0))
    if worst > tol:
        raise InvariantError(f"{what} rows do not sum to 1 (max deviation {worst})")


@dataclass(frozen=True)
class MarginalPair:
    """Factorized per-pixel distributions: q over semantic labels, r over
    instance labels. Every row of both fields is a simplex point within
    SIMPLEX_TOL."""

    q: PotentialField
    r: PotentialField

    def __post_init__(self):
        if (self.q.height, self.q.width) != (self.r.height, self.r.width):
            raise InputError("q and r cover different pixel grids")
        check_simplex_rows(self.q.data, "semantic marginals")
        check_simplex_rows(self.r.data, "instance marginals")

    @property
    def height(self) -> int:
        return self.q.height

    @property
    def width(self) -> int:
        return self.q.width

    @property
    def num_pixels(self) -> int:
        return self.q.num_pixels


@dataclass(frozen=True)
class FeatureField:
    """Per-pixel feature vectors; dimension 2 for spatial (x, y) and 5 for
    bilateral (x, y, r, g, b) with color kept in raw 0-255 units."""

    height: int
    width: int
    data: np.ndarray

    def __post_init__(self):
        data = _frozen_array(self.data, np.float64)
        if data.ndim != 2 or data.shape[0] != self.height * self.width:
            raise InputError(
                f"feature data has shape {data.shape}, expected "
                f"({self.height * self.width}, dim)"
            )
        _require_finite(data, "feature field")
        object.__setattr__(self, "data", data)

    @property
    def dim(self) -> int:
        return self.data.shape[1]


# ---------------------------------------------------------------------------
# Kernel and parameter specifications


@dataclass(frozen=True)
class KernelComponent:
    """One Gaussian in a similarity mixture: a weight and per-dimension
    bandwidths over either spatial or bilateral features."""

    weight: float
    bandwidths: tuple[float, ...]
    kind: str = SPATIAL

    def __post_init__(self):
        object.__setattr__(self, "weight", float(self.weight))
        object.__setattr__(
            self, "bandwidths", tuple(float(b) for b in self.bandwidths)
        )
        if self.kind not in FEATURE_DIMS:
            raise InputError(f"unknown feature kind {self.kind!r}")
        if len(self.bandwidths) != FEATURE_DIMS[self.kind]:
            raise InputError(
                f"{self.kind} kernels need {FEATURE_DIMS[self.kind]} bandwidths, "
                f"got {len(self.bandwidths)}"
            )
        if self.weight < 0:
            raise InputError("kernel weight must be >= 0")
        if any(b <= 0 for b in self.bandwidths):
            raise InputError("kernel bandwidths must be > 0")


@dataclass(frozen=True)
class KernelSpec:
    """A mixture-of-Gaussians similarity specification."""

    components: tuple[KernelComponent, ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))

    @property
    def total_weight(self) -> float:
        """Similarity of a pixel with itself: sum of component weights."""
        return float(sum(c.weight for c in self.components))


@dataclass(frozen=True)
class TermWeights:
    """Non-negative multipliers for the six energy terms, in energy order:
    semantic unary, semantic pairwise, instance unary, instance pairwise,
    cross unary, cross pairwise."""

    semantic_unary: float = 1.0
    semantic_pairwise: float = 1.0
    instance_unary: float = 1.0
    instance_pairwise: float = 1.0
    cross_unary: float = 1.0
    cross_pairwise: float = 1.0

    NAMES = (
        "semantic_unary",
        "semantic_pairwise",
        "instance_unary",
        "instance_pairwise",
        "cross_unary",
        "cross_pairwise",
    )

    def __post_init__(self):
        for name in self.NAMES:
            value = float(getattr(self, name))
            if value < 0:
                raise InputError(f"term weight {name} must be >= 0, got {value}")
            object.__setattr__(self, name, value)

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in self.NAMES])

    @classmethod
    def from_array(cls, values) -> "TermWeights":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (6,):
            raise InputError(f"expected 6 term weights, got shape {values.shape}")
        return cls(*values.tolist())


def _check_compat_matrix(m: np.ndarray, name: str, nonneg: bool) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InputError(f"{name} must be square, got shape {m.shape}")
    if np.any(np.diag(m) != 0.0):
        raise InputError(f"{name} must have an exactly zero diagonal")
    if nonneg and np.min(m) < 0:
        raise InputError(f"{name} entries must be >= 0")


@dataclass(frozen=True)
class BcrfParams:
    """Every knob of the model: term weights, the three similarity kernels
    (semantic pairwise, instance pairwise, cross pairwise), the two label
    compatibility matrices, and the solver settings.

    `mu` is L x L over semantic labels. `eta` is (|things|+1) square over
    the null class (index 0) followed by things labels in id order; its
    off-diagonal may reach 0 under projected learning, so only
    non-negativity is enforced here.
    """

    term_weights: TermWeights
    kernel_semantic: KernelSpec
    kernel_instance: KernelSpec
    kernel_cross: KernelSpec
    mu: np.ndarray
    eta: np.ndarray
    iterations: int = 5
    damping: float = 1.0
    convergence_tol: float = 1e-4

    def __post_init__(self):
        mu = _frozen_array(self.mu, np.float64)
        eta = _frozen_array(self.eta, np.float64)
        _require_finite(mu, "mu")
        _require_finite(eta, "eta")
        _check_compat_matrix(mu, "mu", nonneg=False)
        _check_compat_matrix(eta, "eta", nonneg=True)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "iterations", int(self.iterations))
        object.__setattr__(self, "damping", float(self.damping))
        object.__setattr__(self, "convergence_tol", float(self.convergence_tol))
        if self.iterations < 0:
            raise InputError("iterations must be >= 0")
        if not 0.0 < self.damping <= 1.0:
            raise InputError("damping must lie in (0, 1]")
        if self.convergence_tol <= 0:
            raise InputError("convergence_tol must be > 0")

    @property
    def num_labels(self) -> int:
        return self.mu.shape[0]

    def replace(self, **kwargs) -> "BcrfParams":
        return replace(self, **kwargs)


def potts_matrix(size: int, cost: float = 1.0) -> np.ndarray:
    """Constant off-diagonal cost, zero diagonal."""
    m = np.full((size, size), float(cost))
    np.fill_diagonal(m, 0.0)
    return m


DEFAULT_KERNEL_SEMANTIC = KernelSpec(
    (
        KernelComponent(1.0, (2.0, 2.0), SPATIAL),
        KernelComponent(1.0, (8.0, 8.0, 25.0, 25.0, 25.0), BILATERAL),
    )
)
DEFAULT_KERNEL_INSTANCE = KernelSpec(
    (
        KernelComponent(1.0, (2.0, 2.0), SPATIAL),
        KernelComponent(1.0, (8.0, 8.0, 25.0, 25.0, 25.0), BILATERAL),
    )
)
DEFAULT_KERNEL_CROSS = KernelSpec((KernelComponent(1.0, (2.0, 2.0), SPATIAL),))


def default_params(
    schema: LabelSchema,
    potts_cost: float = 1.0,
    iterations: int = 5,
    damping: float = 1.0,
    convergence_tol: float = 1e-4,
) -> BcrfParams:
    """Potts-initialized parameters: unit term weights, constant-cost
    compatibilities, and desk-scale default kernels."""
    return BcrfParams(
        term_weights=TermWeights(),
        kernel_semantic=DEFAULT_KERNEL_SEMANTIC,
        kernel_instance=DEFAULT_KERNEL_INSTANCE,
        kernel_cross=DEFAULT_KERNEL_CROSS,
        mu=potts_matrix(schema.num_labels, potts_cost),
        eta=potts_matrix(schema.cross_size, potts_cost),
        iterations=iterations,
        damping=damping,
        convergence_tol=convergence_tol,
    )


# ---------------------------------------------------------------------------
# Final output


@dataclass(frozen=True)
class PanopticMap:
    """Per-pixel (semantic id, instance id) assignment.

    Semantic id -1 marks void/unlabeled pixels in ground-truth maps and is
    excluded from metric computations.
    """

    height: int
    width: int
    semantic: np.ndarray
    instance: np.ndarray

    def __post_init__(self):
        sem = _frozen_array(self.semantic, np.int32)
        inst = _frozen_array(self.instance, np.int32)
        n = self.height * self.width
        if sem.shape != (n,) or inst.shape != (n,):
            raise InputError(
                f"panoptic map arrays must be flat length {n}, got "
                f"{sem.shape} and {inst.shape}"
            )
        if np.min(sem, initial=0) < -1:
            raise InputError("semantic ids must be >= -1")
        if np.min(inst, initial=0) < 0:
            raise InputError("instance ids must be >= 0")
        object.__setattr__(self, "semantic", sem)
        object.__setattr__(self, "instance", inst)

    @classmethod
    def from_grids(cls, semantic, instance) -> "PanopticMap":
        semantic = np.asarray(semantic)
        if semantic.ndim != 2:
            raise InputError("expected 2-d semantic grid")
        h, w = semantic.shape
        return cls(h, w, semantic.reshape(-1), np.asarray(instance).reshape(-1))

    @property
    def num_pixels(self) -> int:
        return self.height * self.width
