"""Gaussian-mixture pixel similarity and the exact dense message-passing
primitive shared by every pairwise and cross energy term.

Filtering is deliberately naive and exact: every ordered pixel pair is
visited, so cost grows as O(N^2). A compiled extension carries the hot
loop when available; a pure-numpy implementation is selected at import
time otherwise (or when BCRF_PURE_PYTHON is set).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from . import _pairwise_np
from .errors import InputError
from .types import (
    BILATERAL,
    SPATIAL,
    FeatureField,
    KernelComponent,
    KernelSpec,
    PotentialField,
)

__all__ = [
    "FeatureSet",
    "KernelComponent",
    "KernelSpec",
    "available_backends",
    "backend_name",
    "build_features",
    "build_feature_set",
    "message_pass",
    "similarity",
]

try:
    from . import _pairwise  # compiled at install time; optional
except ImportError:
    _pairwise = None

if os.environ.get("BCRF_PURE_PYTHON"):
    _default_backend = _pairwise_np
else:
    _default_backend = _pairwise if _pairwise is not None else _pairwise_np

_BACKENDS = {"numpy": _pairwise_np}
if _pairwise is not None:
    _BACKENDS["compiled"] = _pairwise


def backend_name() -> str:
    """Name of the backend message_pass uses by default."""
    return _default_backend.BACKEND


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def _resolve_backend(backend):
    if backend is None:
        return _default_backend
    try:
        return _BACKENDS[backend]
    except KeyError:
        raise InputError(
            f"unknown or unavailable backend {backend!r}; "
            f"have {available_backends()}"
        ) from None


def build_features(image, kind: str) -> FeatureField:
    """Per-pixel feature vectors for one kernel kind.

    spatial: (x, y) with x the column and y the row, in raw pixels.
    bilateral: (x, y, r, g, b) with color in raw 0-255 units. Any scaling
    is absorbed into the per-dimension bandwidths.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise InputError(f"expected an (H, W, 3) image, got shape {image.shape}")
    h, w, _ = image.shape
    ys, xs = np.mgrid[0:h, 0:w]
    coords = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.float64)
    if kind == SPATIAL:
        data = coords
    elif kind == BILATERAL:
        data = np.concatenate([coords, image.reshape(h * w, 3)], axis=1)
    else:
        raise InputError(f"unknown feature kind {kind!r}")
    return FeatureField(h, w, data)


@dataclass(frozen=True)
class FeatureSet:
    """Both feature variants for one image, keyed by kernel kind."""

    spatial: FeatureField
    bilateral: FeatureField

    def get(self, kind: str) -> FeatureField:
        if kind == SPATIAL:
            return self.spatial
        if kind == BILATERAL:
            return self.bilateral
        raise InputError(f"unknown feature kind {kind!r}")

    @property
    def height(self) -> int:
        return self.spatial.height

    @property
    def width(self) -> int:
        return self.spatial.width

    @property
    def num_pixels(self) -> int:
        return self.spatial.height * self.spatial.width


def build_feature_set(image) -> FeatureSet:
    return FeatureSet(
        spatial=build_features(image, SPATIAL),
        bilateral=build_features(image, BILATERAL),
    )


def similarity(i: int, j: int, feats: FeatureSet, spec: KernelSpec) -> float:
    """Mixture-of-Gaussians similarity between pixels i and j (flat indices).

    Each component contributes w * exp(-0.5 * sum_d ((f_i[d]-f_j[d])/sigma[d])^2).
    """
    total = 0.0
    for comp in spec.components:
        f = feats.get(comp.kind).data
        diff = (f[i] - f[j]) / comp.bandwidths
        total += comp.weight * math.exp(-0.5 * float(diff @ diff))
    return total


def message_pass(
    values: PotentialField,
    feats: FeatureSet,
    spec: KernelSpec,
    backend: str | None = None,
) -> PotentialField:
    """out_i(c) = sum_{j != i} similarity(i, j) * values_j(c), exactly.

    Computed as the full similarity-weighted sum (each component's self
    term is exactly its weight) followed by subtracting total_weight *
    values_i, which excludes j == i.
    """
    impl = _resolve_backend(backend)
    if feats.num_pixels != values.num_pixels:
        raise InputError(
            f"feature grid has {feats.num_pixels} pixels, "
            f"values field has {values.num_pixels}"
        )
    v = values.data
    out = np.zeros_like(v)
    for comp in spec.components:
        scaled = feats.get(comp.kind).data / comp.bandwidths
        impl.gauss_accumulate(out, v, scaled, comp.weight)
    out -= spec.total_weight * v
    return PotentialField(values.height, values.width, values.channels, out)
