"""The six-term energy and its compatibility functions.

Energy of a discrete panoptic labeling (x, z):

    E = w_su * sum_i phi_i(x_i)
      + w_sp * (1/2) sum_{i != j} mu(x_i, x_j) Sim_sem(i, j)
      + w_iu * sum_i psi_i(z_i)
      + w_ip * sum_{i < j} [z_i != z_j] Sim_inst(i, j)
      + w_cu * sum_i f(x_i, class(z_i))
      + w_cp * sum_{i != j} f(x_i, class(z_j)) Sim_cross(i, j)

Both label-coupled pairwise sums run over ordered pairs so the energy is
independent of pixel enumeration order even for asymmetric mu; for
symmetric mu the semantic term equals the plain unordered-pair sum. The
cross pairwise term counts both orientations of every pair, matching the
two cross message updates used in inference.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import InputError
from .kernels import FeatureSet, message_pass
from .types import BcrfParams, LabelSchema, PotentialField

__all__ = [
    "UNARY_LOG_FLOOR",
    "compat_transform_semantic",
    "cross_compat",
    "cross_compat_matrix",
    "cross_structure",
    "one_hot",
    "semantic_unary_from_probs",
    "total_energy",
]

UNARY_LOG_FLOOR = 1e-8
PROB_ROW_TOL = 1e-4


def semantic_unary_from_probs(probs: PotentialField) -> PotentialField:
    """Negative-log unaries from per-pixel classifier probabilities.

    Each row must be a probability vector (non-negative, summing to 1
    within 1e-4). Probabilities are floored at 1e-8 inside the log so
    degenerate classifier outputs keep the energy finite.
    """
    p = probs.data
    if np.min(p) < -PROB_ROW_TOL:
        raise InputError("probability rows must be non-negative")
    sums = p.sum(axis=1)
    worst = np.max(np.abs(sums - 1.0))
    if worst > PROB_ROW_TOL:
        raise InputError(
            f"probability rows must sum to 1 within {PROB_ROW_TOL} "
            f"(max deviation {worst:.3g})"
        )
    phi = -np.log(np.maximum(p, UNARY_LOG_FLOOR))
    return PotentialField(probs.height, probs.width, probs.channels, phi)


def cross_compat(
    l: int, c: Optional[int], eta: np.ndarray, schema: LabelSchema
) -> float:
    """Cost of pairing semantic label l with instance class c (None = null).

    Zero when the labels agree, or when a stuff label meets the null
    class; otherwise the learned eta entry, with stuff labels folded onto
    the null row.
    """
    if not 0 <= l < schema.num_labels:
        raise InputError(f"semantic label {l} out of range")
    if c is not None and c not in schema.things:
        raise InputError(f"instance class {c} is not a things label")
    if l == c:
        return 0.0
    if l in schema.stuff and c is None:
        return 0.0
    row = schema.cross_index(None if l in schema.stuff else l)
    return float(eta[row, schema.cross_index(c)])


@lru_cache(maxsize=64)
def cross_structure(schema: LabelSchema) -> tuple[np.ndarray, np.ndarray]:
    """Eta (row, col) index per (semantic label, instance label) cell.

    Both arrays have shape (L, num_instance_labels); -1 marks cells where
    the compatibility cost is structurally zero.
    """
    L, T = schema.num_labels, schema.num_instance_labels
    rows = np.full((L, T), -1, dtype=np.int64)
    cols = np.full((L, T), -1, dtype=np.int64)
    for l in range(L):
        row = schema.cross_index(None if l in schema.stuff else l)
        for t in range(T):
            c = schema.class_of(t)
            if l == c or (l in schema.stuff and c is None):
                continue
            rows[l, t] = row
            cols[l, t] = schema.cross_index(c)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


def cross_compat_matrix(schema: LabelSchema, eta: np.ndarray) -> np.ndarray:
    """Dense (L, num_instance_labels) table of cross_compat values."""
    rows, cols = cross_structure(schema)
    mask = rows >= 0
    out = np.zeros(rows.shape)
    out[mask] = eta[rows[mask], cols[mask]]
    return out


def compat_transform_semantic(dist: PotentialField, mu: np.ndarray) -> PotentialField:
    """Apply mu per pixel: out_i(l) = sum_l' mu(l, l') * dist_i(l')."""
    if mu.shape != (dist.channels, dist.channels):
        raise InputError(
            f"mu has shape {mu.shape}, field has {dist.channels} channels"
        )
    return PotentialField(
        dist.height, dist.width, dist.channels, dist.data @ mu.T
    )


def one_hot(labels: np.ndarray, size: int) -> np.ndarray:
    out = np.zeros((labels.shape[0], size))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def _check_labeling(values, size: int, what: str) -> np.ndarray:
    arr = np.asarray(values).ravel()
    if not np.issubdtype(arr.dtype, np.integer):
        arr = arr.astype(np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= size):
        raise InputError(f"{what} labeling out of range [0, {size})")
    return arr


def total_energy(
    x,
    z,
    phi: PotentialField,
    psi: PotentialField,
    params: BcrfParams,
    feats: FeatureSet,
    schema: LabelSchema,
) -> float:
    """Exact energy of the discrete labeling (x, z) under the model."""
    n = phi.num_pixels
    L = schema.num_labels
    T = schema.num_instance_labels
    x = _check_labeling(x, L, "semantic")
    z = _check_labeling(z, T, "instance")
    if x.shape != (n,) or z.shape != (n,):
        raise InputError("labelings must cover every pixel exactly once")
    if phi.channels != L or psi.channels != T:
        raise InputError("unary channel counts do not match the schema")

    w = params.term_weights
    idx = np.arange(n)
    e = w.semantic_unary * float(phi.data[idx, x].sum())
    e += w.instance_unary * float(psi.data[idx, z].sum())
    F = cross_compat_matrix(schema, params.eta)
    e += w.cross_unary * float(F[x, z].sum())

    if w.semantic_pairwise != 0.0:
        X = PotentialField(phi.height, phi.width, L, one_hot(x, L))
        m = message_pass(X, feats, params.kernel_semantic)
        e += 0.5 * w.semantic_pairwise * float((m.data @ params.mu.T)[idx, x].sum())

    need_z_onehot = w.instance_pairwise != 0.0 or w.cross_pairwise != 0.0
    if need_z_onehot:
        Z = PotentialField(phi.height, phi.width, T, one_hot(z, T))
    if w.instance_pairwise != 0.0:
        m = message_pass(Z, feats, params.kernel_instance)
        degree = m.data.sum(axis=1)
        e += 0.5 * w.instance_pairwise * float((degree - m.data[idx, z]).sum())
    if w.cross_pairwise != 0.0:
        m = message_pass(Z, feats, params.kernel_cross)
        e += w.cross_pairwise * float((m.data @ F.T)[idx, x].sum())
    return float(e)
