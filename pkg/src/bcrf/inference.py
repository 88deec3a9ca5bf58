"""Parallel mean-field inference over the factorized semantic/instance
marginals, with damping, convergence detection, and free-energy tracing.

Updates are Jacobi-style: every per-pixel update in an iteration reads
only the previous iteration's marginals, and each term weight scales its
update. Accumulators start from zero each iteration, so with all coupling
weights at zero a step reproduces the softmax initialization exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .energy import cross_compat_matrix
from .errors import InputError
from .kernels import FeatureSet, build_feature_set, message_pass
from .types import BcrfParams, LabelSchema, MarginalPair, PotentialField

__all__ = [
    "InferenceTrace",
    "TraceEntry",
    "decode_map",
    "free_energy",
    "init_marginals",
    "meanfield_step",
    "run_inference",
    "softmax_rows",
]


def softmax_rows(a: np.ndarray) -> np.ndarray:
    shifted = a - a.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _entropy(p: np.ndarray) -> float:
    mask = p > 0.0
    return -float(np.sum(p[mask] * np.log(p[mask])))


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    free_energy: float
    max_delta: float


@dataclass(frozen=True)
class InferenceTrace:
    """Per-iteration convergence record; entry 0 is the initialization
    (its max_delta is +inf, there being no previous state)."""

    entries: tuple[TraceEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        for k, entry in enumerate(self.entries):
            if entry.iteration != k:
                raise InputError("trace iterations must increase from 0")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def final(self) -> TraceEntry:
        return self.entries[-1]


def init_marginals(phi: PotentialField, psi: PotentialField) -> MarginalPair:
    """Per-pixel softmax of the negated unaries (no weights applied)."""
    q = softmax_rows(-phi.data)
    r = softmax_rows(-psi.data)
    return MarginalPair(
        q=PotentialField(phi.height, phi.width, phi.channels, q),
        r=PotentialField(psi.height, psi.width, psi.channels, r),
    )


def _messages(arr: np.ndarray, feats: FeatureSet, spec) -> np.ndarray:
    field = PotentialField(feats.height, feats.width, arr.shape[1], arr)
    return message_pass(field, feats, spec).data


# term-weight indices, in energy order (matches TermWeights.NAMES)
W_SEM_UNARY, W_SEM_PAIR, W_INST_UNARY, W_INST_PAIR, W_CROSS_UNARY, W_CROSS_PAIR = (
    range(6)
)


def _jacobi_update(
    q: np.ndarray,
    r: np.ndarray,
    phi: np.ndarray,
    psi: np.ndarray,
    weights: np.ndarray,
    mu: np.ndarray,
    F: np.ndarray,
    kernel_semantic,
    kernel_instance,
    kernel_cross,
    damping: float,
    feats: FeatureSet,
    force_all_terms: bool = False,
):
    """One parallel update from previous marginals (q, r).

    Takes raw parameter arrays so callers (notably finite-difference
    probes) can evaluate off-manifold points. Returns (q_new, r_new, aux);
    aux holds the intermediates the reverse pass needs. Zero-weight terms
    are skipped unless force_all_terms is set (differentiation needs their
    intermediates for weight gradients).
    """
    aux = {}
    a = -(weights[W_SEM_UNARY] * phi)
    b = -(weights[W_INST_UNARY] * psi)
    if force_all_terms or weights[W_SEM_PAIR] != 0.0:
        m_sem = _messages(q, feats, kernel_semantic)
        a -= weights[W_SEM_PAIR] * (m_sem @ mu.T)
        aux["m_sem"] = m_sem
    if force_all_terms or weights[W_INST_PAIR] != 0.0:
        m_inst = _messages(r, feats, kernel_instance)
        b -= weights[W_INST_PAIR] * (m_inst.sum(axis=1, keepdims=True) - m_inst)
        aux["m_inst"] = m_inst
    if force_all_terms or weights[W_CROSS_UNARY] != 0.0:
        a -= weights[W_CROSS_UNARY] * (r @ F.T)
        b -= weights[W_CROSS_UNARY] * (q @ F)
    if force_all_terms or weights[W_CROSS_PAIR] != 0.0:
        m_cross_r = _messages(r, feats, kernel_cross)
        m_cross_q = _messages(q, feats, kernel_cross)
        a -= weights[W_CROSS_PAIR] * (m_cross_r @ F.T)
        b -= weights[W_CROSS_PAIR] * (m_cross_q @ F)
        aux["m_cross_r"] = m_cross_r
        aux["m_cross_q"] = m_cross_q
    s_q = softmax_rows(a)
    s_r = softmax_rows(b)
    aux["s_q"] = s_q
    aux["s_r"] = s_r
    q_new = damping * s_q + (1.0 - damping) * q
    r_new = damping * s_r + (1.0 - damping) * r
    return q_new, r_new, aux


def _check_shapes(
    phi: PotentialField,
    psi: PotentialField,
    feats: FeatureSet,
    schema: LabelSchema,
) -> None:
    if (phi.height, phi.width) != (psi.height, psi.width):
        raise InputError("semantic and instance unaries cover different grids")
    if (phi.height, phi.width) != (feats.height, feats.width):
        raise InputError("unaries and image cover different grids")
    if phi.channels != schema.num_labels:
        raise InputError(
            f"semantic unary has {phi.channels} channels, "
            f"schema has {schema.num_labels} labels"
        )
    if psi.channels != schema.num_instance_labels:
        raise InputError(
            f"instance unary has {psi.channels} channels, "
            f"schema has {schema.num_instance_labels} instance labels"
        )


def meanfield_step(
    state: MarginalPair,
    phi: PotentialField,
    psi: PotentialField,
    params: BcrfParams,
    feats: FeatureSet,
    schema: LabelSchema,
) -> MarginalPair:
    """One damped parallel mean-field update from the previous state."""
    _check_shapes(phi, psi, feats, schema)
    F = cross_compat_matrix(schema, params.eta)
    q_new, r_new, _ = _jacobi_update(
        state.q.data, state.r.data, phi.data, psi.data, params, F, feats
    )
    return MarginalPair(
        q=PotentialField(phi.height, phi.width, phi.channels, q_new),
        r=PotentialField(psi.height, psi.width, psi.channels, r_new),
    )


def run_inference(
    phi: PotentialField,
    psi: PotentialField,
    image,
    params: BcrfParams,
    schema: LabelSchema,
) -> tuple[MarginalPair, InferenceTrace]:
    """Iterate mean-field steps until params.iterations or until the max
    per-pixel marginal change drops below params.convergence_tol.

    `image` is an (H, W, 3) array or an already-built FeatureSet.
    """
    feats = image if isinstance(image, FeatureSet) else build_feature_set(image)
    _check_shapes(phi, psi, feats, schema)
    state = init_marginals(phi, psi)
    entries = [
        TraceEntry(0, free_energy(state, phi, psi, params, feats, schema), math.inf)
    ]
    for k in range(1, params.iterations + 1):
        new_state = meanfield_step(state, phi, psi, params, feats, schema)
        delta = max(
            float(np.max(np.abs(new_state.q.data - state.q.data))),
            float(np.max(np.abs(new_state.r.data - state.r.data))),
        )
        state = new_state
        entries.append(
            TraceEntry(k, free_energy(state, phi, psi, params, feats, schema), delta)
        )
        if delta < params.convergence_tol:
            break
    return state, InferenceTrace(tuple(entries))


def free_energy(
    state: MarginalPair,
    phi: PotentialField,
    psi: PotentialField,
    params: BcrfParams,
    feats: FeatureSet,
    schema: LabelSchema,
) -> float:
    """Expected energy minus entropy of the factorized distribution.

    Equals KL(Q x R || P) - log Z, so values are comparable across
    iterations of the same instance only. Pairwise expectations reuse the
    exact message-passing primitive; entropy uses 0*log(0) = 0.
    """
    _check_shapes(phi, psi, feats, schema)
    q = state.q.data
    r = state.r.data
    w = params.term_weights
    F = cross_compat_matrix(schema, params.eta)
    e = w.semantic_unary * float(np.sum(q * phi.data))
    e += w.instance_unary * float(np.sum(r * psi.data))
    if w.semantic_pairwise != 0.0:
        m = _messages(q, feats, params.kernel_semantic)
        e += 0.5 * w.semantic_pairwise * float(np.sum(q * (m @ params.mu.T)))
    if w.instance_pairwise != 0.0:
        m = _messages(r, feats, params.kernel_instance)
        degree = _messages(np.ones((q.shape[0], 1)), feats, params.kernel_instance)
        e += 0.5 * w.instance_pairwise * (float(degree.sum()) - float(np.sum(r * m)))
    if w.cross_unary != 0.0:
        e += w.cross_unary * float(np.sum(q * (r @ F.T)))
    if w.cross_pairwise != 0.0:
        m = _messages(r, feats, params.kernel_cross)
        e += w.cross_pairwise * float(np.sum(q * (m @ F.T)))
    return e - _entropy(q) - _entropy(r)


def decode_map(state: MarginalPair) -> tuple[np.ndarray, np.ndarray]:
    """Independent per-pixel argmax of both marginals; ties take the
    lowest label index."""
    x = np.argmax(state.q.data, axis=1)
    z = np.argmax(state.r.data, axis=1)
    return x, z
