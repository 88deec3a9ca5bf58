"""Exhaustive exact inference on tiny instances.

Enumerates every joint assignment (x, z) to obtain the true MAP labeling,
exact marginals, the log partition function, and the exact KL divergence
from a factorized state. Deliberately dumb: pairwise terms are direct
sums over pixel pairs using the scalar similarity function, so this is an
independent reference for the message-passing code paths. Everything is
guarded to at most MAX_ASSIGNMENTS joint assignments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy import cross_compat_matrix
from .errors import SizeGuardError
from .kernels import FeatureSet, similarity
from .types import BcrfParams, LabelSchema, MarginalPair, PotentialField

__all__ = [
    "MAX_ASSIGNMENTS",
    "ExactOracle",
    "enumerate_map",
    "exact_kl",
    "exact_marginals",
]

MAX_ASSIGNMENTS = 10_000_000


def _enumerate_labelings(n: int, k: int) -> np.ndarray:
    """All k^n labelings of n pixels, rows in lexicographic order."""
    grids = np.meshgrid(*([np.arange(k)] * n), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _similarity_matrix(feats: FeatureSet, spec, n: int) -> np.ndarray:
    sim = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            sim[i, j] = sim[j, i] = similarity(i, j, feats, spec)
    return sim


@dataclass
class ExactOracle:
    """Precomputed enumeration tables for one instance.

    E[a, b] is the energy of the a-th semantic labeling paired with the
    b-th instance labeling (both in lexicographic order).
    """

    schema: LabelSchema
    phi: PotentialField
    psi: PotentialField
    x_labelings: np.ndarray
    z_labelings: np.ndarray
    energies: np.ndarray

    @classmethod
    def build(
        cls,
        phi: PotentialField,
        psi: PotentialField,
        params: BcrfParams,
        feats: FeatureSet,
        schema: LabelSchema,
    ) -> "ExactOracle":
        n = phi.num_pixels
        L = schema.num_labels
        T = schema.num_instance_labels
        total = (L**n) * (T**n)
        if total > MAX_ASSIGNMENTS:
            raise SizeGuardError(
                f"{L}^{n} * {T}^{n} = {total} joint assignments exceeds the "
                f"enumeration cap of {MAX_ASSIGNMENTS}"
            )
        w = params.term_weights
        mu = params.mu
        F = cross_compat_matrix(schema, params.eta)
        sim_sem = _similarity_matrix(feats, params.kernel_semantic, n)
        sim_inst = _similarity_matrix(feats, params.kernel_instance, n)
        sim_cross = _similarity_matrix(feats, params.kernel_cross, n)

        X = _enumerate_labelings(n, L)
        Z = _enumerate_labelings(n, T)
        cols = np.arange(n)[None, :]

        e_x = w.semantic_unary * phi.data[cols, X].sum(axis=1)
        for i in range(n):
            for j in range(i + 1, n):
                pair = 0.5 * (mu[X[:, i], X[:, j]] + mu[X[:, j], X[:, i]])
                e_x += w.semantic_pairwise * sim_sem[i, j] * pair

        e_z = w.instance_unary * psi.data[cols, Z].sum(axis=1)
        for i in range(n):
            for j in range(i + 1, n):
                e_z += (
                    w.instance_pairwise
                    * sim_inst[i, j]
                    * (Z[:, i] != Z[:, j]).astype(np.float64)
                )

        # cross terms: sum_j G[a, j, z_j] with G folding the unary cost and
        # both orientations of every ordered pair
        Fx = F[X]  # (A, n, T)
        G = w.cross_unary * Fx
        if w.cross_pairwise != 0.0:
            G = G + w.cross_pairwise * np.einsum("ij,ait->ajt", sim_cross, Fx)
        E = e_x[:, None] + e_z[None, :]
        for j in range(n):
            E = E + G[:, j, :][:, Z[:, j]]
        return cls(schema, phi, psi, X, Z, E)

    @property
    def num_pixels(self) -> int:
        return self.phi.num_pixels

    def map_assignment(self) -> tuple[np.ndarray, np.ndarray, float]:
        """Energy-minimizing (x, z); ties take the lexicographically
        smallest joint assignment."""
        flat = int(np.argmin(self.energies))
        a, b = np.unravel_index(flat, self.energies.shape)
        return (
            self.x_labelings[a].copy(),
            self.z_labelings[b].copy(),
            float(self.energies[a, b]),
        )

    def log_partition(self) -> float:
        neg = -self.energies
        m = float(np.max(neg))
        return m + float(np.log(np.sum(np.exp(neg - m))))

    def marginals(self) -> tuple[MarginalPair, float]:
        """True per-pixel marginals under the Gibbs distribution, and logZ."""
        logz = self.log_partition()
        p = np.exp(-self.energies - logz)
        row_p = p.sum(axis=1)
        col_p = p.sum(axis=0)
        n = self.num_pixels
        L = self.schema.num_labels
        T = self.schema.num_instance_labels
        marg_x = np.stack(
            [np.bincount(self.x_labelings[:, i], weights=row_p, minlength=L)
             for i in range(n)]
        )
        marg_z = np.stack(
            [np.bincount(self.z_labelings[:, i], weights=col_p, minlength=T)
             for i in range(n)]
        )
        pair = MarginalPair(
            q=PotentialField(self.phi.height, self.phi.width, L, marg_x),
            r=PotentialField(self.psi.height, self.psi.width, T, marg_z),
        )
        return pair, logz

    def assignment_energy(self, x, z) -> float:
        n = self.num_pixels
        L = self.schema.num_labels
        T = self.schema.num_instance_labels
        a = int(np.ravel_multi_index(np.asarray(x).ravel(), (L,) * n))
        b = int(np.ravel_multi_index(np.asarray(z).ravel(), (T,) * n))
        return float(self.energies[a, b])

    def kl_from_factorized(self, state: MarginalPair) -> float:
        """Exact KL(state || Gibbs), by full enumeration."""
        n = self.num_pixels
        cols = np.arange(n)[None, :]
        qx = np.prod(state.q.data[cols, self.x_labelings], axis=1)
        qz = np.prod(state.r.data[cols, self.z_labelings], axis=1)

        def xlogx(v):
            mask = v > 0.0
            return float(np.sum(v[mask] * np.log(v[mask])))

        expected = float(qx @ self.energies @ qz)
        return xlogx(qx) + xlogx(qz) + expected + self.log_partition()


def enumerate_map(
    phi: PotentialField,
    psi: PotentialField,
    params: BcrfParams,
    feats: FeatureSet,
    schema: LabelSchema,
) -> tuple[np.ndarray, np.ndarray, float]:
    return ExactOracle.build(phi, psi, params, feats, schema).map_assignment()


def exact_marginals(
    phi: PotentialField,
    psi: PotentialField,
    params: BcrfParams,
    feats: FeatureSet,
    schema: LabelSchema,
) -> tuple[MarginalPair, float]:
    return ExactOracle.build(phi, psi, params, feats, schema).marginals()


def exact_kl(
    state: MarginalPair,
    phi: PotentialField,
    psi: PotentialField,
    params: BcrfParams,
    feats: FeatureSet,
    schema: LabelSchema,
) -> float:
    return ExactOracle.build(phi, psi, params, feats, schema).kl_from_factorized(state)
