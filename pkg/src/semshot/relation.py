"""Relation reasoning over class embedding rows.

The dynamic variant runs one head of self-attention across the embedding rows:
row-softmax(We Tf (We Tg)^T) gives an n_classes x n_classes mixing graph G,
and the refined embedding is G (We Th Tl) + We.  With Tl = 0 the refinement is
exactly the identity, which is also the training-friendly initialization.

Two ablation variants share the interface: a fixed heuristic graph applied as
G_h We, and a per-row transform We Th Tl + We that mixes nothing across rows.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import diffmath as dm
from .diffmath import Param, Tape
from .embeddings import ClassRegistry, EmbeddingMatrix

DEFAULT_REDUCED_DIM = 32
DEFAULT_ATTENTION_GAIN = 16.0


class GraphMode(enum.Enum):
    NONE = "none"
    DYNAMIC = "dynamic"
    HEURISTIC = "heuristic"
    TRAINABLE_TRANSFORM = "tt"


@dataclass
class RelationParams:
    """The four trainable maps of the relation module."""

    t_f: Param
    t_g: Param
    t_h: Param
    t_l: Param
    scaled: bool = True

    @classmethod
    def initialize(cls, d_e: int, r: int = DEFAULT_REDUCED_DIM, seed: int = 0,
                   scaled: bool = True,
                   gain: float = DEFAULT_ATTENTION_GAIN) -> "RelationParams":
        """Identity-module init with a semantic warm start.

        t_l = 0 makes the refinement an exact identity.  The attention maps
        start tied (t_f = t_g), so initial scores are the PSD kernel
        We t_f t_fᵀ Weᵀ ≈ gain · cos(e_i, e_j): the graph opens as a soft
        similarity neighborhood over classes instead of uniform mixing, which
        would cancel in the softmax.  ``gain`` sets the initial sharpness.
        """
        rng = np.random.default_rng([seed, 0x5E])
        # tied maps with entry variance s^2 give scores ~ s^2 r cos(e_i, e_j)
        # (before the sqrt(r) division); solve for the requested gain
        s = math.sqrt(gain / math.sqrt(r)) if scaled else math.sqrt(gain / r)
        tied = rng.standard_normal((d_e, r)) * s
        return cls(
            t_f=Param("t_f", tied.copy()),
            t_g=Param("t_g", tied.copy()),
            t_h=Param("t_h", rng.normal(0.0, 1.0 / math.sqrt(d_e), (d_e, r))),
            t_l=Param("t_l", np.zeros((r, d_e))),
            scaled=scaled,
        )

    @property
    def d_e(self) -> int:
        return self.t_f.value.shape[0]

    @property
    def r(self) -> int:
        return self.t_f.value.shape[1]

    def validate(self):
        d_e, r = self.t_f.value.shape
        expect = {"t_f": (d_e, r), "t_g": (d_e, r), "t_h": (d_e, r), "t_l": (r, d_e)}
        for name, shape in expect.items():
            actual = getattr(self, name).value.shape
            if actual != shape:
                raise ValueError(f"{name} has shape {actual}, expected {shape}")

    def params(self) -> list:
        return [self.t_f, self.t_g, self.t_h, self.t_l]


def _matrix_of(we) -> np.ndarray:
    if isinstance(we, EmbeddingMatrix):
        return we.matrix
    return dm.as_matrix(we)


# ---------------------------------------------------------------------------
# tape-level builders (used inside head forward passes)


def attention_scores_t(we_t, t_f, t_g, scaled: bool):
    q = dm.matmul(we_t, t_f)
    k = dm.matmul(we_t, t_g)
    scores = dm.matmul(q, dm.transpose(k))
    if scaled:
        r = t_f.value.shape[1]
        scores = dm.scale(scores, 1.0 / math.sqrt(r))
    return scores


def extract_graph_t(we_t, t_f, t_g, scaled: bool):
    return dm.row_softmax(attention_scores_t(we_t, t_f, t_g, scaled))


def relation_forward_t(we_t, rp_t, scaled: bool):
    """Refined embeddings G (We Th Tl) + We on the tape.

    ``rp_t`` maps the four relation param names to tensors.  The mixing matmul
    sums in sorted order, which makes the whole refinement exactly equivariant
    to row permutations of We.
    """
    graph = extract_graph_t(we_t, rp_t["t_f"], rp_t["t_g"], scaled)
    transformed = dm.matmul(dm.matmul(we_t, rp_t["t_h"]), rp_t["t_l"])
    mixed = dm.mix_matmul(graph, transformed)
    return dm.add(mixed, we_t)


def trainable_transform_t(we_t, rp_t):
    """Ablation: per-row transform We Th Tl + We, no cross-row mixing."""
    transformed = dm.matmul(dm.matmul(we_t, rp_t["t_h"]), rp_t["t_l"])
    return dm.add(transformed, we_t)


def _run_detached(builder, we, rp: RelationParams):
    tape = Tape()
    we_t = tape.leaf(_matrix_of(we))
    rp_t = {p.name: tape.leaf(p.value) for p in rp.params()}
    return builder(we_t, rp_t)


# ---------------------------------------------------------------------------
# array-level interface


def relation_forward(we, rp: RelationParams) -> np.ndarray:
    """Refined embedding matrix for fixed parameter values."""
    rp.validate()
    return _run_detached(
        lambda we_t, rp_t: relation_forward_t(we_t, rp_t, rp.scaled), we, rp
    ).value


def extract_graph(we, rp: RelationParams) -> np.ndarray:
    """The row-stochastic attention graph over classes (rows sum to 1)."""
    rp.validate()
    return _run_detached(
        lambda we_t, rp_t: extract_graph_t(we_t, rp_t["t_f"], rp_t["t_g"], rp.scaled),
        we,
        rp,
    ).value


def trainable_transform(we, rp: RelationParams) -> np.ndarray:
    rp.validate()
    return _run_detached(trainable_transform_t, we, rp).value


def cooccurrence_graph(label_sets, registry: ClassRegistry) -> np.ndarray:
    """Row-normalized co-occurrence counts over the registry's classes.

    ``label_sets`` is an iterable of label collections (one per image or
    record).  Diagonal entries count occurrences of the class itself.  Rows
    with no counts fall back to the identity row so the graph stays
    row-stochastic.
    """
    n = registry.n
    counts = np.zeros((n, n))
    for k, labels in enumerate(label_sets):
        try:
            idx = sorted({registry.index(name) for name in labels})
        except KeyError as exc:
            raise ValueError(f"label set {k}: {exc.args[0]}") from None
        for i in idx:
            counts[i, i] += 1.0
        for a in range(len(idx)):
            for b in range(a + 1, len(idx)):
                counts[idx[a], idx[b]] += 1.0
                counts[idx[b], idx[a]] += 1.0
    sums = counts.sum(axis=1)
    graph = np.eye(n)
    nonzero = sums > 0
    graph[nonzero] = counts[nonzero] / sums[nonzero, None]
    return graph


@dataclass
class CorrelationMaps:
    """Cosine similarity of novel rows against base rows, before vs after."""

    novel_names: tuple
    base_names: tuple
    before: np.ndarray
    after: np.ndarray

    @property
    def difference(self) -> np.ndarray:
        return self.after - self.before


def _cosine_block(rows_a, rows_b) -> np.ndarray:
    na = np.linalg.norm(rows_a, axis=1, keepdims=True)
    nb = np.linalg.norm(rows_b, axis=1, keepdims=True)
    if (na < 1e-12).any() or (nb < 1e-12).any():
        raise ValueError("zero-norm embedding row in correlation map")
    return (rows_a / na) @ (rows_b / nb).T


def correlation_map(we_before, we_after, registry: ClassRegistry) -> CorrelationMaps:
    """How the relation stage moved each novel row relative to the base rows."""
    before = _matrix_of(we_before)
    after = _matrix_of(we_after)
    if before.shape != after.shape:
        raise ValueError(f"shape mismatch: {before.shape} vs {after.shape}")
    if before.shape[0] != registry.n:
        raise ValueError(
            f"embedding rows ({before.shape[0]}) do not match registry size ({registry.n})"
        )
    bi = registry.base_indices()
    ni = registry.novel_indices()
    return CorrelationMaps(
        novel_names=tuple(registry.novel),
        base_names=tuple(registry.base),
        before=_cosine_block(before[ni], before[bi]),
        after=_cosine_block(after[ni], after[bi]),
    )
