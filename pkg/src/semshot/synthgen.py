"""Synthetic feature corpus tied to the class embeddings.

Each class gets a prototype normalize(alpha * M e_c + (1 - alpha) * u_c) where
M is a map from embedding space to feature space drawn once per seed and u_c
is a per-class random unit vector.  ``alpha`` dials how much of the feature
geometry is explained by the embeddings: at alpha=1 prototypes are a pure
function of the embeddings, at alpha=0 they carry no embedding signal at all.
Records are prototypes plus isotropic Gaussian noise; train and test ids are
disjoint by construction.

When no noise level is given, sigma is derived from the minimum pairwise
prototype distance so the corpus stays learnable at any scale.
"""

from dataclasses import dataclass

import numpy as np

from .embeddings import ClassRegistry, EmbeddingMatrix
from .records import FeatureRecord

_STREAM_MAP = 1
_STREAM_UNIT = 2
_STREAM_NOISE = 3
_STREAM_REG = 4

REG_DIM = 4


@dataclass
class SynthConfig:
    d_in: int = 32
    train_per_class: int = 30
    test_per_class: int = 12
    alpha: float = 0.9
    noise_std: float | None = None
    margin_scale: float = 0.35
    reg_noise_std: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.d_in <= 0:
            raise ValueError("d_in must be positive")
        if self.train_per_class < 1 or self.test_per_class < 1:
            raise ValueError("need at least one record per class per split")


@dataclass
class SynthDataset:
    registry: ClassRegistry
    train: list
    test: list
    prototypes: np.ndarray
    sigma: float
    min_margin: float

    def train_by_label(self) -> dict:
        out = {}
        for rec in self.train:
            out.setdefault(rec.label, []).append(rec)
        return out


def embedding_map(d_in: int, d_e: int, seed: int) -> np.ndarray:
    """The fixed seeded map M from embedding space into feature space.

    With d_in >= d_e the columns are orthonormal, so M preserves inner
    products exactly; otherwise a scaled Gaussian map is used.
    """
    rng = np.random.default_rng([seed, _STREAM_MAP])
    a = rng.standard_normal((d_in, d_e))
    if d_in >= d_e:
        q, r = np.linalg.qr(a)
        return q * np.sign(np.diag(r))
    return a / np.sqrt(d_e)


def class_prototypes(we: EmbeddingMatrix, registry: ClassRegistry,
                     cfg: SynthConfig) -> np.ndarray:
    """Unit prototypes for every non-background class, in registry order."""
    names = registry.base + registry.novel
    if we.n != registry.n:
        raise ValueError(f"embedding rows ({we.n}) do not match registry ({registry.n})")
    m = embedding_map(cfg.d_in, we.dim, cfg.seed)
    rng_u = np.random.default_rng([cfg.seed, _STREAM_UNIT])
    protos = np.empty((len(names), cfg.d_in))
    for i in range(len(names)):
        u = rng_u.standard_normal(cfg.d_in)
        u /= np.linalg.norm(u)
        vec = cfg.alpha * (m @ we.matrix[i]) + (1.0 - cfg.alpha) * u
        norm = np.linalg.norm(vec)
        if norm < 1e-12:
            raise ValueError(f"degenerate prototype for class {names[i]!r}")
        protos[i] = vec / norm
    return protos


def generate(we: EmbeddingMatrix, registry: ClassRegistry, cfg: SynthConfig) -> SynthDataset:
    """Draw a full train/test corpus around the class prototypes."""
    names = registry.base + registry.novel
    protos = class_prototypes(we, registry, cfg)

    if len(names) > 1:
        diffs = protos[:, None, :] - protos[None, :, :]
        dist = np.sqrt((diffs * diffs).sum(axis=2))
        min_margin = float(dist[~np.eye(len(names), dtype=bool)].min())
    else:
        min_margin = float("inf")
    sigma = cfg.noise_std if cfg.noise_std is not None else cfg.margin_scale * min_margin
    if not np.isfinite(sigma):
        raise ValueError("cannot derive a noise level for a single class; set noise_std")

    rng_noise = np.random.default_rng([cfg.seed, _STREAM_NOISE])
    rng_reg = np.random.default_rng([cfg.seed, _STREAM_REG])
    reg_map = rng_reg.standard_normal((REG_DIM, cfg.d_in)) / np.sqrt(cfg.d_in)

    train, test = [], []
    for i, name in enumerate(names):
        for split, count, bucket in (
            ("train", cfg.train_per_class, train),
            ("test", cfg.test_per_class, test),
        ):
            noise = rng_noise.standard_normal((count, cfg.d_in)) * sigma
            feats = protos[i] + noise
            reg_noise = rng_reg.standard_normal((count, REG_DIM)) * cfg.reg_noise_std
            regs = (reg_map @ feats.T).T + reg_noise
            for j in range(count):
                bucket.append(
                    FeatureRecord(
                        id=f"{split}-{name}-{j:04d}",
                        label=name,
                        feat=feats[j],
                        reg=regs[j],
                    )
                )
    return SynthDataset(
        registry=registry, train=train, test=test,
        prototypes=protos, sigma=float(sigma), min_margin=min_margin,
    )
