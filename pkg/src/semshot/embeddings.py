"""Class registries and the fixed word-embedding matrix behind the heads.

A registry orders classes as base, then novel, then a synthetic background
entry that always sits last.  The embedding matrix carries one unit-norm row
per registry entry in that order; the background row is composed from a seed
and never depends on any class vector.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .diffmath import l2_normalize_rows

BACKGROUND = "__background__"
DEFAULT_EMBED_DIM = 300

_BG_STREAM = 0xB6
_CLASS_STREAM = 0xC1


def _canon(name: str) -> str:
    return name.strip().lower()


@dataclass
class ClassRegistry:
    """Ordered class list: base + novel + background (implicit, always last)."""

    base: tuple = ()
    novel: tuple = ()
    tokens: dict = field(default_factory=dict)

    def __post_init__(self):
        self.base = tuple(str(n).strip() for n in self.base)
        self.novel = tuple(str(n).strip() for n in self.novel)
        seen = set()
        for name in self.base + self.novel:
            if not name:
                raise ValueError("empty class name")
            key = _canon(name)
            if key == BACKGROUND:
                raise ValueError(f"{BACKGROUND!r} is reserved for the background entry")
            if key in seen:
                raise ValueError(f"duplicate class name {name!r}")
            seen.add(key)
        self.tokens = {_canon(k): tuple(v) for k, v in dict(self.tokens).items()}
        for key in self.tokens:
            if key not in seen:
                raise ValueError(f"token override for unknown class {key!r}")

    @property
    def names(self) -> tuple:
        return self.base + self.novel + (BACKGROUND,)

    @property
    def n(self) -> int:
        return len(self.base) + len(self.novel) + 1

    @property
    def background_index(self) -> int:
        return self.n - 1

    def index(self, name: str) -> int:
        key = _canon(name)
        for i, n in enumerate(self.names):
            if _canon(n) == key:
                return i
        raise KeyError(f"unknown class {name!r}")

    def base_indices(self):
        return list(range(len(self.base)))

    def novel_indices(self):
        return list(range(len(self.base), len(self.base) + len(self.novel)))

    def tokens_for(self, name: str) -> tuple:
        """Lookup tokens for a class: explicit override, else whitespace split."""
        key = _canon(name)
        if key in self.tokens:
            return self.tokens[key]
        return tuple(key.split())

    def expand(self, new_novel, tokens=None) -> "ClassRegistry":
        merged_tokens = dict(self.tokens)
        if tokens:
            merged_tokens.update({_canon(k): tuple(v) for k, v in tokens.items()})
        return ClassRegistry(
            base=self.base, novel=self.novel + tuple(new_novel), tokens=merged_tokens
        )

    def to_json(self) -> dict:
        out = {"base": list(self.base), "novel": list(self.novel)}
        if self.tokens:
            out["tokens"] = {k: list(v) for k, v in self.tokens.items()}
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ClassRegistry":
        unknown = set(obj) - {"base", "novel", "tokens"}
        if unknown:
            raise ValueError(f"unknown registry keys: {sorted(unknown)}")
        return cls(
            base=tuple(obj.get("base", ())),
            novel=tuple(obj.get("novel", ())),
            tokens=obj.get("tokens", {}),
        )


def load_registry(path) -> ClassRegistry:
    with open(path, encoding="utf-8") as fh:
        return ClassRegistry.from_json(json.load(fh))


def save_registry(registry: ClassRegistry, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(registry.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass
class EmbeddingMatrix:
    """Unit-norm class embedding rows aligned with a registry's name order."""

    matrix: np.ndarray
    provenance: tuple = ()

    def __post_init__(self):
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise ValueError("embedding matrix must be 2-D")
        if self.provenance and len(self.provenance) != self.matrix.shape[0]:
            raise ValueError("provenance length does not match row count")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def content_hash(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.matrix).tobytes()).hexdigest()

    def select_rows(self, indices, provenance=None) -> "EmbeddingMatrix":
        prov = provenance
        if prov is None and self.provenance:
            prov = tuple(self.provenance[i] for i in indices)
        return EmbeddingMatrix(self.matrix[list(indices)].copy(), prov or ())


def compose_background_row(dim: int, seed: int = 0) -> np.ndarray:
    """Fixed random unit vector for the background entry.

    Drawn from its own seed stream, so it is independent of every class row.
    """
    rng = np.random.default_rng([seed, _BG_STREAM])
    row = rng.standard_normal(dim)
    return row / np.linalg.norm(row)


def parse_embedding_file(stream, registry: ClassRegistry, background_seed: int = 0):
    """Read a word2vec-style text stream into an EmbeddingMatrix.

    Format: a header line ``<vocab_count> <dim>``, then one line per token:
    the token followed by ``dim`` floats.  Multi-token class names average
    their token vectors; every class row is L2-normalized afterwards.  Tokens
    are matched case-insensitively; a class with no resolvable token is an
    error that names the class and the missing tokens.
    """
    lines = iter(enumerate(stream, start=1))
    try:
        _, header = next(lines)
    except StopIteration:
        raise ValueError("empty embedding stream") from None
    parts = header.split()
    if len(parts) != 2:
        raise ValueError(f"line 1: expected header '<count> <dim>', got {header!r}")
    try:
        declared_count, dim = int(parts[0]), int(parts[1])
    except ValueError:
        raise ValueError(f"line 1: non-integer header fields in {header!r}") from None
    if dim <= 0 or declared_count < 0:
        raise ValueError(f"line 1: invalid header values {header!r}")

    needed = set()
    for name in registry.base + registry.novel:
        needed.update(registry.tokens_for(name))

    vocab = {}
    count = 0
    for lineno, line in lines:
        line = line.strip()
        if not line:
            continue
        count += 1
        fields = line.split()
        token = fields[0].lower()
        if len(fields) - 1 != dim:
            raise ValueError(
                f"line {lineno}: token {fields[0]!r} has {len(fields) - 1} values, expected {dim}"
            )
        if token in needed and token not in vocab:
            try:
                vocab[token] = np.array([float(v) for v in fields[1:]])
            except ValueError:
                raise ValueError(f"line {lineno}: non-numeric value for token {fields[0]!r}") from None
    if count != declared_count:
        raise ValueError(f"header declares {declared_count} tokens but stream has {count}")

    rows = []
    provenance = []
    for name in registry.base + registry.novel:
        tokens = registry.tokens_for(name)
        missing = [t for t in tokens if t not in vocab]
        if missing:
            raise ValueError(f"class {name!r}: tokens {missing} not found in embedding stream")
        vec = np.mean([vocab[t] for t in tokens], axis=0)
        rows.append(vec)
        provenance.append("tokens:" + " ".join(tokens))
    rows.append(compose_background_row(dim, background_seed))
    provenance.append(f"background:seed={background_seed}")

    matrix = np.vstack([r.reshape(1, -1) for r in rows])
    matrix[:-1] = l2_normalize_rows(matrix[:-1])
    return EmbeddingMatrix(matrix, tuple(provenance))


def load_embedding_file(path, registry: ClassRegistry, background_seed: int = 0):
    with open(path, encoding="utf-8") as fh:
        return parse_embedding_file(fh, registry, background_seed)


def save_embedding_file(path, names, matrix):
    """Write tokens + vectors in the word2vec text layout (full precision)."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.shape[0] != len(names):
        raise ValueError(f"{len(names)} names for {m.shape[0]} rows")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(names)} {m.shape[1]}\n")
        for name, row in zip(names, m):
            fh.write(name + " " + " ".join(repr(float(v)) for v in row) + "\n")


def random_embeddings(registry: ClassRegistry, dim: int = DEFAULT_EMBED_DIM, seed: int = 0):
    """Seeded random unit rows for every class, plus the background row."""
    rng = np.random.default_rng([seed, _CLASS_STREAM])
    n_classes = len(registry.base) + len(registry.novel)
    rows = rng.standard_normal((n_classes, dim))
    rows = l2_normalize_rows(rows)
    matrix = np.vstack([rows, compose_background_row(dim, seed).reshape(1, -1)])
    provenance = tuple(f"random:seed={seed}" for _ in range(n_classes)) + (
        f"background:seed={seed}",
    )
    return EmbeddingMatrix(matrix, provenance)
