"""Few-shot classification heads over precomputed feature vectors.

Three interchangeable heads share a small 2-layer trunk:

* BASELINE: logits = W v + b, one learned row per class.
* SSP: logits = We P v + b.  The class rows are fixed word-embedding vectors;
  only the projection P from embedding space to feature space is learned, so
  a class can score without any visual training sample.
* SRR: like SSP, but We is first refined by the relation module:
  logits = (G We Th Tl + We) P v + b for the dynamic graph.

A parallel linear regression branch (4 outputs) rides on the trunk; it can be
decoupled into its own trunk copy so classifier gradients and regression
gradients touch disjoint parameters.
"""

import enum
import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import diffmath as dm
from . import relation as rel
from .diffmath import Param, Tape
from .embeddings import ClassRegistry, EmbeddingMatrix
from .records import batch_features

REG_DIM = 4


class HeadMode(enum.Enum):
    BASELINE = "baseline"
    SSP = "ssp"
    SRR = "srr"


@dataclass
class HeadConfig:
    mode: HeadMode = HeadMode.SSP
    graph_mode: rel.GraphMode = rel.GraphMode.NONE
    d_in: int = 32
    d: int = 64
    r: int = rel.DEFAULT_REDUCED_DIM
    scaled_attention: bool = True
    attention_gain: float = rel.DEFAULT_ATTENTION_GAIN
    graph_in_base: bool = True
    decoupled: bool = False
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.mode, str):
            self.mode = HeadMode(self.mode)
        if isinstance(self.graph_mode, str):
            self.graph_mode = rel.GraphMode(self.graph_mode)
        if self.mode is HeadMode.SRR and self.graph_mode is rel.GraphMode.NONE:
            self.graph_mode = rel.GraphMode.DYNAMIC
        if self.mode is not HeadMode.SRR and self.graph_mode is not rel.GraphMode.NONE:
            raise ValueError(f"graph mode {self.graph_mode.value!r} requires mode 'srr'")


_TRUNK_SUFFIXES = ("w1", "b1", "w2", "b2")


@dataclass
class Head:
    cfg: HeadConfig
    registry: ClassRegistry
    we: EmbeddingMatrix | None
    params: dict
    g_heur: np.ndarray | None = None
    relation: rel.RelationParams | None = None

    @property
    def mode(self) -> HeadMode:
        return self.cfg.mode

    @property
    def n_classes(self) -> int:
        return self.registry.n

    def param_list(self) -> list:
        return list(self.params.values())

    def trunk_names(self, branch: str) -> list:
        prefix = f"{branch}_trunk_" if self.cfg.decoupled else "trunk_"
        return [prefix + s for s in _TRUNK_SUFFIXES]

    def param_groups(self) -> dict:
        """Friendly group names used by training/CLI trainable selections."""
        groups = {}
        if self.mode is HeadMode.BASELINE:
            groups["W"] = ["W"]
        else:
            groups["P"] = ["P"]
        groups["b"] = ["b"]
        relation_names = [n for n in ("t_f", "t_g", "t_h", "t_l") if n in self.params]
        if relation_names:
            groups["relation"] = relation_names
        if self.cfg.decoupled:
            groups["cls_trunk"] = self.trunk_names("cls")
            groups["reg_trunk"] = self.trunk_names("reg")
            groups["trunk"] = groups["cls_trunk"] + groups["reg_trunk"]
        else:
            groups["trunk"] = self.trunk_names("cls")
        groups["reg"] = ["reg_w", "reg_b"]
        return groups

    def resolve_groups(self, names) -> set:
        groups = self.param_groups()
        out = set()
        for name in names:
            if name not in groups:
                raise ValueError(
                    f"unknown parameter group {name!r}; available: {sorted(groups)}"
                )
            out.update(groups[name])
        return out

    def set_trainable(self, param_names):
        wanted = set(param_names)
        unknown = wanted - set(self.params)
        if unknown:
            raise ValueError(f"unknown parameter names: {sorted(unknown)}")
        for name, p in self.params.items():
            p.trainable = name in wanted

    def trainable_names(self) -> list:
        return [name for name, p in self.params.items() if p.trainable]

    def param_hash(self, names=None) -> str:
        h = hashlib.sha256()
        for name in sorted(names if names is not None else self.params):
            p = self.params[name]
            h.update(name.encode())
            h.update(np.ascontiguousarray(p.value).tobytes())
        return h.hexdigest()

    def we_hash(self) -> str:
        return self.we.content_hash() if self.we is not None else ""


def _trunk_params(rng, prefix: str, d_in: int, d: int) -> dict:
    # relu-aware fan-in scaling; biases start at zero
    return {
        f"{prefix}w1": Param(f"{prefix}w1", rng.normal(0.0, np.sqrt(2.0 / d_in), (d, d_in))),
        f"{prefix}b1": Param(f"{prefix}b1", np.zeros((d, 1))),
        f"{prefix}w2": Param(f"{prefix}w2", rng.normal(0.0, np.sqrt(2.0 / d), (d, d))),
        f"{prefix}b2": Param(f"{prefix}b2", np.zeros((d, 1))),
    }


def build_head(cfg: HeadConfig, registry: ClassRegistry,
               we: EmbeddingMatrix | None = None) -> Head:
    """Allocate a head. SSP/SRR require an embedding matrix matching the registry."""
    rng = np.random.default_rng([cfg.seed, 0x4D])
    n = registry.n
    params = {}
    relation_params = None

    if cfg.mode is HeadMode.BASELINE:
        params["W"] = Param("W", rng.normal(0.0, 1.0 / np.sqrt(cfg.d), (n, cfg.d)))
        we = None
    else:
        if we is None:
            raise ValueError(f"mode {cfg.mode.value!r} needs an embedding matrix")
        if we.n != n:
            raise ValueError(
                f"embedding rows ({we.n}) do not match registry size ({n})"
            )
        params["P"] = Param("P", rng.normal(0.0, 1.0 / np.sqrt(cfg.d), (we.dim, cfg.d)))
        if cfg.mode is HeadMode.SRR and cfg.graph_mode is not rel.GraphMode.HEURISTIC:
            relation_params = rel.RelationParams.initialize(
                we.dim, cfg.r, seed=cfg.seed, scaled=cfg.scaled_attention,
                gain=cfg.attention_gain,
            )
            if cfg.graph_mode is rel.GraphMode.TRAINABLE_TRANSFORM:
                # the per-row ablation has no attention maps to train
                params["t_h"] = relation_params.t_h
                params["t_l"] = relation_params.t_l
            else:
                for p in relation_params.params():
                    params[p.name] = p

    params["b"] = Param("b", np.zeros((n, 1)))
    if cfg.decoupled:
        params.update(_trunk_params(rng, "cls_trunk_", cfg.d_in, cfg.d))
        params.update(_trunk_params(rng, "reg_trunk_", cfg.d_in, cfg.d))
    else:
        params.update(_trunk_params(rng, "trunk_", cfg.d_in, cfg.d))
    params["reg_w"] = Param("reg_w", rng.normal(0.0, 1.0 / np.sqrt(cfg.d), (REG_DIM, cfg.d)))
    params["reg_b"] = Param("reg_b", np.zeros((REG_DIM, 1)))

    head = Head(cfg=cfg, registry=registry, we=we, params=params, relation=relation_params)
    if cfg.graph_mode is rel.GraphMode.HEURISTIC:
        # caller attaches the co-occurrence graph afterwards
        head.g_heur = None
    return head


def attach_heuristic_graph(head: Head, graph: np.ndarray):
    g = dm.as_matrix(graph)
    if g.shape != (head.n_classes, head.n_classes):
        raise ValueError(
            f"heuristic graph shape {g.shape} does not match {head.n_classes} classes"
        )
    head.g_heur = g


# ---------------------------------------------------------------------------
# forward passes


@dataclass
class ForwardResult:
    tape: Tape
    logits: "dm.Tensor"
    loss_cls: "dm.Tensor | None" = None
    loss_reg: "dm.Tensor | None" = None
    loss: "dm.Tensor | None" = None


def _trunk_t(tape: Tape, head: Head, branch: str, x_t):
    names = head.trunk_names(branch)
    w1, b1, w2, b2 = (tape.param(head.params[n]) for n in names)
    h = dm.relu(dm.add_bias(dm.matmul(w1, x_t), b1))
    return dm.add_bias(dm.matmul(w2, h), b2)


def _effective_rows_t(tape: Tape, head: Head):
    """Class rows on the tape: W, raw We, or relation-refined We."""
    if head.mode is HeadMode.BASELINE:
        return tape.param(head.params["W"])
    we_t = tape.leaf(head.we.matrix)
    if head.mode is HeadMode.SSP:
        return we_t
    gm = head.cfg.graph_mode
    if gm is rel.GraphMode.DYNAMIC:
        rp_t = {n: tape.param(head.params[n]) for n in ("t_f", "t_g", "t_h", "t_l")}
        return rel.relation_forward_t(we_t, rp_t, head.cfg.scaled_attention)
    if gm is rel.GraphMode.TRAINABLE_TRANSFORM:
        rp_t = {n: tape.param(head.params[n]) for n in ("t_h", "t_l")}
        return rel.trainable_transform_t(we_t, rp_t)
    if gm is rel.GraphMode.HEURISTIC:
        if head.g_heur is None:
            raise ValueError("heuristic graph mode without an attached co-occurrence graph")
        return dm.matmul(tape.leaf(head.g_heur), we_t)
    raise ValueError(f"unsupported graph mode {gm!r}")


def _class_scores_t(tape: Tape, head: Head, v_t, use_graph: bool = True):
    b = tape.param(head.params["b"])
    if head.mode is HeadMode.BASELINE:
        rows = tape.param(head.params["W"])
        return dm.add_bias(dm.matmul(rows, v_t), b)
    p = tape.param(head.params["P"])
    projected = dm.matmul(p, v_t)
    if head.mode is HeadMode.SRR and not use_graph:
        rows = tape.leaf(head.we.matrix)
    else:
        rows = _effective_rows_t(tape, head)
    return dm.add_bias(dm.matmul(rows, projected), b)


def forward_pass(head: Head, x, labels=None, reg_targets=None,
                 reg_weight: float = 1.0, use_graph: bool = True) -> ForwardResult:
    """Run trunk + classifier (and regression when targets given) on a batch.

    ``x`` is (d_in, batch) with features as columns.  Losses are attached when
    the corresponding targets are present; ``loss`` is their weighted sum.
    """
    tape = Tape()
    x_t = tape.leaf(dm.as_matrix(x))
    if x_t.value.shape[0] != head.cfg.d_in:
        raise ValueError(
            f"feature dim {x_t.value.shape[0]} does not match head d_in={head.cfg.d_in}"
        )
    v_cls = _trunk_t(tape, head, "cls", x_t)
    logits = _class_scores_t(tape, head, v_cls, use_graph=use_graph)

    result = ForwardResult(tape=tape, logits=logits)
    terms = []
    if labels is not None:
        result.loss_cls = dm.cross_entropy_cols(logits, labels)
        terms.append((result.loss_cls, 1.0))
    if reg_targets is not None:
        v_reg = _trunk_t(tape, head, "reg", x_t) if head.cfg.decoupled else v_cls
        reg_w = tape.param(head.params["reg_w"])
        reg_b = tape.param(head.params["reg_b"])
        pred = dm.add_bias(dm.matmul(reg_w, v_reg), reg_b)
        result.loss_reg = dm.squared_error_cols(pred, reg_targets)
        terms.append((result.loss_reg, reg_weight))
    if terms:
        result.loss = dm.weighted_sum(terms)
    return result


def batch_forward(head: Head, records, reg_weight: float = 1.0,
                  use_graph: bool = True, with_reg: bool = True) -> ForwardResult:
    """Forward a list of FeatureRecords; labels resolve through the registry."""
    if not records:
        raise ValueError("empty batch")
    x = batch_features(records)
    labels = [head.registry.index(r.label) for r in records]
    reg_targets = None
    if with_reg and all(r.reg is not None for r in records):
        reg_targets = np.stack([r.reg for r in records], axis=1)
    return forward_pass(
        head, x, labels=labels, reg_targets=reg_targets,
        reg_weight=reg_weight, use_graph=use_graph,
    )


# ---------------------------------------------------------------------------
# single-vector conveniences (post-trunk feature -> logits)


def _single_scores(head: Head, v, expected_mode, use_graph: bool = True) -> np.ndarray:
    if head.mode is not expected_mode:
        raise ValueError(
            f"head mode is {head.mode.value!r}, this entry point needs "
            f"{expected_mode.value!r}"
        )
    v = dm.as_matrix(v)
    if v.shape != (head.cfg.d, 1):
        raise ValueError(f"expected a ({head.cfg.d},) feature vector, got shape {v.shape}")
    tape = Tape()
    v_t = tape.leaf(v)
    return _class_scores_t(tape, head, v_t, use_graph=use_graph).value.reshape(-1)


def logits_baseline(head: Head, v) -> np.ndarray:
    return _single_scores(head, v, HeadMode.BASELINE)


def logits_ssp(head: Head, v) -> np.ndarray:
    return _single_scores(head, v, HeadMode.SSP)


def logits_srr(head: Head, v) -> np.ndarray:
    return _single_scores(head, v, HeadMode.SRR)


def trunk_forward(head: Head, raw, branch: str = "cls") -> np.ndarray:
    """Map a raw d_in feature vector through one trunk branch."""
    if branch not in ("cls", "reg"):
        raise ValueError(f"branch must be 'cls' or 'reg', got {branch!r}")
    x = dm.as_matrix(raw)
    if x.shape != (head.cfg.d_in, 1):
        raise ValueError(f"expected a ({head.cfg.d_in},) raw vector, got shape {x.shape}")
    tape = Tape()
    return _trunk_t(tape, head, branch, tape.leaf(x)).value.reshape(-1)


def regression_forward(head: Head, v) -> np.ndarray:
    """Linear regression outputs from a post-trunk feature vector."""
    v = dm.as_matrix(v)
    if v.shape != (head.cfg.d, 1):
        raise ValueError(f"expected a ({head.cfg.d},) feature vector, got shape {v.shape}")
    return (head.params["reg_w"].value @ v + head.params["reg_b"].value).reshape(-1)


# ---------------------------------------------------------------------------
# structural edits


def _class_bias_mean(b: np.ndarray, background_index: int) -> float:
    """Average bias of the real (non-background) classes already present."""
    return float(b[:background_index].mean()) if background_index else 0.0


def expand_classes(head: Head, new_registry: ClassRegistry, novel_rows,
                   provenance=None) -> Head:
    """Register new novel classes on an SSP/SRR head.

    New embedding rows (unit-normalized here) slide in just before the
    background row; biases for the new classes start at the mean of the base
    biases, so a fresh class enters with the average class prior rather than
    an artificially depressed one.  Every existing parameter is untouched, so
    base-class scores shift only through whatever the relation graph now
    mixes in.
    """
    if head.mode is HeadMode.BASELINE:
        raise ValueError("baseline heads learn W rows per class; use expand_baseline")
    if new_registry.base != head.registry.base:
        raise ValueError("expanded registry must keep the same base classes")
    old_novel = head.registry.novel
    if new_registry.novel[: len(old_novel)] != old_novel:
        raise ValueError("expanded registry must keep existing novel classes in order")
    added = new_registry.novel[len(old_novel):]
    if not added:
        raise ValueError("no new classes to add")
    rows = dm.as_matrix(novel_rows)
    if rows.shape != (len(added), head.we.dim):
        raise ValueError(
            f"novel rows shape {rows.shape}, expected ({len(added)}, {head.we.dim})"
        )
    rows = dm.l2_normalize_rows(rows)

    bg = head.registry.background_index
    matrix = np.vstack([head.we.matrix[:bg], rows, head.we.matrix[bg:]])
    prov = None
    if head.we.provenance:
        extra = tuple(provenance) if provenance else tuple(f"expanded:{n}" for n in added)
        prov = head.we.provenance[:bg] + extra + head.we.provenance[bg:]
    head.we = EmbeddingMatrix(matrix, prov or ())

    b = head.params["b"].value
    fill = np.full((len(added), 1), _class_bias_mean(b, bg))
    head.params["b"] = Param("b", np.vstack([b[:bg], fill, b[bg:]]))
    head.registry = new_registry
    # a heuristic graph no longer matches the class count; force a re-attach
    head.g_heur = None
    return head


def expand_baseline(head: Head, new_registry: ClassRegistry, seed: int = 0,
                    init_std: float | None = None) -> Head:
    """Grow a baseline head: fresh Gaussian W rows and mean-prior biases for
    the added classes, existing rows copied bit-for-bit.

    By default the new rows are drawn at the RMS magnitude of the trained
    rows, so comparisons against embedding-anchored heads measure what the
    anchor *directions* are worth rather than a head start in row norm.
    Pass an explicit ``init_std`` to override."""
    if head.mode is not HeadMode.BASELINE:
        raise ValueError("expand_baseline only applies to baseline heads")
    if new_registry.base != head.registry.base:
        raise ValueError("expanded registry must keep the same base classes")
    old_novel = head.registry.novel
    if new_registry.novel[: len(old_novel)] != old_novel:
        raise ValueError("expanded registry must keep existing novel classes in order")
    added = new_registry.novel[len(old_novel):]
    if not added:
        raise ValueError("no new classes to add")
    rng = np.random.default_rng([seed, 0xE1])
    bg = head.registry.background_index
    w = head.params["W"].value
    if init_std is None:
        init_std = float(np.sqrt((w[:bg] ** 2).mean())) if bg else 0.01
    new_rows = rng.normal(0.0, init_std, (len(added), head.cfg.d))
    head.params["W"] = Param("W", np.vstack([w[:bg], new_rows, w[bg:]]))
    b = head.params["b"].value
    fill = np.full((len(added), 1), _class_bias_mean(b, bg))
    head.params["b"] = Param("b", np.vstack([b[:bg], fill, b[bg:]]))
    head.registry = new_registry
    return head


def decouple_trunks(head: Head) -> Head:
    """Split the shared trunk into independent classifier and regression
    copies (both start from the shared weights)."""
    if head.cfg.decoupled:
        raise ValueError("trunks are already decoupled")
    shared = {s: head.params.pop("trunk_" + s) for s in _TRUNK_SUFFIXES}
    for branch in ("cls", "reg"):
        for s in _TRUNK_SUFFIXES:
            name = f"{branch}_trunk_{s}"
            head.params[name] = Param(name, shared[s].value.copy())
    head.cfg = replace(head.cfg, decoupled=True)
    return head


# ---------------------------------------------------------------------------
# checkpoints

_CHECKPOINT_FORMAT = "semshot-head-v1"


def head_state(head: Head) -> dict:
    state = {
        "format": _CHECKPOINT_FORMAT,
        "mode": head.cfg.mode.value,
        "graph_mode": head.cfg.graph_mode.value,
        "dims": {"d_in": head.cfg.d_in, "d": head.cfg.d, "r": head.cfg.r},
        "scaled_attention": head.cfg.scaled_attention,
        "attention_gain": head.cfg.attention_gain,
        "graph_in_base": head.cfg.graph_in_base,
        "decoupled": head.cfg.decoupled,
        "seed": head.cfg.seed,
        "registry": head.registry.to_json(),
        "params": {name: p.value.tolist() for name, p in head.params.items()},
        "trainable": {name: p.trainable for name, p in head.params.items()},
        "we": None,
        "g_heur": head.g_heur.tolist() if head.g_heur is not None else None,
    }
    if head.we is not None:
        state["we"] = {
            "matrix": head.we.matrix.tolist(),
            "provenance": list(head.we.provenance),
            "hash": head.we.content_hash(),
        }
    return state


def head_from_state(state: dict) -> Head:
    if state.get("format") != _CHECKPOINT_FORMAT:
        raise ValueError(f"unrecognized checkpoint format {state.get('format')!r}")
    cfg = HeadConfig(
        mode=state["mode"],
        graph_mode=state["graph_mode"],
        d_in=state["dims"]["d_in"],
        d=state["dims"]["d"],
        r=state["dims"]["r"],
        scaled_attention=state["scaled_attention"],
        attention_gain=state["attention_gain"],
        graph_in_base=state["graph_in_base"],
        decoupled=state["decoupled"],
        seed=state["seed"],
    )
    registry = ClassRegistry.from_json(state["registry"])
    we = None
    if state["we"] is not None:
        we = EmbeddingMatrix(
            np.array(state["we"]["matrix"]), tuple(state["we"]["provenance"])
        )
        if we.content_hash() != state["we"]["hash"]:
            raise ValueError("embedding matrix hash mismatch in checkpoint")
    params = {
        name: Param(name, np.array(values), trainable=state["trainable"][name])
        for name, values in state["params"].items()
    }
    relation_params = None
    if {"t_f", "t_g", "t_h", "t_l"} <= set(params):
        relation_params = rel.RelationParams(
            t_f=params["t_f"], t_g=params["t_g"], t_h=params["t_h"], t_l=params["t_l"],
            scaled=cfg.scaled_attention,
        )
    head = Head(cfg=cfg, registry=registry, we=we, params=params, relation=relation_params)
    if state.get("g_heur") is not None:
        head.g_heur = np.array(state["g_heur"])
    return head


def save_head(head: Head, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(head_state(head), fh, sort_keys=True)
        fh.write("\n")


def load_head(path) -> Head:
    with open(path, encoding="utf-8") as fh:
        return head_from_state(json.load(fh))
