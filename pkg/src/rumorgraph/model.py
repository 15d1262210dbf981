"""Two-layer graph convolution with claim-residual concatenation.

Each layer mixes node states through the normalized adjacency, applies a
learned linear map and ReLU, then concatenates the claim's previous hidden
state onto every row and layer-normalizes the result. The event
representation is the column-wise mean of the final node states, and a
single affine head plus softmax produces class probabilities.

Several events can be encoded in one pass by stacking their node features
and placing their adjacencies on a block diagonal; per-event pooling and
claim lookups are index-based, so the batched pass computes exactly the
same function as event-at-a-time encoding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import numcore as nc
from .numcore import RngStreams, Tensor
from .propagation import PropagationGraph

SNAPSHOT_VERSION = 1
PARAM_ORDER = ("w0", "b0", "ln1_gain", "ln1_bias", "w1", "b1", "ln2_gain", "ln2_bias", "wc", "bc")


@dataclass(frozen=True)
class ModelConfig:
    d_in: int
    d_hidden: int = 512
    d_out: int = 128
    classes: int = 2
    layers: int = 2
    dropout: float = 0.2
    layer_norm_eps: float = 1e-5

    def __post_init__(self):
        for name in ("d_in", "d_hidden", "d_out", "classes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.layers != 2:
            raise ValueError("only a depth of 2 is supported")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")

    @property
    def rep_dim(self) -> int:
        """Width of the event representation (last hidden + claim residual)."""
        return self.d_out + self.d_hidden

    def to_dict(self) -> dict:
        return {
            "d_in": self.d_in,
            "d_hidden": self.d_hidden,
            "d_out": self.d_out,
            "classes": self.classes,
            "layers": self.layers,
            "dropout": self.dropout,
            "layer_norm_eps": self.layer_norm_eps,
        }


def param_count(cfg: ModelConfig) -> int:
    """Closed-form number of trainable scalars."""
    mid = cfg.d_hidden + cfg.d_in
    top = cfg.d_out + cfg.d_hidden
    return (
        cfg.d_in * cfg.d_hidden
        + cfg.d_hidden
        + 2 * mid
        + mid * cfg.d_out
        + cfg.d_out
        + 2 * top
        + top * cfg.classes
        + cfg.classes
    )


@dataclass
class ModelParams:
    """Named trainable tensors in snapshot order."""

    tensors: dict[str, Tensor]
    config: ModelConfig

    def __getattr__(self, name: str):
        tensors = self.__dict__.get("tensors", {})
        if name in tensors:
            return tensors[name]
        raise AttributeError(name)

    def count(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def copy_values(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.tensors.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for name, t in self.tensors.items():
            t.data = np.asarray(values[name], dtype=nc.active_dtype()).reshape(t.data.shape)


def init_params(cfg: ModelConfig, streams: RngStreams) -> ModelParams:
    """Glorot-uniform weights, zero biases, unit/zero normalization affine."""
    gen = streams.init
    mid = cfg.d_hidden + cfg.d_in
    top = cfg.rep_dim
    dtype = nc.active_dtype()
    tensors = {
        "w0": nc.glorot_init((cfg.d_in, cfg.d_hidden), gen, "w0"),
        "b0": nc.parameter(np.zeros(cfg.d_hidden, dtype=dtype), "b0"),
        "ln1_gain": nc.parameter(np.ones(mid, dtype=dtype), "ln1_gain"),
        "ln1_bias": nc.parameter(np.zeros(mid, dtype=dtype), "ln1_bias"),
        "w1": nc.glorot_init((mid, cfg.d_out), gen, "w1"),
        "b1": nc.parameter(np.zeros(cfg.d_out, dtype=dtype), "b1"),
        "ln2_gain": nc.parameter(np.ones(top, dtype=dtype), "ln2_gain"),
        "ln2_bias": nc.parameter(np.zeros(top, dtype=dtype), "ln2_bias"),
        "wc": nc.glorot_init((top, cfg.classes), gen, "wc"),
        "bc": nc.parameter(np.zeros(cfg.classes, dtype=dtype), "bc"),
    }
    return ModelParams(tensors=tensors, config=cfg)


# -- batched encoding ----------------------------------------------------------


@dataclass
class GraphBatch:
    """Several events stacked for a single encoding pass."""

    sizes: list[int]
    features: np.ndarray  # (sum(sizes), d_in)
    mixing: np.ndarray  # block-diagonal normalized adjacency
    claim_index: np.ndarray  # per node, the global row of its event's claim

    @classmethod
    def from_events(cls, embeddings: list[np.ndarray], graphs: list[PropagationGraph]) -> "GraphBatch":
        sizes = [g.n for g in graphs]
        total = sum(sizes)
        if [e.shape[0] for e in embeddings] != sizes:
            raise nc.ShapeError(
                f"embedding row counts {[e.shape[0] for e in embeddings]} do not match graphs {sizes}"
            )
        features = np.concatenate(embeddings, axis=0)
        mixing = np.zeros((total, total), dtype=np.float64)
        claim_index = np.empty(total, dtype=np.intp)
        offset = 0
        for size, graph in zip(sizes, graphs):
            mixing[offset : offset + size, offset : offset + size] = graph.normalized
            claim_index[offset : offset + size] = offset
            offset += size
        return cls(sizes=sizes, features=features, mixing=mixing, claim_index=claim_index)


@dataclass
class EncodeResult:
    node_states: Tensor  # (sum(sizes), d_out + d_hidden)
    reps: Tensor  # (events, d_out + d_hidden)
    probs: Tensor  # (events, classes)


def encode_batch(
    batch: GraphBatch,
    params: ModelParams,
    mode: str = "eval",
    streams: RngStreams | None = None,
) -> EncodeResult:
    """Run the two-scale convolution over a stacked batch of events."""
    cfg = params.config
    if batch.features.shape[1] != cfg.d_in:
        raise nc.ShapeError(f"feature width {batch.features.shape[1]} does not match d_in {cfg.d_in}")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if mode == "train" and cfg.dropout > 0.0 and streams is None:
        raise ValueError("train mode with dropout requires RNG streams")

    x = Tensor(np.asarray(batch.features, dtype=nc.active_dtype()))
    mixing = Tensor(np.asarray(batch.mixing, dtype=nc.active_dtype()))
    eps = cfg.layer_norm_eps

    h1 = nc.relu(nc.matmul(mixing, nc.matmul(x, params.w0)) + params.b0)
    h1_tilde = nc.layer_norm(
        nc.concat_cols(h1, nc.gather_rows(x, batch.claim_index)),
        params.ln1_gain,
        params.ln1_bias,
        eps,
    )
    if mode == "train" and cfg.dropout > 0.0:
        keep = streams.dropout.random(h1_tilde.shape) >= cfg.dropout
        # mask-and-zero: survivors are not rescaled
        h1_tilde = h1_tilde * Tensor(keep.astype(nc.active_dtype()))

    h2 = nc.relu(nc.matmul(mixing, nc.matmul(h1_tilde, params.w1)) + params.b1)
    h2_tilde = nc.layer_norm(
        nc.concat_cols(h2, nc.gather_rows(h1, batch.claim_index)),
        params.ln2_gain,
        params.ln2_bias,
        eps,
    )
    reps = nc.segment_mean(h2_tilde, batch.sizes)
    probs = nc.softmax_rows(nc.matmul(reps, params.wc) + params.bc)
    return EncodeResult(node_states=h2_tilde, reps=reps, probs=probs)


def forward(
    embedding_rows: np.ndarray,
    graph: PropagationGraph,
    params: ModelParams,
    mode: str = "eval",
    streams: RngStreams | None = None,
) -> tuple[Tensor, Tensor, Tensor]:
    """Encode one event; returns (node states, event representation, probabilities)."""
    if embedding_rows.shape[0] != graph.n:
        raise nc.ShapeError(
            f"embedding rows {embedding_rows.shape[0]} do not match graph size {graph.n}"
        )
    batch = GraphBatch.from_events([embedding_rows], [graph])
    result = encode_batch(batch, params, mode=mode, streams=streams)
    return result.node_states, result.reps, result.probs


# -- snapshots -----------------------------------------------------------------


def save_snapshot(params: ModelParams, seed: int, path) -> None:
    """Header JSON line, then the parameter tensors as little-endian float64."""
    header = {
        "format_version": SNAPSHOT_VERSION,
        "config": params.config.to_dict(),
        "seed": seed,
        "order": list(PARAM_ORDER),
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        for name in PARAM_ORDER:
            fh.write(params.tensors[name].data.astype("<f8").tobytes())


def load_snapshot(path) -> tuple[ModelParams, int]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format_version") != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {header.get('format_version')}")
        cfg = ModelConfig(**header["config"])
        params = init_params(cfg, RngStreams(0))
        for name in header["order"]:
            t = params.tensors[name]
            raw = fh.read(t.data.size * 8)
            if len(raw) != t.data.size * 8:
                raise ValueError(f"snapshot truncated while reading {name!r}")
            t.data = (
                np.frombuffer(raw, dtype="<f8").reshape(t.data.shape).astype(nc.active_dtype())
            )
    return params, header["seed"]
