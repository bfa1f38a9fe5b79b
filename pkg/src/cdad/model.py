"""Attention-based graph convolution blocks and the two-stage
shared -> domain-specific forecasting model.

Stage 1 convolves concatenated per-node window features on the union of
all domain edge sets, producing a 2H-wide shared embedding per node.
Stage 2 splits it in half and convolves each half on its own domain's
graph; per-domain MLP heads predict the next-step node values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNorm, Parameter, Tensor
from .ingest import NETWORK, PHYSICAL

ATTENTION_SLOPE = 0.2  # attention score activation
HEAD_SLOPE = 0.01  # MLP head activation

NEG_MASK = -1e9  # additive mask for non-candidate attention entries


@dataclass
class ModelConfig:
    num_nodes: int
    window: int = 15
    embed_dim: int = 32  # H, per-domain embedding width
    depth: int = 2
    dropout: float = 0.2
    attention: bool = True
    head_hidden: int = 128
    channels: dict = field(default_factory=lambda: {PHYSICAL: 1, NETWORK: 3})
    seed: int = 0

    @property
    def domains(self) -> list[str]:
        return list(self.channels)

    @property
    def input_dim(self) -> int:
        return self.window * sum(self.channels.values())


class AttnConvBlock:
    """One graph conv layer: attention-weighted neighbor aggregation, linear
    map, ReLU. Candidates of node i are its neighbors plus i itself."""

    def __init__(self, name: str, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.W = Parameter(f"{name}.W", rng.normal(0.0, 1.0 / np.sqrt(in_dim), (in_dim, out_dim)))
        self.a = Parameter(f"{name}.a", rng.normal(0.0, 0.1, 2 * in_dim))

    def params(self):
        return [self.W, self.a]

    def coefficients(self, X: Tensor, adjacency: np.ndarray, attention: bool = True) -> Tensor:
        """Row-normalized attention over each node's candidate set.

        X is (..., N, F); returns (..., N, N) rows summing to 1 over
        candidates, zero elsewhere. With attention off, candidates get
        equal weight.
        """
        N = adjacency.shape[0]
        candidates = adjacency + np.eye(N)
        if not attention:
            return ad.constant(candidates / candidates.sum(axis=1, keepdims=True))
        F = self.in_dim
        a_self = ad.narrow(self.a, 0, 0, F)
        a_nbr = ad.narrow(self.a, 0, F, F)
        f = ad.matmul(X, ad.reshape(a_self, (F, 1)))  # (..., N, 1): a_self . x_i
        g = ad.matmul(X, ad.reshape(a_nbr, (F, 1)))  # (..., N, 1): a_nbr . x_j
        g_row = ad.reshape(g, g.shape[:-2] + (1, N))
        scores = ad.leaky_relu(ad.add(f, g_row), ATTENTION_SLOPE)
        masked = ad.add(scores, (candidates - 1.0) * (-NEG_MASK))
        return ad.softmax(masked, axis=-1)

    def forward(
        self,
        X: Tensor,
        adjacency: np.ndarray,
        attention: bool = True,
        dropout_p: float = 0.0,
        rng: np.random.Generator | None = None,
        train: bool = False,
    ) -> Tensor:
        lam = self.coefficients(X, adjacency, attention)
        agg = ad.matmul(lam, X)
        out = ad.relu(ad.matmul(agg, self.W))
        return ad.dropout(out, dropout_p, rng, train)


class ConvStack:
    """`depth` attention conv blocks applied in sequence."""

    def __init__(self, name: str, in_dim: int, out_dim: int, depth: int, rng: np.random.Generator):
        self.blocks = []
        d_in = in_dim
        for layer in range(depth):
            self.blocks.append(AttnConvBlock(f"{name}.{layer}", d_in, out_dim, rng))
            d_in = out_dim

    def params(self):
        return [p for b in self.blocks for p in b.params()]

    def forward(self, X, adjacency, attention, dropout_p, rng, train):
        for b in self.blocks:
            X = b.forward(X, adjacency, attention, dropout_p, rng, train)
        return X


class PredictionHead:
    """Three-layer MLP: (affine, batch-norm, leaky-rectifier) twice, then a
    final affine to N * C outputs."""

    def __init__(self, name: str, in_dim: int, hidden: int, out_dim: int, rng: np.random.Generator):
        def affine(tag, n_in, n_out):
            w = Parameter(f"{name}.{tag}.w", rng.normal(0.0, 1.0 / np.sqrt(n_in), (n_in, n_out)))
            b = Parameter(f"{name}.{tag}.b", np.zeros(n_out))
            return w, b

        self.w1, self.b1 = affine("l1", in_dim, hidden)
        self.bn1 = BatchNorm(f"{name}.bn1", hidden)
        self.w2, self.b2 = affine("l2", hidden, hidden)
        self.bn2 = BatchNorm(f"{name}.bn2", hidden)
        self.w3, self.b3 = affine("l3", hidden, out_dim)

    def params(self):
        return [
            self.w1, self.b1, *self.bn1.params(),
            self.w2, self.b2, *self.bn2.params(),
            self.w3, self.b3,
        ]

    def batch_norms(self):
        return [self.bn1, self.bn2]

    def forward(self, x: Tensor, train: bool) -> Tensor:
        h = ad.leaky_relu(self.bn1(ad.add(ad.matmul(x, self.w1), self.b1), train), HEAD_SLOPE)
        h = ad.leaky_relu(self.bn2(ad.add(ad.matmul(h, self.w2), self.b2), train), HEAD_SLOPE)
        return ad.add(ad.matmul(h, self.w3), self.b3)


class CrossDomainModel:
    """Shared conv stack over the multi-graph, per-domain conv stacks and
    prediction heads. Parameters are grouped as `shared` (updated with the
    combined task gradient) and one group per domain."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        H = cfg.embed_dim
        N = cfg.num_nodes
        self.shared_stack = ConvStack("shared", cfg.input_dim, len(cfg.domains) * H, cfg.depth, rng)
        self.domain_stacks: dict[str, ConvStack] = {}
        self.node_vectors: dict[str, Parameter] = {}
        self.heads: dict[str, PredictionHead] = {}
        for d in cfg.domains:
            self.domain_stacks[d] = ConvStack(f"domain.{d}", H, H, cfg.depth, rng)
            self.node_vectors[d] = Parameter(f"nodevec.{d}", rng.normal(0.0, 1.0, (N, H)))
            self.heads[d] = PredictionHead(
                f"head.{d}", N * H, cfg.head_hidden, N * cfg.channels[d], rng
            )
        self.dropout_rng = np.random.default_rng(cfg.seed + 1)

    # ---------------------------------------------------------- parameters

    def shared_params(self):
        return self.shared_stack.params()

    def domain_params(self, domain: str):
        return (
            self.domain_stacks[domain].params()
            + [self.node_vectors[domain]]
            + self.heads[domain].params()
        )

    def all_params(self):
        out = list(self.shared_params())
        for d in self.cfg.domains:
            out.extend(self.domain_params(d))
        return out

    def batch_norms(self):
        return [bn for d in self.cfg.domains for bn in self.heads[d].batch_norms()]

    # ------------------------------------------------------------- forward

    def shared_forward(self, X: Tensor, union_adjacency: np.ndarray, train: bool) -> Tensor:
        """X: (B, N, input_dim) concatenated window features -> (B, N, 2H)."""
        return self.shared_stack.forward(
            X, union_adjacency, self.cfg.attention, self.cfg.dropout, self.dropout_rng, train
        )

    def split_embeddings(self, shared: Tensor) -> dict[str, Tensor]:
        width = shared.shape[-1]
        D = len(self.cfg.domains)
        if width % D != 0:
            raise ValueError(f"shared embedding width {width} does not split into {D} domains")
        H = width // D
        return {
            d: ad.narrow(shared, -1, i * H, H) for i, d in enumerate(self.cfg.domains)
        }

    def domain_forward(self, domain: str, X_d: Tensor, adjacency: np.ndarray, train: bool) -> Tensor:
        return self.domain_stacks[domain].forward(
            X_d, adjacency, self.cfg.attention, self.cfg.dropout, self.dropout_rng, train
        )

    def predict_head(self, domain: str, X_d: Tensor, train: bool) -> Tensor:
        """X_d: (B, N, H) -> predictions (B, N, C_d)."""
        B, N, H = X_d.shape
        gated = ad.mul(X_d, self.node_vectors[domain])
        flat = ad.reshape(gated, (B, N * H))
        out = self.heads[domain].forward(flat, train)
        return ad.reshape(out, (B, N, self.cfg.channels[domain]))

    def forward(
        self,
        batch_inputs: dict[str, np.ndarray],
        adjacencies: dict[str, np.ndarray],
        union_adjacency: np.ndarray,
        train: bool = False,
        domains: list[str] | None = None,
    ) -> dict[str, Tensor]:
        """batch_inputs[d]: (B, N, C_d, w) -> per-domain predictions (B, N, C_d).

        The shared stage always consumes the concatenation of all configured
        domains' window features (domain order fixed by the config).
        """
        parts = []
        for d in self.cfg.domains:
            x = batch_inputs[d]
            B, N, C, w = x.shape
            parts.append(x.reshape(B, N, C * w))
        X = ad.constant(np.concatenate(parts, axis=-1))
        shared = self.shared_forward(X, union_adjacency, train)
        halves = self.split_embeddings(shared)
        preds = {}
        for d in domains or self.cfg.domains:
            emb = self.domain_forward(d, halves[d], adjacencies[d], train)
            preds[d] = self.predict_head(d, emb, train)
        return preds


def domain_loss(pred: Tensor, actual: np.ndarray) -> Tensor:
    """Mean absolute error between predicted and observed next-step values."""
    return ad.mean_absolute_error(pred, ad.constant(actual))


# --------------------------------------------------------------- checkpoint


def _bn_names(model: CrossDomainModel):
    for i, bn in enumerate(model.batch_norms()):
        yield f"__bn{i}.mean", f"__bn{i}.var", bn


def save_model(path, model: CrossDomainModel, meta: dict | None = None) -> None:
    """Parameter checkpoint plus a JSON config line; batch-norm running
    statistics ride along as extra entries."""
    import json

    cfg = model.cfg
    header = dict(meta or {})
    header.update(
        {
            "num_nodes": cfg.num_nodes,
            "window": cfg.window,
            "embed_dim": cfg.embed_dim,
            "depth": cfg.depth,
            "dropout": cfg.dropout,
            "attention": cfg.attention,
            "head_hidden": cfg.head_hidden,
            "channels": cfg.channels,
            "seed": cfg.seed,
        }
    )
    params = list(model.all_params())
    for mean_name, var_name, bn in _bn_names(model):
        params.append(Parameter(mean_name, bn.running_mean))
        params.append(Parameter(var_name, bn.running_var))
    # no key sorting: the channels dict's order defines the domain order
    ad.save_params(path, params, extra_lines=["config " + json.dumps(header)])


def load_model(path) -> tuple[CrossDomainModel, dict]:
    import json

    meta = {}
    with open(path) as f:
        f.readline()
        line = f.readline()
        if line.startswith("# config "):
            meta = json.loads(line[len("# config "):])
    cfg = ModelConfig(
        num_nodes=meta["num_nodes"],
        window=meta["window"],
        embed_dim=meta["embed_dim"],
        depth=meta["depth"],
        dropout=meta["dropout"],
        attention=meta["attention"],
        head_hidden=meta["head_hidden"],
        channels=dict(meta["channels"]),
        seed=meta["seed"],
    )
    model = CrossDomainModel(cfg)
    values = ad.load_params(path)
    for p in model.all_params():
        p.data[...] = values[p.name]
    for mean_name, var_name, bn in _bn_names(model):
        bn.running_mean[...] = values[mean_name]
        bn.running_var[...] = values[var_name]
    return model, meta
