"""Per-domain cosine top-k graphs and their assembly into one multi-graph.

Node embeddings for graph construction are the normalized training series
per node (channels concatenated). Each domain gets its own edge set over
the shared node set; a node pair may be linked in several domains.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ingest import DomainSeries

DEFAULT_TOPK = 20


@dataclass
class NodeEmbeddingMatrix:
    domain_id: str
    rows: np.ndarray  # N x L


@dataclass
class DomainGraph:
    domain_id: str
    adjacency: np.ndarray  # N x N binary, symmetric, zero diagonal
    similarities: np.ndarray  # N x N cosine values (stored, unused by the model)

    @property
    def num_nodes(self) -> int:
        return self.adjacency.shape[0]

    def edges(self) -> list[tuple[int, int]]:
        ii, jj = np.nonzero(np.triu(self.adjacency, k=1))
        return list(zip(ii.tolist(), jj.tolist()))


@dataclass
class MultiGraph:
    num_nodes: int
    graphs: dict[str, DomainGraph]
    shared_features: np.ndarray  # N x sum of per-domain embedding lengths

    def union_adjacency(self) -> np.ndarray:
        out = np.zeros((self.num_nodes, self.num_nodes))
        for g in self.graphs.values():
            out = np.maximum(out, g.adjacency)
        return out


def domain_node_embeddings(train: DomainSeries) -> NodeEmbeddingMatrix:
    """Row i = node i's normalized training values, channels concatenated."""
    if train.num_steps == 0:
        raise ValueError("empty series has no embeddings")
    N, C, T = train.data.shape
    return NodeEmbeddingMatrix(domain_id=train.domain_id, rows=train.data.reshape(N, C * T).copy())


def cosine_matrix(emb: NodeEmbeddingMatrix) -> np.ndarray:
    """Pairwise cosine similarity; rows with zero norm get similarity 0."""
    X = emb.rows
    norms = np.linalg.norm(X, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    E = (X @ X.T) / np.outer(safe, safe)
    zero = norms == 0
    E[zero, :] = 0.0
    E[:, zero] = 0.0
    return E


def topk_neighbors(E: np.ndarray, k: int = DEFAULT_TOPK) -> list[list[int]]:
    """Indices of the k most similar other nodes per node. Ties at the cutoff
    go to the lower node index; self is never a neighbor."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    N = E.shape[0]
    kk = min(k, N - 1)
    out = []
    for i in range(N):
        sims = E[i].copy()
        sims[i] = -np.inf
        order = np.argsort(-sims, kind="stable")  # stable: lower index wins ties
        out.append(sorted(order[:kk].tolist()))
    return out


def build_adjacency(neighbors: list[list[int]], similarities: np.ndarray, domain_id: str) -> DomainGraph:
    """Union-symmetrized adjacency: i-j linked if either picked the other."""
    N = len(neighbors)
    A = np.zeros((N, N))
    for i, nbrs in enumerate(neighbors):
        for j in nbrs:
            A[i, j] = 1.0
            A[j, i] = 1.0
    np.fill_diagonal(A, 0.0)
    return DomainGraph(domain_id=domain_id, adjacency=A, similarities=similarities)


def build_domain_graph(train: DomainSeries, k: int = DEFAULT_TOPK) -> tuple[DomainGraph, NodeEmbeddingMatrix]:
    emb = domain_node_embeddings(train)
    E = cosine_matrix(emb)
    return build_adjacency(topk_neighbors(E, k), E, train.domain_id), emb


def assemble_multigraph(
    graphs: dict[str, DomainGraph], embeddings: dict[str, NodeEmbeddingMatrix]
) -> MultiGraph:
    """Keep per-domain edge sets distinct; shared features are the per-node
    concatenation of domain embeddings in dict order (physical first)."""
    counts = {g.num_nodes for g in graphs.values()}
    if len(counts) != 1:
        raise ValueError(f"domains disagree on node count: {sorted(counts)}")
    row_counts = {embeddings[d].rows.shape[0] for d in graphs}
    if row_counts != counts:
        raise ValueError("embedding row count does not match graph node count")
    shared = np.concatenate([embeddings[d].rows for d in graphs], axis=1)
    return MultiGraph(num_nodes=counts.pop(), graphs=dict(graphs), shared_features=shared)


def save_edge_lists(path, mg: MultiGraph) -> None:
    """Text edge list: lines `domain_id,i,j,e_ji` (undirected, i < j)."""
    with open(path, "w") as f:
        f.write("domain_id,i,j,e_ji\n")
        for domain_id, g in mg.graphs.items():
            for i, j in g.edges():
                f.write(f"{domain_id},{i},{j},{g.similarities[j, i]:.17g}\n")


def load_edge_lists(path, num_nodes: int) -> dict[str, DomainGraph]:
    graphs: dict[str, DomainGraph] = {}
    with open(path) as f:
        header = f.readline().strip()
        if header != "domain_id,i,j,e_ji":
            raise ValueError(f"unrecognized edge list header: {header!r}")
        for line in f:
            domain_id, i_s, j_s, e_s = line.strip().split(",")
            g = graphs.get(domain_id)
            if g is None:
                g = DomainGraph(
                    domain_id=domain_id,
                    adjacency=np.zeros((num_nodes, num_nodes)),
                    similarities=np.zeros((num_nodes, num_nodes)),
                )
                graphs[domain_id] = g
            i, j, e = int(i_s), int(j_s), float(e_s)
            g.adjacency[i, j] = g.adjacency[j, i] = 1.0
            g.similarities[i, j] = g.similarities[j, i] = e
    return graphs
