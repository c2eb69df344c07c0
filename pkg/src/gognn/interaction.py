"""Interaction-level GNN over the graph whose nodes are molecules.

Untyped interaction graphs (CCI) use multi-head graph attention; graphs whose
edges carry a side-effect type (DDI) use the edge-aggregation layer, where a
neighbour's vector is scaled by a scalar computed from the side-effect
embedding. All aggregation parameters are shared across relation types.
"""

import numpy as np

from . import tensor as T
from .errors import DataError, ShapeError
from .mol_encoder import normalized_adjacency
from .nn import Module, glorot
from .tensor import Tensor


class InteractionGraph:
    """Molecule nodes plus undirected interaction edges, optionally typed.

    Edges are stored once and expanded to both directed arcs when read.
    Assign a list to ``read_log`` to record every edge read by message
    passing (used to prove held-out edges are never touched). Entries are
    positions in ``edges``, or the matching entry of ``edge_ids`` when given.
    """

    def __init__(self, n_nodes, edges, relations=None, relation_count=0, node_ids=None,
                 edge_ids=None):
        self.n_nodes = int(n_nodes)
        self.edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        self.relations = None if relations is None else np.asarray(relations, dtype=np.int64)
        self.relation_count = int(relation_count)
        self.node_ids = list(node_ids) if node_ids is not None else None
        self.edge_ids = None if edge_ids is None else np.asarray(edge_ids, dtype=np.int64)
        self.read_log = None
        if self.relations is not None and len(self.relations) != len(self.edges):
            raise ShapeError("one relation id per edge required")
        if len(self.edges):
            if self.edges.min() < 0 or self.edges.max() >= self.n_nodes:
                raise DataError("edge endpoint out of range")
            loops = np.flatnonzero(self.edges[:, 0] == self.edges[:, 1])
            if len(loops):
                raise DataError(f"self-edge at edge index {int(loops[0])}")
        self._arcs = None

    def __len__(self):
        return len(self.edges)

    def arcs(self):
        """Directed arcs ``(src, dst, relation, edge_index)`` sorted by (dst, src)."""
        if self._arcs is None:
            e = np.arange(len(self.edges), dtype=np.int64)
            src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
            dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
            rel = (np.zeros(2 * len(e), dtype=np.int64) if self.relations is None
                   else np.concatenate([self.relations, self.relations]))
            eidx = np.concatenate([e, e])
            order = np.lexsort((src, dst))
            self._arcs = (src[order], dst[order], rel[order], eidx[order])
        if self.read_log is not None:
            read = np.unique(self._arcs[3])
            self.read_log.extend((read if self.edge_ids is None else self.edge_ids[read]).tolist())
        return self._arcs

    def degree(self):
        return np.bincount(self.edges.reshape(-1), minlength=self.n_nodes)

    def attention_arcs(self):
        """Arcs with a synthetic self-arc for every isolated node, plus the
        per-destination pointer (every node owns a non-empty group)."""
        src, dst, _, _ = self.arcs()
        isolated = np.setdiff1d(np.arange(self.n_nodes), dst)
        src = np.concatenate([src, isolated])
        dst = np.concatenate([dst, isolated])
        order = np.lexsort((src, dst))
        src, dst = src[order], dst[order]
        ptr = np.concatenate([[0], np.cumsum(np.bincount(dst, minlength=self.n_nodes))])
        return src, dst, ptr.astype(np.int64)


class SideEffectTable(Module):
    """Learnable side-effect vectors (R x h), optionally overridden from a file."""

    def __init__(self, n_relations, dim=128, rng=None, dtype=np.float64):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.embeddings = Tensor(rng.normal(0.0, 1.0, size=(n_relations, dim)).astype(dtype),
                                 requires_grad=True)

    @property
    def n_relations(self):
        return self.embeddings.shape[0]

    @property
    def dim(self):
        return self.embeddings.shape[1]

    def load_vectors(self, path):
        """Overwrite rows from ``relation_id<TAB>space-separated reals`` lines."""
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip() or line.startswith("#"):
                    continue
                try:
                    rid, vec = line.rstrip("\n").split("\t")
                    rid = int(rid)
                    values = np.array(vec.split(), dtype=np.float64)
                except ValueError as err:
                    raise DataError(f"{path}:{lineno}: malformed side-effect vector row") from err
                if not 0 <= rid < self.n_relations:
                    raise DataError(f"{path}:{lineno}: unknown relation id {rid}")
                if len(values) != self.dim:
                    raise DataError(f"{path}:{lineno}: expected {self.dim} values, got {len(values)}")
                self.embeddings.data[rid] = values


# ---------------------------------------------------------------- attention

class GatLayer(Module):
    def __init__(self, d_in, d_head, heads, rng, activation="elu", dtype=np.float64):
        if heads < 1:
            raise ValueError("need at least one attention head")
        self.weights = [glorot(rng, d_in, d_head, dtype=dtype) for _ in range(heads)]
        self.att = [glorot(rng, 2 * d_head, 1, dtype=dtype) for _ in range(heads)]
        self.activation = activation

    @property
    def heads(self):
        return len(self.weights)

    @property
    def out_dim(self):
        return self.heads * self.weights[0].shape[1]

    def head_logits(self, k, z, src, dst):
        pair = T.concat([T.gather_rows(z, dst), T.gather_rows(z, src)], axis=1)
        return T.reshape(T.leaky_relu(T.matmul(pair, self.att[k]), 0.2), (len(src),))

    def __call__(self, graph, x):
        x = T.as_tensor(x)
        src, dst, ptr = graph.attention_arcs()
        outs = []
        for k, w in enumerate(self.weights):
            z = T.matmul(x, w)
            alpha = T.segment_softmax(self.head_logits(k, z, src, dst), ptr)
            agg = T.segment_sum(T.mul_rows(T.gather_rows(z, src), alpha), dst, graph.n_nodes)
            outs.append(_act(self.activation, agg))
        return outs[0] if len(outs) == 1 else T.concat(outs, axis=1)


def attention_coefficients(layer, head, x_i, neighbors):
    """Normalised attention of node ``x_i`` over its neighbour vectors."""
    neighbors = [T.as_tensor(v) for v in neighbors]
    if not neighbors:
        raise ValueError("neighbourhood is empty")
    rows = [T.reshape(T.as_tensor(x_i), (1, -1))] + [T.reshape(v, (1, -1)) for v in neighbors]
    z = T.matmul(T.concat(rows, axis=0), layer.weights[head])
    n = len(neighbors)
    src = np.arange(1, n + 1)
    dst = np.zeros(n, dtype=np.int64)
    return T.segment_softmax(layer.head_logits(head, z, src, dst), [0, n])


def gat_forward(layer, graph, x):
    return layer(graph, x)


# ---------------------------------------------------------------- edge aggregation

class EdgeAggLayer(Module):
    """x_i' = relu(W x_i + sum_r sum_{j in N_r(i)} x_j * tau(e_r))."""

    def __init__(self, d, edge_dim=128, mlp_hidden=32, rng=None, activation="relu",
                 dtype=np.float64):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = glorot(rng, d, d, dtype=dtype)
        self.mlp_w1 = glorot(rng, edge_dim, mlp_hidden, dtype=dtype)
        self.mlp_b1 = Tensor(np.zeros(mlp_hidden, dtype=dtype), requires_grad=True)
        self.mlp_w2 = glorot(rng, mlp_hidden, 1, dtype=dtype)
        self.mlp_b2 = Tensor(np.zeros(1, dtype=dtype), requires_grad=True)
        self.activation = activation

    @property
    def out_dim(self):
        return self.weight.shape[1]

    def edge_scalars(self, se):
        """tau for each row of ``se`` [R, h] -> [R, 1]."""
        h = T.relu(T.add_rowvec(T.matmul(se, self.mlp_w1), self.mlp_b1))
        return T.add_rowvec(T.matmul(h, self.mlp_w2), self.mlp_b2)

    def __call__(self, graph, x, se_table):
        x = T.as_tensor(x)
        src, dst, rel, eidx = graph.arcs()
        if len(rel) and (rel.min() < 0 or rel.max() >= se_table.n_relations):
            bad = int(np.flatnonzero((rel < 0) | (rel >= se_table.n_relations))[0])
            u, v = graph.edges[eidx[bad]]
            raise DataError(f"edge ({u}, {rel[bad]}, {v}) has an unknown relation id "
                            f"(table holds {se_table.n_relations})")
        tau = self.edge_scalars(se_table.embeddings)
        msg = T.mul_rows(T.gather_rows(x, src), T.gather_rows(tau, rel))
        agg = T.segment_sum(msg, dst, graph.n_nodes)
        return _act(self.activation, T.add(T.matmul(x, self.weight), agg))


def edge_scalar(layer, se):
    """tau for a single side-effect vector ``se`` [h]."""
    se = T.as_tensor(se)
    return T.reshape(layer.edge_scalars(T.reshape(se, (1, se.shape[0]))), ())


def edge_agg_forward(layer, graph, x, se_table):
    return layer(graph, x, se_table)


# ---------------------------------------------------------------- ablation layers

class GcnInteractionLayer(Module):
    """Plain normalised graph convolution over the interaction graph."""

    def __init__(self, d_in, d_out, rng, activation="relu", dtype=np.float64):
        self.weight = glorot(rng, d_in, d_out, dtype=dtype)
        self.activation = activation

    @property
    def out_dim(self):
        return self.weight.shape[1]

    def __call__(self, graph, x, se_table=None):
        src, dst, _, _ = graph.arcs()
        prop = normalized_adjacency(src, dst, np.ones(len(src)), graph.n_nodes)
        return _act(self.activation, T.spmm(prop, T.matmul(x, self.weight)))


class MlpLayer(Module):
    """Per-node dense layer; no neighbour information."""

    def __init__(self, d_in, d_out, rng, activation="elu", dtype=np.float64):
        self.weight = glorot(rng, d_in, d_out, dtype=dtype)
        self.activation = activation

    @property
    def out_dim(self):
        return self.weight.shape[1]

    def __call__(self, graph, x, se_table=None):
        return _act(self.activation, T.matmul(x, self.weight))


def _act(name, x):
    return {"elu": T.elu, "relu": T.relu, "linear": lambda v: v, "tanh": T.tanh}[name](x)


class InteractionStack(Module):
    """Stack of interaction layers of one kind: gat, edge, gcn or mlp."""

    def __init__(self, kind, d_in, d_out, n_layers=2, heads=4, edge_dim=128, mlp_hidden=32,
                 rng=None, dtype=np.float64):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.kind = kind
        layers = []
        d = d_in
        for _ in range(n_layers):
            if kind == "gat":
                if d_out % heads:
                    raise ValueError(f"output width {d_out} not divisible by {heads} heads")
                layer = GatLayer(d, d_out // heads, heads, rng, dtype=dtype)
            elif kind == "edge":
                layer = EdgeAggLayer(d, edge_dim, mlp_hidden, rng=rng, dtype=dtype)
            elif kind == "gcn":
                layer = GcnInteractionLayer(d, d_out, rng, dtype=dtype)
            elif kind == "mlp":
                layer = MlpLayer(d, d_out, rng, dtype=dtype)
            else:
                raise ValueError(f"unknown interaction layer kind {kind!r}")
            layers.append(layer)
            d = layer.out_dim
        self.layers = layers
        self.out_dim = d

    def __call__(self, graph, x, se_table=None):
        for layer in self.layers:
            x = layer(graph, x) if isinstance(layer, GatLayer) else layer(graph, x, se_table)
        return x


def encode_interaction(graph, molecule_reprs, stack, se_table=None):
    """Final per-node representations after the interaction layers."""
    return stack(graph, molecule_reprs, se_table)
