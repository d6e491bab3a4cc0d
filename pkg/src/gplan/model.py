"""Trainable building blocks: parameter store, MLPs, graph-network blocks,
Adam, and a self-describing binary checkpoint format.

A GN block runs the standard edge -> node -> global update sweep; two are
stacked to form the trunk shared by the policy and value heads.  Batches of
graphs are packed block-diagonally so one forward pass covers any number of
states.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graphenc import StateGraph

CHECKPOINT_MAGIC = b"GPLN"
CHECKPOINT_VERSION = 1


class ShapeMismatch(Exception):
    pass


class CheckpointError(Exception):
    pass


class ParamStore:
    """Named parameter tensors with seeded deterministic initialization."""

    def __init__(self, seed: int):
        self.init_seed = seed
        self._rng = np.random.default_rng(seed)
        self.params: dict[str, Tensor] = {}

    def dense(self, name: str, fan_in: int, fan_out: int):
        """He-uniform weight [fan_in, fan_out] and zero bias, created once."""
        wname, bname = name + ".w", name + ".b"
        if wname not in self.params:
            limit = np.sqrt(6.0 / fan_in)
            w = self._rng.uniform(-limit, limit, size=(fan_in, fan_out))
            self.params[wname] = Tensor(w.astype(np.float32), requires_grad=True)
            self.params[bname] = Tensor(np.zeros((1, fan_out), dtype=np.float32),
                                        requires_grad=True)
        return self.params[wname], self.params[bname]

    def parameters(self) -> list:
        return [self.params[k] for k in sorted(self.params)]

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state_dict(self) -> dict:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, tensors: dict) -> None:
        missing = set(self.params) - set(tensors)
        extra = set(tensors) - set(self.params)
        if missing or extra:
            raise CheckpointError(f"parameter names differ: missing={sorted(missing)}, "
                                  f"unexpected={sorted(extra)}")
        for k, v in tensors.items():
            if self.params[k].data.shape != v.shape:
                raise ShapeMismatch(f"{k}: checkpoint {v.shape} vs model "
                                    f"{self.params[k].data.shape}")
            self.params[k].data = v.astype(self.params[k].data.dtype).copy()

    def cast(self, dtype) -> None:
        """Convert all parameters in place (float64 for derivative checks)."""
        for p in self.params.values():
            p.data = p.data.astype(dtype)
            p.grad = None


class MLP:
    """Affine stack with ReLU on hidden layers and a linear output layer."""

    def __init__(self, store: ParamStore, name: str, in_dim: int,
                 hidden: list, out_dim: int):
        self.layers = []
        prev = in_dim
        for i, width in enumerate(list(hidden) + [out_dim]):
            self.layers.append(store.dense(f"{name}.l{i}", prev, width))
            prev = width

    def __call__(self, x: Tensor) -> Tensor:
        if x.data.ndim != 2 or x.data.shape[1] != self.layers[0][0].data.shape[0]:
            raise ShapeMismatch(f"MLP input {x.data.shape}, expected "
                                f"[*, {self.layers[0][0].data.shape[0]}]")
        out = x
        last = len(self.layers) - 1
        for i, (w, b) in enumerate(self.layers):
            out = ad.add(ad.matmul(out, w), b)
            if i != last:
                out = ad.relu(out)
        return out


@dataclass
class GraphBatch:
    """Block-diagonal packing of several state graphs."""

    node_feats: np.ndarray
    edge_feats: np.ndarray
    global_feats: np.ndarray
    edge_src: np.ndarray
    edge_dst: np.ndarray
    node_graph: np.ndarray
    edge_graph: np.ndarray
    node_offsets: np.ndarray  # [num_graphs] first node row of each graph
    num_graphs: int

    @classmethod
    def from_graphs(cls, graphs: list) -> "GraphBatch":
        if not graphs:
            raise ValueError("empty graph batch")
        offsets = np.zeros(len(graphs), dtype=np.int64)
        total = 0
        for i, g in enumerate(graphs):
            offsets[i] = total
            total += g.num_nodes
        node_feats = np.concatenate([g.nodes for g in graphs])
        edge_feats = np.concatenate([g.edges for g in graphs])
        global_feats = np.stack([g.globals for g in graphs])
        edge_src = np.concatenate([g.edge_src + offsets[i]
                                   for i, g in enumerate(graphs)])
        edge_dst = np.concatenate([g.edge_dst + offsets[i]
                                   for i, g in enumerate(graphs)])
        node_graph = np.concatenate([np.full(g.num_nodes, i, dtype=np.int64)
                                     for i, g in enumerate(graphs)])
        edge_graph = np.concatenate([np.full(g.num_edges, i, dtype=np.int64)
                                     for i, g in enumerate(graphs)])
        return cls(node_feats, edge_feats, global_feats, edge_src, edge_dst,
                   node_graph, edge_graph, offsets, len(graphs))

    @classmethod
    def single(cls, g: StateGraph) -> "GraphBatch":
        return cls.from_graphs([g])


class GNBlock:
    """One edge/node/global update sweep.

    Edges aggregate into nodes by sum (degree carries signal on sparse
    grids); nodes and edges aggregate into the global by mean (keeps
    magnitudes stable across grid sizes).
    """

    def __init__(self, store: ParamStore, name: str, node_in: int, edge_in: int,
                 global_in: int, latent: int, hidden: list):
        self.edge_mlp = MLP(store, f"{name}.edge",
                            edge_in + 2 * node_in + global_in, hidden, latent)
        self.node_mlp = MLP(store, f"{name}.node",
                            node_in + latent + global_in, hidden, latent)
        self.global_mlp = MLP(store, f"{name}.global",
                              global_in + 2 * latent, hidden, latent)
        self.latent = latent

    def __call__(self, batch: GraphBatch, nodes: Tensor, edges: Tensor,
                 globals_t: Tensor):
        num_nodes = nodes.data.shape[0]
        e_in = ad.concat([edges,
                          ad.gather_rows(nodes, batch.edge_src),
                          ad.gather_rows(nodes, batch.edge_dst),
                          ad.gather_rows(globals_t, batch.edge_graph)], axis=1)
        e_out = self.edge_mlp(e_in)
        incoming = ad.segment_sum(e_out, batch.edge_dst, num_nodes)
        v_in = ad.concat([nodes, incoming,
                          ad.gather_rows(globals_t, batch.node_graph)], axis=1)
        v_out = self.node_mlp(v_in)
        u_in = ad.concat([globals_t,
                          ad.segment_mean(v_out, batch.node_graph, batch.num_graphs),
                          ad.segment_mean(e_out, batch.edge_graph, batch.num_graphs)],
                         axis=1)
        u_out = self.global_mlp(u_in)
        return v_out, e_out, u_out


class GNStack:
    """Two stacked GN blocks mapping raw graph features to latent embeddings."""

    def __init__(self, store: ParamStore, node_dim: int, edge_dim: int,
                 global_dim: int, latent: int, hidden: list):
        self.block1 = GNBlock(store, "gn1", node_dim, edge_dim, global_dim,
                              latent, hidden)
        self.block2 = GNBlock(store, "gn2", latent, latent, latent, latent, hidden)
        self.latent = latent

    def __call__(self, batch: GraphBatch):
        nodes = Tensor(batch.node_feats)
        edges = Tensor(batch.edge_feats)
        globals_t = Tensor(batch.global_feats)
        v, e, u = self.block1(batch, nodes, edges, globals_t)
        v, e, u = self.block2(batch, v, e, u)
        return v, e, u


class Adam:
    def __init__(self, params: list, lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in params]
        self._v = [np.zeros_like(p.data) for p in params]

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                continue
            g = p.grad
            m += (1.0 - b1) * (g - m)
            v += (1.0 - b2) * (g * g - v)
            p.data = p.data - self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


# ---------------------------------------------------------------------------
# Checkpoints: magic, version, seed, config hash + JSON, named float32 tensors


def config_hash(config: dict) -> bytes:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).digest()


def save_checkpoint(path: str, store: ParamStore, config: dict, seed: int) -> None:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    tensors = store.state_dict()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IQ", CHECKPOINT_VERSION, seed & 0xFFFFFFFFFFFFFFFF))
        fh.write(config_hash(config))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            data = tensors[name].astype("<f4")
            encoded = name.encode()
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.tobytes())


def load_checkpoint(path: str, expected_config: dict | None = None):
    """Returns (config, seed, tensors).  A config-hash mismatch is an error."""
    with open(path, "rb") as fh:
        raw = fh.read()
    off = 0

    def take(n):
        nonlocal off
        if off + n > len(raw):
            raise CheckpointError("truncated checkpoint")
        chunk = raw[off:off + n]
        off += n
        return chunk

    if take(4) != CHECKPOINT_MAGIC:
        raise CheckpointError("bad magic; not a checkpoint file")
    version, seed = struct.unpack("<IQ", take(12))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    stored_hash = take(32)
    (blob_len,) = struct.unpack("<I", take(4))
    config = json.loads(take(blob_len).decode())
    if config_hash(config) != stored_hash:
        raise CheckpointError("config hash does not match stored config")
    if expected_config is not None and config_hash(expected_config) != stored_hash:
        raise CheckpointError("checkpoint was trained under a different config")
    (count,) = struct.unpack("<I", take(4))
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode()
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(take(4 * size), dtype="<f4").reshape(shape)
        tensors[name] = data.copy()
    return config, seed, tensors
