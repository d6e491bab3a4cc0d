"""Policy and value heads over the graph-network trunk.

An action is embedded from its symbolic effects: multi-hot add/delete
vectors over (predicate, scope) slots, the mean embedding of the nodes its
effects touch, and a schema one-hot.  Scores come from an MLP over
[action embedding ; state summary], the policy is a softmax over the
applicable set, and the value head reads the state summary alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graphenc import (DIRECTION_TYPE, EncoderConfig, GOAL_DIMS, SPARSE_EDGE_DIM,
                       SPATIAL_DIMS, TARGET_DIMS, TaskEncoder)
from .ground import GroundTask, ground_all, successors
from .model import GNStack, GraphBatch, MLP, ParamStore
from .pddl import DomainDef, ProblemDef


class EmptyActionSet(Exception):
    """Policy queried in a state with no applicable actions."""


def family_dims(domain: DomainDef, cfg: EncoderConfig):
    """(node_dim, edge_dim, global_dim) fixed by (domain, config) alone."""
    nullary = sum(1 for p in domain.predicates if p.arity == 0)
    unary = [p for p in domain.predicates if p.arity == 1]
    binary = sum(1 for p in domain.predicates if p.arity == 2)
    dirs = [o for o, t in domain.constants if domain.is_subtype(t, DIRECTION_TYPE)]
    lifted = 0
    if cfg.mode == "sparse" and dirs:
        lifted = sum(1 for p in unary
                     if domain.is_subtype(p.params[0][1], DIRECTION_TYPE))
    node_dim = (len(unary) + SPATIAL_DIMS + (GOAL_DIMS if cfg.goal_aware else 0)
                + cfg.max_targets * TARGET_DIMS)
    edge_dim = SPARSE_EDGE_DIM if cfg.mode == "sparse" else max(binary, 1)
    global_dim = max(nullary + lifted * len(dirs), 1)
    return node_dim, edge_dim, global_dim


@dataclass(frozen=True)
class ActionFeature:
    uid: int
    hot: np.ndarray  # [2 * hot_width] add multi-hot then delete multi-hot
    schema: int
    affected: np.ndarray  # node rows touched by ground effects


class PlanningTask:
    """One instance bundled with its ground model, encoder, and action features."""

    def __init__(self, domain: DomainDef, problem: ProblemDef, cfg: EncoderConfig,
                 ground_task: GroundTask | None = None, features=None):
        self.domain = domain
        self.problem = problem
        self.cfg = cfg
        self.ground = ground_task if ground_task is not None else ground_all(domain,
                                                                             problem)
        self.encoder = TaskEncoder(self.ground, cfg)
        self.W = self.encoder.W
        self.schema_index = {s.name: i for i, s in enumerate(domain.actions)}
        self.scanned_ids = frozenset(aid for atom, aid in self.ground.atom_ids.items()
                                     if atom.predicate == "scanned")
        self.features = (features if features is not None
                         else self._build_features())

    def _build_features(self) -> list:
        enc = self.encoder
        width = enc.hot_width
        out = []
        for action in self.ground.actions:
            hot = np.zeros(2 * width, dtype=np.float32)
            rows = set()
            for aid in action.add:
                atom = self.ground.atoms[aid]
                hot[enc.hot_index(atom.predicate)] = 1.0
                rows.update(enc.node_index[o] for o in atom.args
                            if o in enc.node_index)
            for aid in action.delete:
                atom = self.ground.atoms[aid]
                hot[width + enc.hot_index(atom.predicate)] = 1.0
                rows.update(enc.node_index[o] for o in atom.args
                            if o in enc.node_index)
            out.append(ActionFeature(action.uid, hot,
                                     self.schema_index[action.schema],
                                     np.array(sorted(rows), dtype=np.int64)))
        return out

    def rebind(self, problem: ProblemDef) -> "PlanningTask":
        """Same ground structure under a new init/goal; reuses action features."""
        return PlanningTask(self.domain, problem, self.cfg,
                            ground_task=self.ground.rebind(problem),
                            features=self.features)

    def applicable_actions(self, state):
        return [a for a in self.ground.actions if a.pre <= state]

    def successors(self, state):
        return successors(state, self.ground.actions)

    def unit_cells(self, state) -> dict:
        """Current (x, y) per unit, from the state's `at` atoms."""
        enc = self.encoder
        out = {}
        for aid in enc._at_ids & state:
            info = enc._at_info[aid]
            out[info[4]] = (info[2], info[3])
        return out


@dataclass(frozen=True)
class NetConfig:
    latent: int = 128
    hidden: int = 512
    mlp_layers: int = 2  # hidden layers inside each GN update MLP
    head_hidden: int = 512


@dataclass
class PolicyOutput:
    actions: list  # applicable GroundActions, uid order
    scores: np.ndarray
    probs: np.ndarray
    value: float
    entropy: float

    def greedy(self) -> int:
        """argmax index; ties fall to the earliest (lowest uid) action."""
        return int(np.argmax(self.probs))

    def sample(self, rng: np.random.Generator) -> int:
        p = self.probs.astype(np.float64)
        return int(rng.choice(len(p), p=p / p.sum()))


@dataclass
class ForwardOut:
    """Differentiable tensors for one batched forward pass."""

    logp: Tensor  # [total actions] log pi per (graph, action)
    value: Tensor  # [num graphs]
    entropy: Tensor  # [num graphs]
    action_graph: np.ndarray  # [total actions] graph id per action row
    action_offsets: np.ndarray  # [num graphs] first action row per graph


class PolicyValueNet:
    def __init__(self, store: ParamStore, domain: DomainDef, enc_cfg: EncoderConfig,
                 net_cfg: NetConfig):
        self.domain = domain
        self.enc_cfg = enc_cfg
        self.net_cfg = net_cfg
        node_dim, edge_dim, global_dim = family_dims(domain, enc_cfg)
        hidden = [net_cfg.hidden] * net_cfg.mlp_layers
        L = net_cfg.latent
        self.trunk = GNStack(store, node_dim, edge_dim, global_dim, L, hidden)
        self.hot_width = 3 * len(domain.predicates)
        self.num_schemas = len(domain.actions)
        ea_dim = 2 * self.hot_width + L + self.num_schemas
        self.score_mlp = MLP(store, "score", ea_dim + 2 * L, [net_cfg.head_hidden], 1)
        self.value_mlp = MLP(store, "value", 2 * L, [net_cfg.head_hidden], 1)
        self.store = store

    def forward(self, batch: GraphBatch, action_features: list) -> ForwardOut:
        """action_features: per graph, the ActionFeatures of its applicable set."""
        if any(not feats for feats in action_features):
            raise EmptyActionSet("a state in the batch has no applicable action")
        v, _, u = self.trunk(batch)
        G = batch.num_graphs
        node_mean = ad.segment_mean(v, batch.node_graph, G)
        x_s = ad.concat([u, node_mean], axis=1)  # [G, 2L]

        counts = np.array([len(f) for f in action_features], dtype=np.int64)
        action_graph = np.repeat(np.arange(G, dtype=np.int64), counts)
        offsets = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
        total = int(counts.sum())

        hot = np.zeros((total, 2 * self.hot_width + self.num_schemas),
                       dtype=batch.node_feats.dtype)
        aff_rows = []
        aff_segments = []
        row = 0
        for g, feats in enumerate(action_features):
            base = batch.node_offsets[g]
            for f in feats:
                hot[row, :2 * self.hot_width] = f.hot
                hot[row, 2 * self.hot_width + f.schema] = 1.0
                if f.affected.size:
                    aff_rows.append(f.affected + base)
                    aff_segments.append(np.full(f.affected.size, row, dtype=np.int64))
                row += 1
        if aff_rows:
            aff_index = np.concatenate(aff_rows)
            aff_segment = np.concatenate(aff_segments)
            aff_mean = ad.segment_mean(ad.gather_rows(v, aff_index), aff_segment, total)
        else:
            aff_mean = Tensor(np.zeros((total, self.net_cfg.latent),
                                       dtype=batch.node_feats.dtype))
        e_a = ad.concat([Tensor(hot[:, :2 * self.hot_width]), aff_mean,
                         Tensor(hot[:, 2 * self.hot_width:])], axis=1)
        score_in = ad.concat([e_a, ad.gather_rows(x_s, action_graph)], axis=1)
        scores = ad.reshape(self.score_mlp(score_in), (total,))
        logp = ad.segment_log_softmax(scores, action_graph, G)
        probs = ad.exp(logp)
        ent = ad.neg(ad.segment_sum(ad.mul(probs, logp), action_graph, G))
        value = ad.reshape(self.value_mlp(x_s), (G,))
        return ForwardOut(logp, value, ent, action_graph, offsets)

    def evaluate(self, task: PlanningTask, state, actions=None) -> PolicyOutput:
        """Inference-path policy/value for one state (no gradient graph)."""
        if actions is None:
            actions = task.applicable_actions(state)
        if not actions:
            raise EmptyActionSet("no applicable actions in state")
        feats = [task.features[a.uid] for a in actions]
        with ad.no_grad():
            batch = GraphBatch.single(task.encoder.encode(state))
            out = self.forward(batch, [feats])
        scores_np = out.logp.data.astype(np.float64)
        probs = np.exp(scores_np)
        probs = probs / probs.sum()
        return PolicyOutput(actions=list(actions), scores=scores_np,
                            probs=probs, value=float(out.value.data[0]),
                            entropy=float(out.entropy.data[0]))


def build_model(domain: DomainDef, enc_cfg: EncoderConfig, net_cfg: NetConfig,
                seed: int):
    """(store, net, config snapshot); the snapshot pins the architecture."""
    store = ParamStore(seed)
    net = PolicyValueNet(store, domain, enc_cfg, net_cfg)
    node_dim, edge_dim, global_dim = family_dims(domain, enc_cfg)
    config = {
        "domain": domain.name,
        "encoder": {"mode": enc_cfg.mode, "goal_aware": enc_cfg.goal_aware,
                    "max_targets": enc_cfg.max_targets},
        "net": {"latent": net_cfg.latent, "hidden": net_cfg.hidden,
                "mlp_layers": net_cfg.mlp_layers,
                "head_hidden": net_cfg.head_hidden},
        "dims": {"node": node_dim, "edge": edge_dim, "global": global_dim,
                 "hot": 3 * len(domain.predicates),
                 "schemas": len(domain.actions)},
    }
    return store, net, config
