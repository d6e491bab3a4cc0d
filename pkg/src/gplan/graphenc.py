"""State-to-graph encoding: dense baseline and sparse goal-aware variants.

Nodes are problem objects.  Dense mode connects every ordered object pair
and labels edges with a multi-hot over binary predicates.  Sparse mode
keeps only grid-adjacency edges (one-hot by direction) plus the current
`at` relations, drops direction objects from the node set (their state
moves into the global vector), and augments every node with goal-relative
and target-relative features.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .ground import GroundTask

POSITION_TYPE = "position"
UNIT_TYPE = "unit"
DIRECTION_TYPE = "direction"

EDGE_DIR_SLOTS = {"north": 0, "east": 1, "south": 2, "west": 3}
AT_FWD_SLOT = 4
AT_BACK_SLOT = 5
SPARSE_EDGE_DIM = 6

# predicate -> (direction slot, index of src arg, index of dst arg)
# `(north-of p1 p2)` reads "p1 is north of p2": the edge runs p2 -> p1.
# `(adjacent-north from to)` reads "to is north of from": from -> to.
_SPARSE_EDGE_PREDS = {
    "north-of": (EDGE_DIR_SLOTS["north"], 1, 0),
    "south-of": (EDGE_DIR_SLOTS["south"], 1, 0),
    "east-of": (EDGE_DIR_SLOTS["east"], 1, 0),
    "west-of": (EDGE_DIR_SLOTS["west"], 1, 0),
    "adjacent-north": (EDGE_DIR_SLOTS["north"], 0, 1),
    "adjacent-south": (EDGE_DIR_SLOTS["south"], 0, 1),
    "adjacent-east": (EDGE_DIR_SLOTS["east"], 0, 1),
    "adjacent-west": (EDGE_DIR_SLOTS["west"], 0, 1),
}

_POSITION_RE = re.compile(r"^pos-(\d+)-(\d+)$")

SPATIAL_DIMS = 5  # x/W, y/W, is_position, is_unit, blocked
GOAL_DIMS = 4  # relative dx, dy, distance, bearing
TARGET_DIMS = 5  # scanned flag + the four goal-relative components


class DimensionOverflow(Exception):
    """More targets in the problem than max_targets slots in the config."""


@dataclass(frozen=True)
class EncoderConfig:
    mode: str = "sparse"  # "sparse" or "dense"
    goal_aware: bool = True
    max_targets: int = 0

    def __post_init__(self):
        if self.mode not in ("sparse", "dense"):
            raise ValueError(f"unknown encoder mode '{self.mode}'")
        if self.max_targets < 0:
            raise ValueError("max_targets must be >= 0")


@dataclass
class StateGraph:
    nodes: np.ndarray  # [num_nodes, node_dim]
    edge_src: np.ndarray  # [num_edges] int
    edge_dst: np.ndarray  # [num_edges] int
    edges: np.ndarray  # [num_edges, edge_dim]
    globals: np.ndarray  # [global_dim]
    node_index: dict = field(repr=False)

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edge_src.shape[0]


def position_coords(name: str):
    """(x, y) for `pos-x-y` object names, else None."""
    m = _POSITION_RE.match(name)
    return (int(m.group(1)), int(m.group(2))) if m else None


def infer_grid_width(objects) -> int:
    """Grid width from position object names; 1 when no positions exist."""
    best = 0
    found = False
    for name, _ in objects:
        c = position_coords(name)
        if c:
            found = True
            best = max(best, c[0], c[1])
    return best + 1 if found else 1


def goal_features(node_pos, goal_pos, W: int) -> np.ndarray:
    """[dx/W, dy/W, euclidean/(W*sqrt(2)), atan2 bearing]; zeros at coincidence."""
    dx = goal_pos[0] - node_pos[0]
    dy = goal_pos[1] - node_pos[1]
    dist = math.sqrt(dx * dx + dy * dy) / (W * math.sqrt(2.0))
    theta = math.atan2(dy, dx)
    return np.array([dx / W, dy / W, dist, theta], dtype=np.float32)


def target_features(node_pos, target_pos, scanned: bool, W: int) -> np.ndarray:
    geo = goal_features(node_pos, target_pos, W)
    return np.concatenate([[1.0 if scanned else 0.0], geo]).astype(np.float32)


def graph_stats(g: StateGraph):
    """(num_nodes, num_edges, feature_bytes) with 4-byte float accounting."""
    feature_bytes = 4 * (g.nodes.size + g.edges.size + g.globals.size)
    return g.num_nodes, g.num_edges, feature_bytes


class TaskEncoder:
    """Encoder for one ground task; layout is fixed by (domain, config).

    Feature dims depend only on the domain's predicates and the config, so
    checkpoints transfer across grid sizes of the same domain family.
    """

    def __init__(self, task: GroundTask, cfg: EncoderConfig):
        self.task = task
        self.cfg = cfg
        domain = task.domain
        problem = task.problem
        self.W = infer_grid_width(problem.objects)

        self.nullary_preds = sorted(p.name for p in domain.predicates if p.arity == 0)
        self.unary_preds = sorted(p.name for p in domain.predicates if p.arity == 1)
        self.binary_preds = sorted(p.name for p in domain.predicates if p.arity == 2)
        self.predicates = sorted(p.name for p in domain.predicates)
        self._pred_index = {p: i for i, p in enumerate(self.predicates)}
        self._pred_arity = {p.name: p.arity for p in domain.predicates}

        obj_types = dict(problem.objects)
        self._direction_objects = [o for o, t in problem.objects
                                   if domain.is_subtype(t, DIRECTION_TYPE)]
        if cfg.mode == "sparse":
            nodes = [(o, t) for o, t in problem.objects
                     if not domain.is_subtype(t, DIRECTION_TYPE)]
        else:
            nodes = list(problem.objects)
        self.node_names = [o for o, _ in nodes]
        self.node_index = {o: i for i, o in enumerate(self.node_names)}
        n = len(nodes)

        # direction-typed unary predicates move to globals in sparse mode
        self._lifted_preds = []
        if cfg.mode == "sparse" and self._direction_objects:
            for p in domain.predicates:
                if p.arity == 1 and domain.is_subtype(p.params[0][1], DIRECTION_TYPE):
                    self._lifted_preds.append(p.name)
            self._lifted_preds.sort()
        base_globals = len(self.nullary_preds) + len(self._lifted_preds) * len(
            self._direction_objects)
        self.global_dim = max(base_globals, 1)

        U = len(self.unary_preds)
        self._unary_col = {p: i for i, p in enumerate(self.unary_preds)}
        self._spatial_col = U
        self._goal_col = U + SPATIAL_DIMS
        self._target_col = self._goal_col + (GOAL_DIMS if cfg.goal_aware else 0)
        self.node_dim = self._target_col + cfg.max_targets * TARGET_DIMS
        self.edge_dim = (SPARSE_EDGE_DIM if cfg.mode == "sparse"
                         else max(len(self.binary_preds), 1))

        # static per-node geometry
        self._static_x = np.zeros(n, dtype=np.float32)
        self._static_y = np.zeros(n, dtype=np.float32)
        self._has_coord = np.zeros(n, dtype=bool)
        base = np.zeros((n, self.node_dim), dtype=np.float32)
        safe_cells = {a.args[0] for a in problem.init if a.predicate == "safe-at"}
        has_safety = any(p.name == "safe-at" for p in domain.predicates)
        for i, (name, ty) in enumerate(nodes):
            coords = position_coords(name)
            if coords:
                self._static_x[i], self._static_y[i] = coords
                self._has_coord[i] = True
            if domain.is_subtype(ty, POSITION_TYPE):
                base[i, self._spatial_col + 2] = 1.0
                if has_safety and name not in safe_cells:
                    base[i, self._spatial_col + 4] = 1.0
            if domain.is_subtype(ty, UNIT_TYPE):
                base[i, self._spatial_col + 3] = 1.0
        self._base = base

        # static unary flags (never change, so bake them into the base matrix)
        static_unary = [a for a in problem.init
                        if a.predicate in task.static_preds
                        and a.predicate in self._unary_col
                        and a.args[0] in self.node_index]
        for a in static_unary:
            base[self.node_index[a.args[0]], self._unary_col[a.predicate]] = 1.0

        self._goal_pos = self._find_goal_position(problem)
        self._targets = self._find_targets(problem)
        if len(self._targets) > cfg.max_targets:
            raise DimensionOverflow(
                f"{len(self._targets)} targets but max_targets={cfg.max_targets}")

        self._index_dynamic_atoms(task, obj_types, domain)
        self._build_static_edges(task, problem)
        self._build_global_map(task)

    # -- construction helpers ------------------------------------------------

    def _find_goal_position(self, problem):
        for atom in sorted(problem.goal, key=lambda a: (a.predicate, a.args)):
            if atom.predicate == "at" and len(atom.args) == 2:
                coords = position_coords(atom.args[1])
                if coords:
                    return coords
        return None

    def _find_targets(self, problem) -> list:
        """Unit names under `scanned` goal atoms, in sorted (slot) order."""
        return sorted(a.args[0] for a in problem.goal if a.predicate == "scanned")

    def _index_dynamic_atoms(self, task, obj_types, domain):
        self._dyn_unary = {}  # atom id -> (row, col)
        self._at_info = {}  # atom id -> (unit row|-1, pos row|-1, x, y, unit name)
        self._at_ids = set()
        self._binary_info = {}  # atom id -> (src row, dst row, pred col) for dense
        self._scanned_ids = {}  # target name -> atom id
        binary_col = {p: i for i, p in enumerate(self.binary_preds)}
        for atom, aid in task.atom_ids.items():
            arity = len(atom.args)
            if arity == 1:
                if (atom.predicate not in task.static_preds
                        and atom.predicate in self._unary_col
                        and atom.args[0] in self.node_index):
                    self._dyn_unary[aid] = (self.node_index[atom.args[0]],
                                            self._unary_col[atom.predicate])
                if atom.predicate == "scanned":
                    self._scanned_ids[atom.args[0]] = aid
            if atom.predicate == "at" and arity == 2:
                coords = position_coords(atom.args[1])
                if coords:
                    self._at_ids.add(aid)
                    self._at_info[aid] = (self.node_index.get(atom.args[0], -1),
                                          self.node_index.get(atom.args[1], -1),
                                          coords[0], coords[1], atom.args[0])
            if arity == 2 and self.cfg.mode == "dense":
                src = self.node_index.get(atom.args[0], -1)
                dst = self.node_index.get(atom.args[1], -1)
                if src >= 0 and dst >= 0 and src != dst:
                    self._binary_info[aid] = (src, dst, binary_col[atom.predicate])

    def _build_static_edges(self, task, problem):
        src, dst, feats = [], [], []
        if self.cfg.mode == "sparse":
            for atom in sorted(problem.init, key=lambda a: (a.predicate, a.args)):
                spec = _SPARSE_EDGE_PREDS.get(atom.predicate)
                if spec is None:
                    continue
                slot, si, di = spec
                s = self.node_index.get(atom.args[si], -1)
                d = self.node_index.get(atom.args[di], -1)
                if s < 0 or d < 0:
                    continue
                src.append(s)
                dst.append(d)
                onehot = np.zeros(SPARSE_EDGE_DIM, dtype=np.float32)
                onehot[slot] = 1.0
                feats.append(onehot)
        self._static_src = np.array(src, dtype=np.int64)
        self._static_dst = np.array(dst, dtype=np.int64)
        self._static_feats = (np.stack(feats) if feats
                              else np.zeros((0, self.edge_dim), dtype=np.float32))

    def _build_global_map(self, task):
        self._global_map = {}  # atom id -> global col
        col = 0
        for pred in self.nullary_preds:
            for atom, aid in task.atom_ids.items():
                if atom.predicate == pred and not atom.args:
                    self._global_map[aid] = col
            col += 1
        for pred in self._lifted_preds:
            for obj in self._direction_objects:
                for atom, aid in task.atom_ids.items():
                    if atom.predicate == pred and atom.args == (obj,):
                        self._global_map[aid] = col
                col += 1

    # -- public surface ------------------------------------------------------

    @property
    def dims(self):
        return self.node_dim, self.edge_dim, self.global_dim

    def predicate_scope(self, pred: str) -> str:
        arity = self._pred_arity[pred]
        return ("global", "node", "edge")[min(arity, 2)]

    @property
    def hot_width(self) -> int:
        return 3 * len(self.predicates)

    def hot_index(self, pred: str) -> int:
        scopes = {"global": 0, "node": 1, "edge": 2}
        return self._pred_index[pred] * 3 + scopes[self.predicate_scope(pred)]

    def encode(self, state) -> StateGraph:
        feats = self._base.copy()
        xs = self._static_x
        ys = self._static_y
        has = self._has_coord
        unit_cells = {}  # unit name -> (x, y)
        at_edges = []
        moved = False

        for aid in state:
            hit = self._dyn_unary.get(aid)
            if hit is not None:
                feats[hit[0], hit[1]] = 1.0
        for aid in sorted(self._at_ids & state):
            unit_row, pos_row, x, y, unit = self._at_info[aid]
            unit_cells[unit] = (x, y)
            if unit_row >= 0:
                if not moved:
                    xs, ys, has = xs.copy(), ys.copy(), has.copy()
                    moved = True
                xs[unit_row], ys[unit_row] = x, y
                has[unit_row] = True
                if pos_row >= 0:
                    at_edges.append((unit_row, pos_row))

        W = float(self.W)
        sc = self._spatial_col
        feats[:, sc] = np.where(has, xs / W, 0.0)
        feats[:, sc + 1] = np.where(has, ys / W, 0.0)

        if self.cfg.goal_aware and self._goal_pos is not None:
            self._fill_relative(feats, self._goal_col, xs, ys, has, self._goal_pos)
        for slot, unit in enumerate(self._targets):
            col = self._target_col + slot * TARGET_DIMS
            if self._scanned_ids.get(unit) in state:
                feats[:, col] = 1.0
            cell = unit_cells.get(unit)
            if cell is not None:
                self._fill_relative(feats, col + 1, xs, ys, has, cell)

        globals_vec = np.zeros(self.global_dim, dtype=np.float32)
        for aid, col in self._global_map.items():
            if aid in state:
                globals_vec[col] = 1.0

        if self.cfg.mode == "sparse":
            src, dst, efeats = self._sparse_edges(at_edges)
        else:
            src, dst, efeats = self._dense_edges(state)
        return StateGraph(feats, src, dst, efeats, globals_vec, self.node_index)

    def _fill_relative(self, feats, col, xs, ys, has, ref):
        W = float(self.W)
        dx = ref[0] - xs
        dy = ref[1] - ys
        feats[:, col] = np.where(has, dx / W, 0.0)
        feats[:, col + 1] = np.where(has, dy / W, 0.0)
        feats[:, col + 2] = np.where(has, np.sqrt(dx * dx + dy * dy) / (W * math.sqrt(2.0)),
                                     0.0)
        feats[:, col + 3] = np.where(has, np.arctan2(dy, dx), 0.0)

    def _sparse_edges(self, at_edges):
        if not at_edges:
            return self._static_src, self._static_dst, self._static_feats
        extra_src, extra_dst, extra_feats = [], [], []
        for unit_row, pos_row in at_edges:
            fwd = np.zeros(SPARSE_EDGE_DIM, dtype=np.float32)
            fwd[AT_FWD_SLOT] = 1.0
            back = np.zeros(SPARSE_EDGE_DIM, dtype=np.float32)
            back[AT_BACK_SLOT] = 1.0
            extra_src += [unit_row, pos_row]
            extra_dst += [pos_row, unit_row]
            extra_feats += [fwd, back]
        src = np.concatenate([self._static_src, np.array(extra_src, dtype=np.int64)])
        dst = np.concatenate([self._static_dst, np.array(extra_dst, dtype=np.int64)])
        feats = np.concatenate([self._static_feats, np.stack(extra_feats)])
        return src, dst, feats

    def _dense_edges(self, state):
        n = len(self.node_names)
        num = n * (n - 1)
        src = np.repeat(np.arange(n, dtype=np.int64), n - 1)
        dst = np.concatenate([np.concatenate([np.arange(i, dtype=np.int64),
                                              np.arange(i + 1, n, dtype=np.int64)])
                              for i in range(n)]) if n else np.zeros(0, dtype=np.int64)
        feats = np.zeros((num, self.edge_dim), dtype=np.float32)
        for aid in state:
            info = self._binary_info.get(aid)
            if info is None:
                continue
            s, d, col = info
            row = s * (n - 1) + (d if d < s else d - 1)
            feats[row, col] = 1.0
        return src, dst, feats
