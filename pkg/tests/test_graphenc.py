"""State-graph encoder tests: edge counts, goal geometry, isomorphism."""

import math

import numpy as np
import pytest

from gplan.graphenc import (DimensionOverflow, EncoderConfig, StateGraph,
                            TaskEncoder, goal_features, graph_stats,
                            infer_grid_width, target_features)
from gplan.ground import apply_action, ground_all
from gplan.pddl import ProblemDef
from gplan.worlds import InstanceSpec, gen_scan, gen_simple, load_domain


def build(W, seed=0, mode="sparse", domain="simple", targets=0, density=0.0,
          goal_aware=True, max_targets=None):
    dom = load_domain(domain)
    spec = InstanceSpec(W=W, obstacle_density=density, num_targets=targets,
                        seed=seed)
    problem = (gen_scan(spec) if domain == "scan" else gen_simple(spec))[0]
    task = ground_all(dom, problem)
    cfg = EncoderConfig(mode=mode, goal_aware=goal_aware,
                        max_targets=targets if max_targets is None else max_targets)
    return task, TaskEncoder(task, cfg)


def test_sparse_edge_count_w5():
    task, enc = build(5)
    assert enc.encode(task.init).num_edges == 82


def test_dense_edge_count_w5():
    task, enc = build(5, mode="dense")
    g = enc.encode(task.init)
    assert g.num_nodes == 26
    assert g.num_edges == 26 * 25


@pytest.mark.parametrize("W", [3, 4, 6, 8, 10, 20, 30])
def test_sparse_edge_formula(W):
    task, enc = build(W)
    at_atoms = sum(1 for a in task.problem.init if a.predicate == "at")
    assert enc.encode(task.init).num_edges == 4 * W * (W - 1) + 2 * at_atoms


@pytest.mark.parametrize("domain,targets", [("simple", 0), ("scan", 2)])
def test_dense_edge_formula(domain, targets):
    task, enc = build(6, domain=domain, targets=targets, mode="dense")
    M = len(task.problem.objects)
    assert enc.encode(task.init).num_edges == M * (M - 1)


def test_directional_edge_orientation():
    task, enc = build(3)
    g = enc.encode(task.init)
    i11 = g.node_index["pos-1-1"]
    i12 = g.node_index["pos-1-2"]
    # "pos-1-2 is north of pos-1-1" must become pos-1-1 -> pos-1-2, slot north
    rows = [k for k in range(g.num_edges)
            if g.edge_src[k] == i11 and g.edge_dst[k] == i12]
    assert len(rows) == 1
    assert list(g.edges[rows[0]]) == [1, 0, 0, 0, 0, 0]


def test_at_edges_both_directions():
    task, enc = build(4, seed=2)
    g = enc.encode(task.init)
    (at_atom,) = [a for a in task.problem.init if a.predicate == "at"]
    u = g.node_index[at_atom.args[0]]
    c = g.node_index[at_atom.args[1]]
    fwd = [k for k in range(g.num_edges)
           if g.edge_src[k] == u and g.edge_dst[k] == c]
    back = [k for k in range(g.num_edges)
            if g.edge_src[k] == c and g.edge_dst[k] == u]
    assert len(fwd) == 1 and len(back) == 1
    assert g.edges[fwd[0]][4] == 1.0 and g.edges[back[0]][5] == 1.0


def test_static_edges_survive_moves():
    task, enc = build(4, seed=1)
    g0 = enc.encode(task.init)
    action = next(a for a in task.actions if a.pre <= task.init)
    g1 = enc.encode(apply_action(task.init, action))

    def directional(g):
        keep = g.edges[:, :4].sum(axis=1) > 0
        return {(int(s), int(d), tuple(f)) for s, d, f in
                zip(g.edge_src[keep], g.edge_dst[keep], g.edges[keep])}

    def at_edges(g):
        keep = g.edges[:, 4:].sum(axis=1) > 0
        return {(int(s), int(d)) for s, d in
                zip(g.edge_src[keep], g.edge_dst[keep])}

    assert directional(g0) == directional(g1)
    assert at_edges(g0) != at_edges(g1)


def test_goal_feature_examples():
    assert np.allclose(goal_features((0, 0), (0, 0), 5), [0, 0, 0, 0])
    got = goal_features((0, 0), (3, 4), 5)
    assert np.allclose(got, [0.6, 0.8, 5 / (5 * math.sqrt(2)),
                             math.atan2(4, 3)], atol=1e-6)
    got = goal_features((2, 2), (2, 4), 5)
    assert np.allclose(got, [0.0, 0.4, 2 / (5 * math.sqrt(2)), math.pi / 2],
                       atol=1e-6)


def test_target_feature_examples():
    assert np.allclose(target_features((3, 3), (3, 3), True, 5),
                       [1, 0, 0, 0, 0])
    got = target_features((0, 0), (1, 0), False, 10)
    assert np.allclose(got, [0, 0.1, 0, 1 / (10 * math.sqrt(2)), 0], atol=1e-6)


def test_goal_features_translation_consistent():
    rng = np.random.default_rng(5)
    for _ in range(50):
        W = int(rng.integers(4, 20))
        nx, ny, gx, gy = rng.integers(0, W - 1, size=4)
        a = goal_features((nx, ny), (gx, gy), W)
        b = goal_features((nx + 1, ny + 1), (gx + 1, gy + 1), W)
        assert np.allclose(a, b, atol=1e-6)


def test_goal_feature_ranges():
    W = 7
    for nx in range(W):
        for ny in range(W):
            f = goal_features((nx, ny), (W - 1, W - 1), W)
            assert 0.0 <= f[2] <= 1.0
            assert -math.pi < f[3] <= math.pi
            assert (f[2] == 0.0) == ((nx, ny) == (W - 1, W - 1))


def test_encoding_is_pure():
    task, enc = build(5, seed=7, domain="scan", targets=2)
    a = enc.encode(task.init)
    b = enc.encode(task.init)
    for x, y in ((a.nodes, b.nodes), (a.edges, b.edges),
                 (a.globals, b.globals), (a.edge_src, b.edge_src),
                 (a.edge_dst, b.edge_dst)):
        assert x.tobytes() == y.tobytes()


def test_permuted_objects_give_isomorphic_graph():
    dom = load_domain("simple")
    problem, _ = gen_simple(InstanceSpec(W=4, seed=3))
    shuffled = ProblemDef(problem.name, problem.domain_name,
                          tuple(reversed(problem.objects)), problem.init,
                          problem.goal)
    t1 = ground_all(dom, problem)
    t2 = ground_all(dom, shuffled)
    g1 = TaskEncoder(t1, EncoderConfig()).encode(t1.init)
    g2 = TaskEncoder(t2, EncoderConfig()).encode(t2.init)
    rows1 = sorted(r.tobytes() for r in g1.nodes)
    rows2 = sorted(r.tobytes() for r in g2.nodes)
    assert rows1 == rows2
    names1 = {v: k for k, v in g1.node_index.items()}
    names2 = {v: k for k, v in g2.node_index.items()}
    e1 = sorted((names1[int(s)], names1[int(d)], f.tobytes())
                for s, d, f in zip(g1.edge_src, g1.edge_dst, g1.edges))
    e2 = sorted((names2[int(s)], names2[int(d)], f.tobytes())
                for s, d, f in zip(g2.edge_src, g2.edge_dst, g2.edges))
    assert e1 == e2


def test_node_dim_formula():
    dom = load_domain("scan")
    unary = sum(1 for p in dom.predicates if p.arity == 1)
    for goal_aware, max_targets in ((True, 2), (False, 2), (True, 5)):
        p, _ = gen_scan(InstanceSpec(W=4, num_targets=2, seed=0))
        enc = TaskEncoder(ground_all(dom, p),
                          EncoderConfig(goal_aware=goal_aware,
                                        max_targets=max_targets))
        want = unary + 5 + (4 if goal_aware else 0) + max_targets * 5
        assert enc.node_dim == want


def test_target_slot_padding_and_scanned_flag():
    task, enc = build(5, domain="scan", targets=2, max_targets=3)
    g = enc.encode(task.init)
    base = enc.node_dim - 3 * 5
    third = g.nodes[:, base + 10:base + 15]
    assert np.all(third == 0.0)
    # mark target slot 0 scanned and re-encode
    name = sorted(a.args[0] for a in task.problem.goal
                  if a.predicate == "scanned")[0]
    aid = next(i for a, i in task.atom_ids.items()
               if a.predicate == "scanned" and a.args == (name,))
    g2 = enc.encode(task.init | {aid})
    assert np.all(g2.nodes[:, base] == 1.0)
    assert np.all(g.nodes[:, base] == 0.0)


def test_too_many_targets_rejected():
    with pytest.raises(DimensionOverflow):
        build(6, domain="scan", targets=3, max_targets=2)


def test_blocked_flag_scan_only():
    task, enc = build(6, domain="scan", targets=1, density=0.2, seed=5)
    g = enc.encode(task.init)
    safe = {a.args[0] for a in task.problem.init if a.predicate == "safe-at"}
    col = enc.node_dim - 1 * 5 - 4 - 1  # last spatial slot
    for name, row in g.node_index.items():
        if name.startswith("pos-"):
            assert g.nodes[row, col] == (0.0 if name in safe else 1.0)
    stask, senc = build(5, density=0.2, seed=5)
    sg = senc.encode(stask.init)
    scol = senc.node_dim - 4 - 1
    assert np.all(sg.nodes[:, scol] == 0.0)


def test_simple_obstacles_drop_incoming_edges():
    task, enc = build(6, density=0.25, seed=9)
    g = enc.encode(task.init)
    linked = {a.args[0] for a in task.problem.init
              if a.predicate.endswith("-of")}
    all_cells = {n for n in g.node_index if n.startswith("pos-")}
    blocked = all_cells - linked
    assert blocked, "expected at least one obstacle at this density"
    for name in blocked:
        row = g.node_index[name]
        assert not np.any(g.edge_dst == row)


def test_scan_globals_one_hot_heading():
    task, enc = build(5, domain="scan", targets=1, seed=4)
    g = enc.encode(task.init)
    assert g.globals.shape == (4,)
    assert g.globals.sum() == 1.0
    (heading,) = [a.args[0] for a in task.problem.init
                  if a.predicate == "drone-to"]
    dirs = [o for o, t in task.problem.objects if t == "direction"]
    assert g.globals[dirs.index(heading)] == 1.0
    # dense mode instead marks the direction node's unary column
    encd = TaskEncoder(task, EncoderConfig(mode="dense", max_targets=1))
    gd = encd.encode(task.init)
    assert gd.globals.shape == (1,)
    col = encd.unary_preds.index("drone-to")
    assert gd.nodes[gd.node_index[heading], col] == 1.0


def test_direction_objects_only_dense_nodes():
    task, enc = build(4, domain="scan", targets=1, seed=0)
    assert "north" not in enc.node_index
    encd = TaskEncoder(task, EncoderConfig(mode="dense", max_targets=1))
    assert "north" in encd.node_index


def test_graph_stats():
    task, enc = build(10)
    g = enc.encode(task.init)
    nodes, edges, nbytes = graph_stats(g)
    assert (nodes, edges) == (101, 362)
    assert nbytes == 4 * (g.nodes.size + g.edges.size + g.globals.size)
    empty = StateGraph(np.zeros((0, 3), dtype=np.float32),
                       np.zeros(0, dtype=np.int64),
                       np.zeros(0, dtype=np.int64),
                       np.zeros((0, 2), dtype=np.float32),
                       np.zeros(7, dtype=np.float32), {})
    assert graph_stats(empty) == (0, 0, 4 * 7)


def test_infer_grid_width():
    assert infer_grid_width([("pos-0-0", "position"), ("pos-4-2", "position"),
                             ("drone", "unit")]) == 5
    assert infer_grid_width([("drone", "unit")]) == 1
