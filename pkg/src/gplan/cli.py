"""Command-line entry point: train, eval, plan, gen, and bench-graph.

Run directories are self-describing (config snapshot, append-only metrics
CSV, periodic checkpoints).  Evaluation can fan out across a thread pool
capped by the GPLAN_THREADS environment variable.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import os
import sys

import numpy as np

from .agent import EmptyActionSet, NetConfig, PlanningTask, build_model
from .graphenc import EncoderConfig, TaskEncoder, graph_stats
from .ground import ground_all, plan_to_text
from .model import load_checkpoint
from .pddl import parse_problem
from .search import Budget, baseline_gbfs, gbfs_gnn, optimal_plan_length, validate_plan
from .training import PPOConfig, RewardConfig, TrainConfig, Trainer
from .worlds import (DOMAIN_SCAN, DOMAIN_SIMPLE, InstanceSpec, gen_scan, gen_simple,
                     load_domain)

_SHORT_NAMES = {"droneworld_simple_dir": "simple", "droneworld_scan": "scan",
                "blocksworld": "blocksworld"}


def _threads() -> int:
    raw = os.environ.get("GPLAN_THREADS", "")
    if raw.strip():
        return max(1, int(raw))
    return os.cpu_count() or 1


def load_model(path: str):
    """Rebuild (domain, task-independent net, store) from a checkpoint file."""
    config, seed, tensors = load_checkpoint(path)
    short = _SHORT_NAMES.get(config["domain"])
    if short is None:
        raise SystemExit(f"checkpoint domain '{config['domain']}' is unknown")
    domain = load_domain(short)
    enc = EncoderConfig(**config["encoder"])
    net_cfg = NetConfig(**config["net"])
    store, net, _ = build_model(domain, enc, net_cfg, seed)
    store.load_state_dict(tensors)
    return domain, short, enc, net


def _gen_problem(domain_key: str, spec: InstanceSpec):
    if domain_key == "scan":
        return gen_scan(spec)[0]
    return gen_simple(spec)[0]


# ---------------------------------------------------------------------------
# train


def cmd_train(args) -> int:
    enc = EncoderConfig(mode=args.encoder, goal_aware=not args.no_goal,
                        max_targets=args.targets if args.domain == "scan" else 0)
    ppo = PPOConfig(lr=args.lr, episodes_per_iter=args.episodes,
                    hidden=args.hidden)
    net = NetConfig(latent=args.latent, hidden=args.hidden,
                    head_hidden=args.hidden)
    cfg = TrainConfig(domain=args.domain, mode=args.mode,
                      min_size=args.min_size, max_size=args.max_size,
                      iters=args.iters, seed=args.seed, density=args.density,
                      num_targets=args.targets,
                      curriculum_threshold=args.threshold,
                      eval_every=args.eval_every, eval_size=args.eval_size,
                      ppo=ppo, reward=RewardConfig(), encoder=enc, net=net)
    trainer = Trainer(cfg, run_dir=args.out)
    for _ in range(cfg.iters):
        it = trainer.run_iteration()
        print(f"iter {it.iteration:4d}  size {it.grid_size:2d}  "
              f"train {it.train_success:.2f}  eval {it.eval_success:.2f}  "
              f"kl {it.kl:.4f}  entropy {it.entropy:.3f}")
        sys.stdout.flush()
    if args.out:
        trainer.save(os.path.join(args.out, "final.bin"))
        trainer._metrics_fh.close()
        trainer._metrics_fh = None
        print(f"run written to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# eval


def _eval_one(index: int, domain, domain_key: str, enc, net, args):
    spec = InstanceSpec(W=args.W, obstacle_density=args.density,
                        num_targets=args.targets if domain_key == "scan" else 0,
                        seed=args.seed * 5_000_011 + index)
    problem = _gen_problem(domain_key, spec)
    task = PlanningTask(domain, problem, enc)
    budget = Budget(args.max_expansions, args.max_seconds)
    optimal = None
    if not args.no_oracle:
        optimal = optimal_plan_length(task)
    if args.engine == "gnn":
        result = gbfs_gnn(task, net, budget)
    elif args.engine == "baseline":
        result = baseline_gbfs(task, budget)
    else:
        result = _greedy_rollout(task, net)
    if result.success and not validate_plan(task, result.plan).valid:
        raise RuntimeError(f"instance {index}: returned plan failed validation")
    return result, optimal


def _greedy_rollout(task: PlanningTask, net):
    """Execute the policy greedily without search; success on goal in 4W steps."""
    import time

    from .ground import goal_satisfied
    from .search import SearchResult
    start = time.perf_counter()
    state = task.ground.init
    plan = []
    limit = 4 * task.W
    for _ in range(limit):
        if goal_satisfied(state, task.ground.goal):
            break
        try:
            po = net.evaluate(task, state)
        except EmptyActionSet:
            break
        action = po.actions[po.greedy()]
        plan.append(action)
        state = (state - action.delete) | action.add
    ok = goal_satisfied(state, task.ground.goal)
    return SearchResult(plan if ok else None, len(plan), len(plan),
                        time.perf_counter() - start, ok)


def cmd_eval(args) -> int:
    if args.engine in ("gnn", "policy"):
        if not args.checkpoint:
            raise SystemExit(f"engine '{args.engine}' needs --checkpoint")
        domain, domain_key, enc, net = load_model(args.checkpoint)
        if args.domain and args.domain != domain_key:
            raise SystemExit(f"checkpoint is for domain '{domain_key}', "
                             f"but --domain {args.domain} was given")
    else:
        if not args.domain:
            raise SystemExit("engine 'baseline' needs --domain")
        domain_key = args.domain
        domain = load_domain(domain_key)
        enc = EncoderConfig(max_targets=args.targets if domain_key == "scan" else 0)
        net = None

    workers = min(_threads(), args.count)
    results = [None] * args.count
    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_eval_one, i, domain, domain_key, enc, net,
                                   args): i for i in range(args.count)}
            for fut in concurrent.futures.as_completed(futures):
                results[futures[fut]] = fut.result()
    else:
        for i in range(args.count):
            results[i] = _eval_one(i, domain, domain_key, enc, net, args)

    wins = sum(1 for r, _ in results if r.success)
    expanded = float(np.mean([r.expanded for r, _ in results]))
    lens = [r.plan_length for r, _ in results if r.success]
    opts = [o for r, o in results if r.success and o]
    mean_len = float(np.mean(lens)) if lens else float("nan")
    ratio = (float(np.mean([r.plan_length / o for r, o in results
                            if r.success and o]))
             if opts else float("nan"))
    print(f"engine={args.engine} W={args.W} count={args.count} "
          f"success={wins / args.count:.3f} mean_expanded={expanded:.1f} "
          f"mean_plan_len={mean_len:.2f} len_vs_optimal={ratio:.3f}")
    return 0


# ---------------------------------------------------------------------------
# plan


def cmd_plan(args) -> int:
    if args.engine == "gnn":
        if not args.checkpoint:
            raise SystemExit("engine 'gnn' needs --checkpoint")
        domain, domain_key, enc, net = load_model(args.checkpoint)
    else:
        if not args.domain:
            raise SystemExit("engine 'baseline' needs --domain")
        domain_key = args.domain
        domain = load_domain(domain_key)
        enc = EncoderConfig(max_targets=args.targets)
        net = None
    with open(args.problem) as fh:
        problem = parse_problem(fh.read(), domain)
    task = PlanningTask(domain, problem, enc)
    budget = Budget(args.max_expansions, args.max_seconds)
    if args.engine == "gnn":
        result = gbfs_gnn(task, net, budget)
    else:
        result = baseline_gbfs(task, budget)
    if result.success:
        check = validate_plan(task, result.plan)
        if not check.valid:
            raise SystemExit(f"internal error: plan failed validation "
                             f"({check.reason})")
    out_path = args.out or (args.problem + ".plan")
    if result.success:
        with open(out_path, "w") as fh:
            fh.write(plan_to_text(result.plan))
    print(f"{args.engine},{str(result.success).lower()},{result.expanded},"
          f"{result.generated},{result.elapsed * 1000:.1f},{result.plan_length}")
    return 0 if result.success else 1


# ---------------------------------------------------------------------------
# gen


def cmd_gen(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    domain = load_domain(args.domain)
    text = DOMAIN_SCAN if args.domain == "scan" else DOMAIN_SIMPLE
    with open(os.path.join(args.out, "domain.pddl"), "w") as fh:
        fh.write(text)
    from .pddl import problem_to_pddl
    for i in range(args.count):
        spec = InstanceSpec(W=args.W, obstacle_density=args.density,
                            num_targets=args.targets if args.domain == "scan" else 0,
                            seed=args.seed + i)
        problem = _gen_problem(args.domain, spec)
        with open(os.path.join(args.out, f"problem-{i}.pddl"), "w") as fh:
            fh.write(problem_to_pddl(problem, domain))
    print(f"wrote domain.pddl and {args.count} problem file(s) to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# bench-graph


def cmd_bench_graph(args) -> int:
    lines = ["W,mode,nodes,edges,feature_bytes"]
    for W in range(args.min, args.max + 1, args.step):
        problem = gen_simple(InstanceSpec(W=W, seed=args.seed))[0]
        domain = load_domain("simple")
        task = ground_all(domain, problem)
        for mode in ("sparse", "dense"):
            enc = TaskEncoder(task, EncoderConfig(mode=mode))
            nodes, edges, nbytes = graph_stats(enc.encode(task.init))
            lines.append(f"{W},{mode},{nodes},{edges},{nbytes}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gplan",
        description="Generalized planning on grid worlds: train graph-network "
                    "policies, then solve unseen instances with guided search.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a policy/value model")
    p.add_argument("--domain", choices=["simple", "scan"], default="simple")
    p.add_argument("--mode", choices=["curriculum", "random"], default="curriculum")
    p.add_argument("--min-size", type=int, default=5)
    p.add_argument("--max-size", type=int, default=9)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", default=None, help="run directory")
    p.add_argument("--density", type=float, default=0.0)
    p.add_argument("--targets", type=int, default=2)
    p.add_argument("--threshold", type=int, default=25,
                   help="consecutive successes per curriculum increment")
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--hidden", type=int, default=512)
    p.add_argument("--latent", type=int, default=128)
    p.add_argument("--encoder", choices=["sparse", "dense"], default="sparse")
    p.add_argument("--no-goal", action="store_true",
                   help="drop goal-relative node features")
    p.add_argument("--eval-every", type=int, default=1)
    p.add_argument("--eval-size", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on fresh instances")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--domain", choices=["simple", "scan"], default=None)
    p.add_argument("--W", type=int, required=True)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--engine", choices=["gnn", "baseline", "policy"],
                   default="gnn")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--density", type=float, default=0.0)
    p.add_argument("--targets", type=int, default=2)
    p.add_argument("--max-expansions", type=int, default=100_000)
    p.add_argument("--max-seconds", type=float, default=None)
    p.add_argument("--no-oracle", action="store_true",
                   help="skip the breadth-first optimal-length oracle")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plan", help="solve one problem file")
    p.add_argument("--problem", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--domain", choices=["simple", "scan", "blocksworld"],
                   default=None)
    p.add_argument("--engine", choices=["gnn", "baseline"], default="gnn")
    p.add_argument("--targets", type=int, default=2)
    p.add_argument("--max-expansions", type=int, default=100_000)
    p.add_argument("--max-seconds", type=float, default=None)
    p.add_argument("--out", default=None, help="plan file path")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("gen", help="write domain and problem files")
    p.add_argument("--domain", choices=["simple", "scan"], required=True)
    p.add_argument("--W", type=int, required=True)
    p.add_argument("--density", type=float, default=0.0)
    p.add_argument("--targets", type=int, default=2)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench-graph",
                       help="edge/feature size comparison of both encodings")
    p.add_argument("--min", type=int, default=5)
    p.add_argument("--max", type=int, default=20)
    p.add_argument("--step", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench_graph)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
