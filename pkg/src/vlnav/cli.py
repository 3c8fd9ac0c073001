"""Command-line entry points: run, bench, train, gradcheck, retrieve, export-oracle.

Every failure exits nonzero after printing one structured JSON error line on
stderr. All outputs are byte-stable for identical arguments and seeds.
"""
from __future__ import annotations

import argparse
import json
import sys


from .encoder import Instruction, encode_instruction
from .data import default_affordances, default_items
from .harness import (
    EpisodeConfig,
    PlannerChoice,
    SuiteConfig,
    episode_log_to_jsonl,
    format_report_table,
    report_to_json,
    run_benchmark,
    run_episode,
)
from .planner import (
    ExportConfig,
    PlannerConfig,
    TrainConfig,
    export_oracle_dataset,
    load_dataset,
    save_params,
    train_planner,
)
from .retrieval import RetrievalConfig, pool_from_descriptors, retrieve
from .world import ScenarioKind


def _fail(kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}, sort_keys=True) + "\n")
    return 1


def _apply_master_config(args: argparse.Namespace) -> dict:
    if not getattr(args, "config", None):
        return {}
    with open(args.config, "r", encoding="utf-8") as f:
        return json.load(f)


def _episode_config(args: argparse.Namespace, master: dict) -> EpisodeConfig:
    from .controller import ControllerConfig, PIDGains
    from .world import SensorConfig

    ctrl_cfg = master.get("controller", {})
    gains = PIDGains(**ctrl_cfg.pop("gains")) if "gains" in ctrl_cfg else PIDGains()
    controller = ControllerConfig(gains=gains, **ctrl_cfg)
    sensor = SensorConfig(**master.get("sensor", {}))
    planner_cfg = PlannerConfig(**master.get("planner", {}))
    retrieval = RetrievalConfig(**master.get("retrieval", {}))
    return EpisodeConfig(
        kind=ScenarioKind(args.scenario),
        seed=args.seed,
        instruction=args.instruction,
        planner=PlannerChoice(args.planner),
        params_path=args.params,
        pool_path=args.pool,
        items_path=master.get("items_path"),
        affordance_path=master.get("affordance_path"),
        bypass_prompting=args.bypass_prompting,
        delta=master.get("delta", 0.5),
        max_steps=master.get("max_steps", 600),
        controller=controller,
        sensor=sensor,
        planner_cfg=planner_cfg,
        retrieval=retrieval,
        use_u_trap=getattr(args, "u_trap", False),
    )


def cmd_run(args: argparse.Namespace) -> int:
    master = _apply_master_config(args)
    cfg = _episode_config(args, master)
    log = run_episode(cfg)
    with open(args.out, "w", encoding="utf-8") as f:
        f.write(episode_log_to_jsonl(log))
    print(json.dumps({
        "outcome": log.outcome.value,
        "steps": len(log.steps),
        "final_goal_distance": log.final_goal_distance,
        "out": args.out,
    }, sort_keys=True))
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    with open(args.suite, "r", encoding="utf-8") as f:
        suite = SuiteConfig.from_dict(json.load(f))
    report, cell_logs = run_benchmark(suite, workers=args.workers)
    with open(args.out, "w", encoding="utf-8") as f:
        f.write(report_to_json(report))
        f.write("\n")
    if args.trajectories:
        import os

        os.makedirs(args.trajectories, exist_ok=True)
        for (kind, planner), logs in sorted(cell_logs.items()):
            for log in logs:
                name = f"{kind}_{planner}_{log.config['seed']}.jsonl"
                with open(os.path.join(args.trajectories, name), "w", encoding="utf-8") as f:
                    f.write(episode_log_to_jsonl(log))
    print(format_report_table(report))
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    from .planner import augment_goal_permutations

    samples = load_dataset(args.data)
    if not args.no_augment:
        samples = augment_goal_permutations(samples)
    hyper = TrainConfig(epochs=args.epochs, lr=args.lr, batch_size=args.batch_size,
                        lambda_d=args.lambda_d, seed=args.seed)
    result = train_planner(samples, hyper)
    save_params(result.params, args.out)
    for epoch, loss in enumerate(result.epoch_losses):
        print(f"epoch {epoch:3d}  loss {loss:.6f}")
    print(json.dumps({"out": args.out, "final_loss": result.epoch_losses[-1]}, sort_keys=True))
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    from .gradcheck import run_gradcheck

    report = run_gradcheck(seed=args.seed)
    for name, err in sorted(report.per_tensor.items()):
        print(f"{name:<14} max_rel_err {err:.3e}")
    print(f"worst {report.worst:.3e} ({'PASS' if report.passed else 'FAIL'})")
    return 0 if report.passed else 1


def cmd_retrieve(args: argparse.Namespace) -> int:
    items = default_items()
    table = default_affordances()
    prompt = encode_instruction(Instruction(args.instruction), items, table)
    if args.pool:
        from .retrieval import read_pool

        pool = read_pool(args.pool)
    else:
        pool = pool_from_descriptors([(f"item-{i}", d) for i, d in enumerate(items)])
    cfg = RetrievalConfig(dim=pool[0].embedding.dim)
    result = retrieve(prompt, pool, cfg)
    print(json.dumps({
        "prompt": prompt.text,
        "source": prompt.source.value,
        "best_id": result.best_id,
        "best_descriptor": pool[result.best_index].descriptor,
        "probs": [float(p) for p in result.probs],
    }, sort_keys=True))
    return 0


def cmd_export_oracle(args: argparse.Namespace) -> int:
    cfg = ExportConfig(kind=ScenarioKind(args.scenario), episodes=args.episodes, seed=args.seed)
    count = export_oracle_dataset(cfg, args.out)
    print(json.dumps({"samples": count, "out": args.out}, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vlnav", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one episode")
    p.add_argument("--scenario", choices=[k.value for k in ScenarioKind], default="box")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--planner", choices=[c.value for c in PlannerChoice], default="oracle")
    p.add_argument("--instruction", default="")
    p.add_argument("--pool", default=None)
    p.add_argument("--params", default=None)
    p.add_argument("--bypass-prompting", action="store_true")
    p.add_argument("--u-trap", action="store_true", help="use the bundled U-trap fixture")
    p.add_argument("--config", default=None, help="master config JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="run a benchmark suite")
    p.add_argument("--suite", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--trajectories", default=None,
                   help="directory for per-episode trajectory JSONL files")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("train", help="train the waypoint planner by imitation")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.2)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lambda-d", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-augment", action="store_true",
                   help="skip goal-class permutation augmentation")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gradcheck", help="verify analytic gradients against finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("retrieve", help="encode an instruction and score the pool")
    p.add_argument("--instruction", required=True)
    p.add_argument("--pool", default=None)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("export-oracle", help="export an oracle imitation dataset")
    p.add_argument("--scenario", choices=[k.value for k in ScenarioKind], default="box")
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_oracle)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        return _fail("file-not-found", str(exc))
    except (ValueError, RuntimeError) as exc:
        return _fail(type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
