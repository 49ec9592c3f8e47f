"""gbe-nav: generate datasets, train, evaluate and run ablations.

Exit codes: 0 on success, 1 on configuration or input errors, 2 when
training aborts on a non-finite loss or gradient.
"""
import argparse
import contextlib
import logging
import os
import sys
from typing import List, Optional

from torch.utils.tensorboard import SummaryWriter

from gbe_nav import _task_commons, constants, experiments, tensorboard
from gbe_nav.experiment import (
    ConfigError, DatasetConfig, ModelConfig, RunConfig, TrainConfig, WorldConfig
)
from gbe_nav.nn import model_ckpt
from gbe_nav.nn.core import NonFiniteGradientError
from gbe_nav.planner import TeacherRule
from gbe_nav.tasks import evaluator, trainer
from gbe_nav.worldgen import episodes as worldgen_episodes
from gbe_nav.worldgen import serialization
from gbe_nav.worldgen.instructions import parse_granularity
from gbe_nav.worldgen.world import generate_world

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_RUNTIME_ABORT = 2

_ABORT_ERRORS = (trainer.TrainingAborted, NonFiniteGradientError)


def _world_config(args: argparse.Namespace) -> WorldConfig:
    return WorldConfig(node_count=args.nodes, region_count=args.regions,
                       object_count=args.objects)


def _train_config(args: argparse.Namespace) -> TrainConfig:
    config = TrainConfig(
        lambda_il=args.lambda_il, lambda_rl=args.lambda_rl, lambda_ge=args.lambda_ge,
        entropy_coef=args.entropy_coef, gamma=args.gamma, learning_rate=args.lr,
        iterations=args.iterations, batch_size=args.batch_size,
        max_decisions=args.max_decisions, eval_every=args.eval_every,
        eval_episodes=args.eval_episodes, checkpoint_every=args.checkpoint_every,
        seed=args.seed)
    if args.no_ge:
        config = config._replace(lambda_ge=0.0)
    return config


def _model_config(args: argparse.Namespace) -> ModelConfig:
    return ModelConfig(readout_scope=args.readout, zero_vision=args.zero_vision,
                       zero_language=args.zero_language)


def _run_config(args: argparse.Namespace, output_dir: str, **kwargs) -> RunConfig:
    return RunConfig(
        subcommand=args.subcommand, seed=args.seed,
        dataset_dir=getattr(args, "dataset", None), output_dir=output_dir,
        granularity=parse_granularity(args.granularity)
        if getattr(args, "granularity", None) else None,
        no_ge=getattr(args, "no_ge", False), **kwargs)


def _load(args: argparse.Namespace) -> worldgen_episodes.Dataset:
    dataset = serialization.load_dataset(args.dataset)
    if getattr(args, "granularity", None):
        levels = parse_granularity(args.granularity)
        dataset = dataset._replace(splits={
            split: worldgen_episodes.with_granularity(eps, dataset.worlds, levels)
            for split, eps in dataset.splits.items()})
    return dataset


def cmd_gen_world(args: argparse.Namespace) -> None:
    world = generate_world(args.seed, _world_config(args))
    out = args.out or os.path.join(
        _task_commons.get_output_dir(args.output_dir), f"{world.world_id}.json")
    serialization.save_world(world, out)
    logger.info(f"wrote {out}")


def cmd_gen_dataset(args: argparse.Namespace) -> None:
    config = DatasetConfig(
        world=_world_config(args), n_seen_worlds=args.worlds,
        n_unseen_worlds=args.unseen_worlds, n_test_worlds=args.test_worlds,
        episodes_per_object=args.episodes_per_object,
        granularity=parse_granularity(args.granularity), seed=args.seed)
    out = args.out or _task_commons.get_output_dir(args.output_dir)
    dataset = worldgen_episodes.build_dataset(config)
    serialization.save_dataset(dataset, out)
    for split, split_episodes in dataset.splits.items():
        logger.info(f"{split}: {worldgen_episodes.dataset_stats(split_episodes)}")
    _task_commons.write_run_manifest(out, _run_config(args, out), extra={"dataset": config})


def cmd_train(args: argparse.Namespace) -> None:
    train_config = _train_config(args)
    model_config = _model_config(args)
    output_dir = _task_commons.get_output_dir(args.output_dir)
    model_dir = args.out or os.path.join(output_dir, "model")
    os.makedirs(model_dir, exist_ok=True)
    dataset = _load(args)
    _task_commons.write_run_manifest(
        model_dir, _run_config(args, output_dir, train=train_config, model=model_config),
        inputs=[args.dataset])
    logger.info(f"lambda_il={train_config.lambda_il} lambda_rl={train_config.lambda_rl} "
                f"lambda_ge={train_config.lambda_ge}")

    serve = tensorboard.tensorboard_server(model_dir) if args.tensorboard \
        else contextlib.nullcontext()
    tb_writer = SummaryWriter(os.path.join(model_dir, "tb"))
    try:
        with serve:
            trainer.train(
                dataset.worlds, dataset.splits["train"], train_config, model_config,
                model_dir=model_dir,
                eval_splits={s: dataset.splits[s] for s in experiments.EVAL_SPLITS
                             if s in dataset.splits},
                tb_writer=tb_writer, resume=args.resume, debug_path=args.debug_dump)
    finally:
        tb_writer.flush()
        tb_writer.close()


def _policy_fn(args: argparse.Namespace):
    if args.policy == "random":
        return lambda: evaluator.RandomPolicy(args.seed)
    if args.policy == "teacher":
        return lambda: evaluator.TeacherPolicy(TeacherRule.SHORTEST_PATH)
    if not args.checkpoint:
        raise ConfigError("--checkpoint is required with --policy model")
    checkpoint = args.checkpoint
    if os.path.isdir(checkpoint):
        checkpoint = model_ckpt.find_latest_ckpt(checkpoint)
        if checkpoint is None:
            raise FileNotFoundError(f"no checkpoint in {args.checkpoint}")
    elif not os.path.exists(checkpoint):
        raise FileNotFoundError(f"checkpoint {checkpoint} does not exist")
    agent, _ = evaluator.load_agent(checkpoint)
    return lambda: evaluator.ModelPolicy(agent, greedy=not args.sample, seed=args.seed)


def cmd_eval(args: argparse.Namespace) -> None:
    output_dir = _task_commons.get_output_dir(args.output_dir)
    dataset = _load(args)
    unknown = set(args.splits) - set(dataset.splits)
    if unknown:
        raise ConfigError(f"unknown splits {sorted(unknown)}")
    splits = {split: dataset.splits[split] for split in args.splits}

    if args.watch:
        if args.policy != "model" or not args.checkpoint or not os.path.isdir(args.checkpoint):
            raise ConfigError("--watch needs --policy model and a model directory as --checkpoint")
        evaluator.evaluate_checkpoints(
            args.checkpoint, dataset.worlds, splits, args.max_decisions, args.threads,
            timeout_in_secs=args.timeout)
        return

    summaries, rows = evaluator.evaluate_splits(
        dataset.worlds, splits, _policy_fn(args), args.max_decisions,
        n_threads=args.threads)
    out = args.out or os.path.join(output_dir, f"eval_{args.policy}.csv")
    evaluator.write_metrics_csv(out, rows)
    _task_commons.write_run_manifest(
        output_dir, _run_config(args, output_dir),
        inputs=[args.dataset] + ([args.checkpoint] if args.checkpoint else []),
        extra={"policy": args.policy, "metrics_csv": out})
    for summary in summaries.values():
        summary.log_mlflow(prefix=f"{args.policy}_")
    logger.info(f"wrote {out}")


def cmd_baseline_random(args: argparse.Namespace) -> None:
    args.policy = "random"
    args.checkpoint = None
    args.watch = False
    cmd_eval(args)


def cmd_ablate(args: argparse.Namespace) -> None:
    output_dir = _task_commons.get_output_dir(args.output_dir)
    dataset = _load(args)
    train_config = _train_config(args)
    model_config = _model_config(args)
    _task_commons.write_run_manifest(
        output_dir, _run_config(args, output_dir, train=train_config, model=model_config),
        inputs=[args.dataset], extra={"ablation": args.kind, "seeds": args.seeds})
    experiments.run_ablation(
        args.kind, dataset, list(range(args.seed, args.seed + args.seeds)),
        train_config, model_config, output_dir=output_dir, n_threads=args.threads)


def _add_world_args(parser: argparse.ArgumentParser) -> None:
    defaults = WorldConfig()
    parser.add_argument("--nodes", type=int, default=defaults.node_count)
    parser.add_argument("--regions", type=int, default=defaults.region_count)
    parser.add_argument("--objects", type=int, default=defaults.object_count)


def _add_train_args(parser: argparse.ArgumentParser) -> None:
    defaults = TrainConfig()
    parser.add_argument("--dataset", required=True, help="dataset directory")
    parser.add_argument("--iterations", type=int, default=defaults.iterations)
    parser.add_argument("--lr", type=float, default=defaults.learning_rate)
    parser.add_argument("--batch-size", type=int, default=defaults.batch_size)
    parser.add_argument("--gamma", type=float, default=defaults.gamma)
    parser.add_argument("--lambda-il", type=float, default=defaults.lambda_il)
    parser.add_argument("--lambda-rl", type=float, default=defaults.lambda_rl)
    parser.add_argument("--lambda-ge", type=float, default=defaults.lambda_ge)
    parser.add_argument("--entropy-coef", type=float, default=defaults.entropy_coef)
    parser.add_argument("--no-ge", action="store_true",
                        help="disable the graph-based exploration term")
    parser.add_argument("--zero-vision", action="store_true",
                        help="replace vision features with zeros")
    parser.add_argument("--zero-language", action="store_true",
                        help="replace language states with zeros")
    parser.add_argument("--granularity", help="instruction segments, e.g. 1,2,3")
    parser.add_argument("--readout", choices=["graph", "observed"], default="graph")
    parser.add_argument("--max-decisions", type=int, default=defaults.max_decisions)
    parser.add_argument("--eval-every", type=int, default=defaults.eval_every)
    parser.add_argument("--eval-episodes", type=int, default=defaults.eval_episodes)
    parser.add_argument("--checkpoint-every", type=int, default=defaults.checkpoint_every)


def _add_eval_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dataset", required=True, help="dataset directory")
    parser.add_argument("--splits", nargs="+", default=list(constants.SPLITS[1:]))
    parser.add_argument("--granularity", help="instruction segments, e.g. 1,2,3")
    parser.add_argument("--max-decisions", type=int, default=constants.MAX_DECISIONS)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--out", help="metrics CSV path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gbe-nav", description=__doc__.splitlines()[0])
    parser.add_argument("--output-dir",
                        help=f"defaults to ${constants.ENV_OUTPUT_DIR} or the working directory")
    parser.add_argument("--log-file", help="also write logs to this file")
    subparsers = parser.add_subparsers(dest="subcommand", required=True)

    gen_world = subparsers.add_parser("gen-world", help="generate one house")
    gen_world.add_argument("--seed", type=int, default=0)
    gen_world.add_argument("--out", help="world JSON path")
    _add_world_args(gen_world)
    gen_world.set_defaults(func=cmd_gen_world)

    gen_dataset = subparsers.add_parser("gen-dataset", help="generate houses and splits")
    defaults = DatasetConfig()
    gen_dataset.add_argument("--seed", type=int, default=defaults.seed)
    gen_dataset.add_argument("--worlds", type=int, default=defaults.n_seen_worlds,
                             help="number of seen (training) houses")
    gen_dataset.add_argument("--unseen-worlds", type=int, default=defaults.n_unseen_worlds)
    gen_dataset.add_argument("--test-worlds", type=int, default=defaults.n_test_worlds)
    gen_dataset.add_argument("--episodes-per-object", type=int,
                             default=defaults.episodes_per_object)
    gen_dataset.add_argument("--granularity", default="1,2,3,4")
    gen_dataset.add_argument("--out", help="dataset directory")
    _add_world_args(gen_dataset)
    gen_dataset.set_defaults(func=cmd_gen_dataset)

    train = subparsers.add_parser("train", help="train an agent")
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--out", help="model directory")
    train.add_argument("--tensorboard", action="store_true",
                       help="serve the learning curves while training")
    train.add_argument("--resume", action="store_true",
                       help="continue from the latest checkpoint of the model directory")
    train.add_argument("--debug-dump", metavar="FILE",
                       help="append the graph and policy inputs of every rollout step")
    _add_train_args(train)
    train.set_defaults(func=cmd_train)

    evaluate = subparsers.add_parser("eval", help="evaluate a policy")
    evaluate.add_argument("--seed", type=int, default=0)
    evaluate.add_argument("--policy", choices=["model", "random", "teacher"], default="model")
    evaluate.add_argument("--checkpoint", help="checkpoint file or model directory")
    evaluate.add_argument("--sample", action="store_true",
                          help="sample model actions instead of taking the most likely")
    evaluate.add_argument("--watch", action="store_true",
                          help="evaluate new checkpoints of a model directory as they appear")
    evaluate.add_argument("--timeout", type=float, default=1200)
    _add_eval_args(evaluate)
    evaluate.set_defaults(func=cmd_eval)

    baseline = subparsers.add_parser("baseline-random", help="evaluate the uniform random policy")
    baseline.add_argument("--seed", type=int, default=0)
    _add_eval_args(baseline)
    baseline.set_defaults(func=cmd_baseline_random)

    ablate = subparsers.add_parser("ablate", help="run an ablation over several seeds")
    ablate.add_argument("--kind", choices=experiments.ABLATIONS, required=True)
    ablate.add_argument("--seed", type=int, default=0, help="first seed")
    ablate.add_argument("--seeds", type=int, default=5, help="number of seeds")
    ablate.add_argument("--threads", type=int, default=1)
    _add_train_args(ablate)
    ablate.set_defaults(func=cmd_ablate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors, which is the abort code here
        return EXIT_OK if e.code == 0 else EXIT_CONFIG_ERROR
    _task_commons.setup_logging()
    if args.log_file:
        _task_commons.add_file_handler(args.log_file)
    _task_commons._log_sys_info()

    try:
        args.func(args)
    except _ABORT_ERRORS as e:
        logger.exception(f"{args.subcommand} aborted: {e}")
        return EXIT_RUNTIME_ABORT
    except (ConfigError, FileNotFoundError, ValueError) as e:
        logger.exception(f"{args.subcommand} failed: {e}")
        return EXIT_CONFIG_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
