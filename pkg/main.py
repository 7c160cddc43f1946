"""
mmwave-handover command line.

    python main.py generate  --scene scenarios/urban_street.json --seed 7
    python main.py train     --scene runs/scenario.json --method proposed
    python main.py evaluate  --scene runs/scenario.json --method proposed --policy runs/proposed/policy.json
    python main.py compare   --scene runs/scenario.json --policy ... --baseline-policy ...
    python main.py sweep     --scene scenarios/urban_street.json
    python main.py summarize --archive runs/proposed/traces.parquet

Exit codes: 0 ok, 2 configuration error, 3 training failure, 4 artifact mismatch.
"""
import argparse
import hashlib
import json
import logging
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import pandas as pd
import torch
from tqdm import tqdm

from core import settings
from core.agent import config_to_dict, load_policy, load_train_config, save_policy, train
from core.baselines import MultiConnectivityPolicy, baseline_learned_handover
from core.env import run_episode
from core.errors import ConfigError, MmwaveError
from core.links import GeometricLinkModel, channel_dump, make_env
from core.metrics import (
    compare,
    handover_table,
    paired_sign_test,
    summarize,
    throughput_table,
    totals_frame,
    unmet_table,
)
from core.scenario import (
    export_scene,
    load_scenario,
    scenario_from_json,
    scenario_to_json,
    with_bs_count,
    with_slots,
)
from core.scene import sample_obstacles
from core.seeding import realization_seeds, stream
from core.trace_store import CSV_PATTERN, load_trace_archive, write_trace_archive

logger = logging.getLogger("mmwave")

FLOAT_FORMAT = "%.10g"
METHODS = ("proposed", "baseline1", "baseline2")
LEARNED = ("proposed", "baseline2")
DEFAULT_TRAIN_CONFIG = "configs/train.yaml"


# ----------------------------
# Output helpers
# ----------------------------
def _write_csv(df: pd.DataFrame, path: Path) -> None:
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def _write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _manifest(command: str, args: argparse.Namespace, scenario_text: str, **extra) -> dict:
    return {
        "command": command,
        "args": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "scenario_sha256": hashlib.sha256(scenario_text.encode("utf-8")).hexdigest(),
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "pandas": pd.__version__,
            "torch": torch.__version__,
        },
        **extra,
    }


def _load(args):
    scenario = load_scenario(args.scene, args.seed)
    if getattr(args, "traj_slots", None):
        scenario = with_slots(scenario, args.traj_slots)
    return scenario


def _master_seed(args, scenario) -> int:
    return scenario.seed if args.seed is None else args.seed


# ----------------------------
# Evaluation workers
# ----------------------------
_WORKER = {}


def _init_worker(scenario_text: str, method: str, policy_path) -> None:
    scenario = scenario_from_json(scenario_text)
    env = make_env(scenario)
    if method == "baseline1":
        policy = MultiConnectivityPolicy(env)
    else:
        policy = load_policy(policy_path, n_bs=scenario.n_bs, slots=scenario.slots)
    _WORKER.update(env=env, policy=policy)


def _run_realization(seed: int) -> pd.DataFrame:
    return run_episode(_WORKER["env"], _WORKER["policy"], seed)


def evaluate_method(scenario, method: str, policy_path, seeds, workers: int):
    """Traces for `seeds` in order; runs in a process pool when workers > 1."""
    if method in LEARNED and policy_path is None:
        raise ConfigError(f"Method '{method}' needs --policy")
    if method in LEARNED:
        # Fail fast on a mismatched checkpoint before spawning workers.
        load_policy(policy_path, n_bs=scenario.n_bs, slots=scenario.slots)
    text = scenario_to_json(scenario)
    bar = dict(desc=method, unit="real", total=len(seeds), disable=not settings.progress_enabled())
    if workers <= 1 or len(seeds) <= 1:
        _init_worker(text, method, policy_path)
        return [_run_realization(s) for s in tqdm(seeds, **bar)]
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                             initargs=(text, method, policy_path)) as pool:
        return list(tqdm(pool.map(_run_realization, seeds), **bar))


def _write_evaluation(out_dir: Path, traces, threshold: float):
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, t in enumerate(traces):
        _write_csv(t, out_dir / CSV_PATTERN.format(index=i))
    write_trace_archive(traces, out_dir / "traces.parquet")
    _write_csv(totals_frame(traces, threshold), out_dir / "totals.csv")
    summary = summarize(traces, threshold)
    _write_json(summary.to_dict(), out_dir / "summary.json")
    return summary


def _train_method(scenario, method: str, config, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    factory = lambda: make_env(scenario)  # noqa: E731
    if method == "proposed":
        policy, curve = train(factory, config)
    else:
        policy, curve = baseline_learned_handover(factory, config)
    checkpoint = out_dir / "policy.json"
    digest = save_policy(policy, checkpoint, config)
    _write_csv(curve, out_dir / "curve.csv")
    return checkpoint, digest


# ----------------------------
# Commands
# ----------------------------
def cmd_generate(args) -> int:
    scenario = _load(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = scenario_to_json(scenario)
    (out / "scenario.json").write_text(text, encoding="utf-8")
    obstacles = sample_obstacles(
        scenario.scene, scenario.obstacle_density, stream(scenario.seed, "obstacles"), scenario.obstacles,
        seed=scenario.seed,
    )
    _write_json(export_scene(scenario, obstacles), out / "scene_export.json")
    _write_json(_manifest("generate", args, text), out / "manifest.json")
    x0, y0, x1, y1 = scenario.scene.bounds
    print(f"BSs={scenario.n_bs} M={scenario.slots} area={(x1 - x0) * (y1 - y0):.0f} m2 -> {out / 'scenario.json'}")
    return 0


def cmd_train(args) -> int:
    if args.method not in LEARNED:
        raise ConfigError(f"Method '{args.method}' has nothing to train (choose from {', '.join(LEARNED)})")
    scenario = _load(args)
    config = load_train_config(args.config, episodes=args.episodes, seed=_master_seed(args, scenario))
    out = Path(args.out_dir) / args.method
    checkpoint, digest = _train_method(scenario, args.method, config, out)
    _write_json(
        _manifest("train", args, scenario_to_json(scenario), train_config=config_to_dict(config),
                  checkpoint_sha256=digest),
        out / "manifest.json",
    )
    print(f"{args.method}: {config.episodes} episodes -> {checkpoint} (sha256 {digest[:12]})")
    return 0


def cmd_evaluate(args) -> int:
    scenario = _load(args)
    seeds = realization_seeds(_master_seed(args, scenario), args.realizations)
    traces = evaluate_method(scenario, args.method, args.policy, seeds, args.workers)
    out = Path(args.out_dir) / args.method
    summary = _write_evaluation(out, traces, scenario.env.throughput_threshold)
    if args.dump_channels:
        realization = GeometricLinkModel(scenario).realize(seeds[0])
        _write_csv(channel_dump(realization), out / "channels_0000.csv")
    _write_json(
        _manifest("evaluate", args, scenario_to_json(scenario), realization_seeds=seeds),
        out / "manifest.json",
    )
    print(json.dumps(summary.to_dict(), sort_keys=True))
    return 0


def _compare_all(scenario, seeds, policies: dict, workers: int, out: Path):
    summaries, totals = {}, {}
    threshold = scenario.env.throughput_threshold
    for method in METHODS:
        traces = evaluate_method(scenario, method, policies.get(method), seeds, workers)
        summaries[method] = _write_evaluation(out / method, traces, threshold)
        totals[method] = totals_frame(traces, threshold)
    table = compare(summaries)
    tests = {
        f"proposed_vs_{m}": {
            metric: paired_sign_test(totals["proposed"][metric], totals[m][metric])
            for metric in ("throughput", "unmet", "handover")
        }
        for m in METHODS if m != "proposed"
    }
    return summaries, table, tests


def cmd_compare(args) -> int:
    scenario = _load(args)
    seeds = realization_seeds(_master_seed(args, scenario), args.realizations)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _, table, tests = _compare_all(
        scenario, seeds, {"proposed": args.policy, "baseline2": args.baseline_policy}, args.workers, out,
    )
    _write_csv(table, out / "comparison.csv")
    _write_json(tests, out / "sign_tests.json")
    _write_json(_manifest("compare", args, scenario_to_json(scenario), realization_seeds=seeds), out / "manifest.json")
    print(table.to_string(index=False, float_format=lambda v: f"{v:.3f}"))
    return 0


def _sweep_point(scenario, config, seeds, workers, out: Path):
    policies = {}
    for method in LEARNED:
        policies[method], _ = _train_method(scenario, method, config, out / method)
    summaries, _, _ = _compare_all(scenario, seeds, policies, workers, out)
    return summaries


def cmd_sweep(args) -> int:
    base = load_scenario(args.scene, args.seed)
    master = _master_seed(args, base)
    config = load_train_config(args.config, episodes=args.episodes, seed=master)
    seeds = realization_seeds(master, args.realizations)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    by_length = []
    for m in args.lengths:
        summaries = _sweep_point(with_slots(base, m), config, seeds, args.workers, out / f"length_{m}")
        by_length.extend((m, name, s) for name, s in summaries.items())

    by_count = []
    sized = with_slots(base, args.traj_slots)
    for k in args.bs_counts:
        summaries = _sweep_point(with_bs_count(sized, k), config, seeds, args.workers, out / f"bs_{k}")
        by_count.extend((k, name, s) for name, s in summaries.items())

    _write_csv(unmet_table(by_length), out / "fig_unmet_vs_length.csv")
    _write_csv(handover_table(by_length), out / "fig_handover_vs_length.csv")
    _write_csv(throughput_table(by_count), out / "fig_throughput_vs_bs.csv")
    _write_json(
        _manifest("sweep", args, scenario_to_json(base), train_config=config_to_dict(config), realization_seeds=seeds),
        out / "manifest.json",
    )
    print(f"sweep: {len(args.lengths)} lengths, {len(args.bs_counts)} BS counts -> {out}")
    return 0


def cmd_summarize(args) -> int:
    traces = load_trace_archive(args.archive)
    summary = summarize(traces, args.throughput_threshold)
    text = json.dumps(summary.to_dict(), sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


# ----------------------------
# Argument parsing
# ----------------------------
def _int_list(text: str):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmwave-handover", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--log-level", default=None, help="overrides MMW_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    def scene_args(p, traj=True):
        p.add_argument("--scene", required=True, help="scenario descriptor or generated scenario JSON")
        p.add_argument("--seed", type=int, default=None, help="master seed (default: the scenario's)")
        p.add_argument("--out-dir", default=settings.default_out_dir())
        if traj:
            p.add_argument("--traj-slots", type=int, default=None, help="re-sample the walk to M slots")

    def eval_args(p):
        p.add_argument("--realizations", type=int, default=500)
        p.add_argument("--workers", type=int, default=settings.default_workers())

    p = sub.add_parser("generate", help="build a scenario and write it as JSON")
    scene_args(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train the proposed policy or the learned-handover baseline")
    scene_args(p)
    p.add_argument("--method", default="proposed", choices=METHODS)
    p.add_argument("--config", default=DEFAULT_TRAIN_CONFIG)
    p.add_argument("--episodes", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="roll one method over fresh channel realizations")
    scene_args(p)
    eval_args(p)
    p.add_argument("--method", default="proposed", choices=METHODS)
    p.add_argument("--policy", default=None, help="checkpoint for learned methods")
    p.add_argument("--dump-channels", action="store_true", help="also write per-path channels of realization 0")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="evaluate all methods on shared realization seeds")
    scene_args(p)
    eval_args(p)
    p.add_argument("--policy", required=True, help="proposed-method checkpoint")
    p.add_argument("--baseline-policy", required=True, help="learned-handover baseline checkpoint")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="trajectory-length and BS-count sweeps")
    scene_args(p, traj=False)
    eval_args(p)
    p.add_argument("--config", default=DEFAULT_TRAIN_CONFIG)
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--lengths", type=_int_list, default=[100, 200, 300, 400, 500])
    p.add_argument("--bs-counts", type=_int_list, default=[4, 6, 8, 10])
    p.add_argument("--traj-slots", type=int, default=300, help="walk length M for the BS-count sweep")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("summarize", help="recompute a run summary from a trace archive")
    p.add_argument("--archive", required=True)
    p.add_argument("--throughput-threshold", type=float, default=1.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    settings.configure_logging(args.log_level)
    try:
        return args.func(args)
    except MmwaveError as e:
        logger.error("%s", e)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
