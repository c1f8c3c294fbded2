"""Command-line entry points: prepare, train, eval, ablate.

Exit codes: 0 success, 2 validation failure, 3 non-finite loss,
4 rollout endpoint unreachable. Flag values override config-file values,
which override defaults. The PRPO_ENDPOINT environment variable is the
fallback for --endpoint.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

from . import eval as eval_mod
from .dataset import CLASSIFICATION, load_dataset, resolve_label_range, split
from .errors import NonFiniteLossError, PrpoError, RemoteUnavailableError
from .permute import sample_permutations, apply_permutation
from .policy import ToyClassifierPolicy, ToyRegressorPolicy, load_policy, save_policy
from .seeding import stable_seed
from .serialize import build_prompt, default_template, load_template, serialize_row
from .trainer import (
    MODE_GRPO,
    MODE_PRPO,
    RemotePolicy,
    TrainConfig,
    paired_ablation,
    train,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NONFINITE = 3
EXIT_REMOTE = 4


def _out_dir(args, command: str) -> Path:
    if args.out:
        out = Path(args.out)
    else:
        stamp = time.strftime("%Y%m%d-%H%M%S")
        out = Path("runs") / f"{command}-{stamp}"
    out.mkdir(parents=True, exist_ok=True)
    return out


def _template(args):
    return load_template(args.template) if args.template else default_template()


def _jsonl_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True)


def _config_from_args(args) -> TrainConfig:
    """Merge defaults < config file < explicit CLI flags."""
    merged = {f.name: f.default for f in dataclasses.fields(TrainConfig)}
    if getattr(args, "config", None):
        file_values = json.loads(Path(args.config).read_text(encoding="utf-8"))
        unknown = set(file_values) - set(merged)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_values)
    flag_map = {
        "m": "m",
        "G": "G",
        "alpha": "alpha",
        "gamma": "gamma",
        "beta_kl": "beta_kl",
        "clip_eps": "clip_eps",
        "lr": "learning_rate",
        "batch_size": "batch_size",
        "mini_batch": "mini_batch",
        "epochs": "epochs",
        "seed": "seed",
        "mode": "mode",
        "sigma_floor": "sigma_floor",
        "temperature": "temperature",
        "max_steps": "max_steps",
        "jobs": "jobs",
    }
    for flag, name in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            merged[name] = value
    return TrainConfig(**merged)


def _load_split(args):
    examples, manifest = load_dataset(args.dataset, args.manifest)
    ds = split(
        examples,
        args.test_fraction,
        args.seed if args.seed is not None else 0,
        stratify=manifest.task == CLASSIFICATION,
    )
    manifest = resolve_label_range(manifest, ds.train)
    return ds, manifest


def _build_toy_policy(manifest, template, seed: int, init_scale: float, temperature: float):
    if manifest.task == CLASSIFICATION:
        return ToyClassifierPolicy(
            manifest, seed=seed, init_scale=init_scale, temperature=temperature, template=template
        )
    return ToyRegressorPolicy(
        manifest, seed=seed, init_scale=init_scale, temperature=temperature, template=template
    )


# -- prepare -------------------------------------------------------------------


def cmd_prepare(args) -> int:
    template = _template(args)
    examples, manifest = load_dataset(args.dataset, args.manifest)
    manifest = resolve_label_range(manifest, examples)
    out = _out_dir(args, "prepare")
    seed = args.seed if args.seed is not None else 0
    path = out / "prompts.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for example_id, example in enumerate(examples):
            perm_seed = stable_seed(seed, "perm", example_id, 0)
            perms = sample_permutations(example.n_features, args.m, perm_seed)
            for k, perm in enumerate(perms.perms):
                permuted = apply_permutation(example, perm)
                prompt = build_prompt(
                    serialize_row(permuted, template),
                    manifest,
                    template,
                    example_id=example_id,
                    permutation_id=k,
                    n_features=example.n_features,
                )
                fh.write(
                    _jsonl_line(
                        {
                            "example_id": example_id,
                            "permutation_id": k,
                            "prompt": prompt.text,
                            "label": example.label,
                        }
                    )
                    + "\n"
                )
    print(f"wrote {len(examples) * args.m} prompt records to {path}")
    return EXIT_OK


# -- train ---------------------------------------------------------------------


def cmd_train(args) -> int:
    template = _template(args)
    config = _config_from_args(args)
    if args.mode == MODE_GRPO:
        print("mode=grpo: number of permutations m coerced to 1", file=sys.stderr)
    ds, manifest = _load_split(args)
    out = _out_dir(args, "train")

    endpoint = args.endpoint or os.environ.get("PRPO_ENDPOINT")
    if endpoint:
        policy = RemotePolicy(endpoint)
        policy.probe()
        print(
            "remote endpoint supplied: rollouts and metrics only, no parameter "
            "updates are sent over the wire",
            file=sys.stderr,
        )
    else:
        policy = _build_toy_policy(
            manifest, template, config.seed, args.init_scale, config.temperature
        )

    metrics_path = out / "metrics.jsonl"
    with open(metrics_path, "w", encoding="utf-8") as fh:
        params, metrics = train(
            ds,
            manifest,
            config,
            policy,
            template=template,
            metrics_sink=lambda row: fh.write(_jsonl_line(row.to_dict()) + "\n"),
        )
    if not endpoint:
        save_policy(out / "params.json", policy)
    (out / "config.json").write_text(
        json.dumps(dataclasses.asdict(config), sort_keys=True, indent=2), encoding="utf-8"
    )
    print(f"wrote {len(metrics)} metric rows to {metrics_path}")
    return EXIT_OK


# -- eval ----------------------------------------------------------------------


def _method_specs(args) -> dict[str, str]:
    methods: dict[str, str] = {}
    if args.params:
        methods["trained"] = args.params
    endpoint = args.endpoint or os.environ.get("PRPO_ENDPOINT")
    if endpoint:
        methods["remote"] = endpoint
    for item in args.method or []:
        if "=" not in item:
            raise ValueError(f"--method expects NAME=PATH_OR_URL, got {item!r}")
        name, spec = item.split("=", 1)
        methods[name] = spec
    if not methods:
        raise ValueError("eval needs --params, --endpoint, or --method")
    return methods


def cmd_eval(args) -> int:
    template = _template(args)
    ds, manifest = _load_split(args)
    out = _out_dir(args, "eval")
    dataset_id = Path(args.dataset).stem
    seed = args.seed if args.seed is not None else 0

    shots = []
    if args.shots:
        shots = [(ex, ex.label) for ex in ds.train[: args.shots]]

    reports_by_method = {}
    rows = []
    for name, spec in _method_specs(args).items():
        if spec.startswith("http://") or spec.startswith("https://"):
            policy = RemotePolicy(spec)
            policy.probe()
        else:
            policy = load_policy(spec, manifest, template)
        temperature = getattr(policy, "temperature", 1.0)
        report, _ = eval_mod.evaluate_policy(
            policy,
            ds.test,
            manifest,
            template,
            dataset_id=dataset_id,
            seed=seed,
            temperature=temperature,
            shots=shots,
        )
        reports_by_method[name] = [report]
        rows.append((name, report))

    reports_path = out / "reports.jsonl"
    with open(reports_path, "w", encoding="utf-8") as fh:
        for name, report in rows:
            record = {"method": name, **dataclasses.asdict(report)}
            fh.write(_jsonl_line(record) + "\n")

    summary_path = out / "summary.csv"
    with open(summary_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "dataset", "metric", "value", "n_examples", "malformed"])
        for name, report in rows:
            writer.writerow(
                [
                    name,
                    report.dataset_id,
                    report.metric_name,
                    f"{report.value:.6f}",
                    report.n_examples,
                    report.malformed_count,
                ]
            )

    if len(reports_by_method) >= 2:
        agg = eval_mod.aggregate(reports_by_method)
        agg_record = {
            "mean": agg.mean_by_method,
            "mean_rank": agg.mean_rank_by_method,
            "win_tie_loss": {f"{a} vs {b}": list(v) for (a, b), v in agg.win_tie_loss.items()},
        }
        (out / "aggregate.json").write_text(
            json.dumps(agg_record, sort_keys=True, indent=2), encoding="utf-8"
        )
        print(json.dumps(agg_record, sort_keys=True))
    for name, report in rows:
        print(f"{name}: {report.metric_name}={report.value:.4f} on {report.n_examples} rows")
    return EXIT_OK


# -- ablate --------------------------------------------------------------------


def cmd_ablate(args) -> int:
    template = _template(args)
    examples, manifest = load_dataset(args.dataset, args.manifest)
    manifest = resolve_label_range(manifest, examples)
    out = _out_dir(args, "ablate")
    base_seed = args.seed if args.seed is not None else 0
    results = paired_ablation(
        examples,
        manifest,
        template=template,
        seeds=range(base_seed, base_seed + args.seeds),
        steps=args.steps,
        cadence=args.cadence,
        m=args.m,
        G=args.G,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        init_scale=args.init_scale,
        jobs=args.jobs,
    )
    for result in results:
        for mode, curve in result.curves.items():
            curve_path = out / f"curve_{mode}_seed{result.seed}.jsonl"
            with open(curve_path, "w", encoding="utf-8") as fh:
                for step, mean_reward in curve:
                    fh.write(_jsonl_line({"step": step, "mean_reward": mean_reward}) + "\n")
        print(
            f"seed {result.seed}: auc_prpo={result.auc_prpo:.4f} "
            f"auc_grpo={result.auc_grpo:.4f} delta={result.delta:+.4f}"
        )

    with open(out / "ablate_summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "auc_prpo", "auc_grpo", "delta"])
        for r in results:
            writer.writerow([r.seed, f"{r.auc_prpo:.6f}", f"{r.auc_grpo:.6f}", f"{r.delta:+.6f}"])
    with open(out / "ablate_summary.jsonl", "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(
                _jsonl_line(
                    {
                        "seed": r.seed,
                        "auc_prpo": r.auc_prpo,
                        "auc_grpo": r.auc_grpo,
                        "delta": r.delta,
                    }
                )
                + "\n"
            )
    wins = sum(1 for r in results if r.delta > 0)
    print(f"prpo ahead of grpo in {wins}/{len(results)} seeds")
    return EXIT_OK


# -- argument parsing ------------------------------------------------------------


def _add_common(parser, with_split: bool = True):
    parser.add_argument("--dataset", required=True, help="CSV file with a header row")
    parser.add_argument("--manifest", required=True, help="task manifest JSON")
    parser.add_argument("--template", help="prompt template JSON (default built-in)")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", help="output directory (default runs/<cmd>-<stamp>)")
    if with_split:
        parser.add_argument("--test-fraction", type=float, default=0.2)


def _add_train_flags(parser):
    parser.add_argument("--config", help="JSON file with training config values")
    parser.add_argument("--mode", choices=[MODE_PRPO, MODE_GRPO], default=None)
    parser.add_argument("--m", type=int, default=None, help="permutations per example")
    parser.add_argument("--G", type=int, default=None, help="rollouts per prompt")
    parser.add_argument("--alpha", type=float, default=None)
    parser.add_argument("--gamma", type=float, default=None)
    parser.add_argument("--beta-kl", dest="beta_kl", type=float, default=None)
    parser.add_argument("--clip-eps", dest="clip_eps", type=float, default=None)
    parser.add_argument("--lr", type=float, default=None, help="learning rate (toy: try 0.5)")
    parser.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    parser.add_argument("--mini-batch", dest="mini_batch", type=int, default=None)
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--max-steps", dest="max_steps", type=int, default=None)
    parser.add_argument("--sigma-floor", dest="sigma_floor", type=float, default=None)
    parser.add_argument("--temperature", type=float, default=None)
    parser.add_argument("--init-scale", dest="init_scale", type=float, default=0.0)
    parser.add_argument("--endpoint", help="rollout server URL (or PRPO_ENDPOINT)")
    parser.add_argument("--jobs", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prpo",
        description="permutation-relative policy optimization for tabular prediction",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="materialize permuted prompts as JSON lines")
    _add_common(p, with_split=False)
    p.add_argument("--m", type=int, default=4, help="permutations per example")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="run the training loop")
    _add_common(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score saved or remote policies on the test split")
    _add_common(p)
    p.add_argument("--params", help="params.json written by train")
    p.add_argument("--endpoint", help="rollout server URL (or PRPO_ENDPOINT)")
    p.add_argument("--method", action="append", help="NAME=PATH_OR_URL, repeatable")
    p.add_argument("--shots", type=int, default=0, help="in-context examples per prompt")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="paired two-level vs single-group comparison")
    _add_common(p, with_split=False)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--cadence", type=int, default=50)
    p.add_argument("--m", type=int, default=4)
    p.add_argument("--G", type=int, default=5)
    p.add_argument("--lr", type=float, default=4.0)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=16)
    p.add_argument("--init-scale", dest="init_scale", type=float, default=1.5)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NonFiniteLossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONFINITE
    except RemoteUnavailableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REMOTE
    except (PrpoError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    raise SystemExit(main())
