"""Command-line entry point: score, eval, overlap, train-toy.

Machine output goes to files (written atomically); stdout carries only the
human-readable summary. Exit codes: 0 success, 2 input or contract error,
3 segmenter unavailable.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import dataset as ds
from .errors import ParseError, SegmenterUnavailable, SegRewardError, UnknownImage
from .grpo import GrpoConfig, TRACE_FIELDS, evaluate_no_target, train_toy
from .metrics import build_report
from .parsing import parse_response
from .pipeline import evaluate_predictions
from .rewards import RewardConfig, distance_reward, sam_loop_reward
from .segmenter import Endpoint, RemoteSegmenter, SceneStoreSegmenter

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SEGMENTER = 3


def _write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_config_overrides(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    overrides = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ParseError(f"{path}:{lineno}: expected key=value, got {stripped!r}")
            key, value = stripped.split("=", 1)
            overrides[key.strip()] = value.strip()
    return overrides


def _coerce(value: str, target_type):
    if target_type is bool:
        lowered = value.lower()
        if lowered in ("1", "true", "yes"):
            return True
        if lowered in ("0", "false", "no"):
            return False
        raise ParseError(f"cannot parse boolean from {value!r}")
    return target_type(value)


def _apply_overrides(overrides: dict[str, str]) -> tuple[RewardConfig, GrpoConfig]:
    reward_fields = {f.name: f.type for f in dataclasses.fields(RewardConfig)}
    grpo_fields = {f.name: f.type for f in dataclasses.fields(GrpoConfig)}
    reward_kwargs = {}
    grpo_kwargs = {}
    types = {"float": float, "bool": bool, "int": int}
    for key, value in overrides.items():
        if key in reward_fields:
            reward_kwargs[key] = _coerce(value, types[reward_fields[key]])
        elif key in grpo_fields:
            grpo_kwargs[key] = _coerce(value, types[grpo_fields[key]])
        else:
            raise ParseError(f"unknown config key {key!r}")
    return RewardConfig(**reward_kwargs), GrpoConfig(**grpo_kwargs)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _make_segmenter(args, records):
    if args.segmenter == "stub":
        return SceneStoreSegmenter(ds.build_scene_store(records))
    if not args.endpoint:
        raise ParseError("--segmenter remote needs --endpoint")
    return RemoteSegmenter(Endpoint(base_url=args.endpoint))


# ---------------------------------------------------------------------------
# subcommands


def _cmd_score(args) -> int:
    reward_cfg, _ = _apply_overrides(_load_config_overrides(args.config))
    records = ds.load_annotations(args.annotations)
    by_id = {r.sample_id: r for r in records}

    lines = []
    with open(args.rollouts, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                lines.append({"group_id": str(obj["group_id"]), "rollout": str(obj["rollout"]),
                              "gt_ref": str(obj["gt_ref"])})
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(f"{args.rollouts}:{lineno}: {exc}") from exc

    for entry in lines:
        if entry["gt_ref"] not in by_id:
            raise ParseError(f"rollout references unknown sample {entry['gt_ref']!r}")

    with_masks = args.mode == "sam_loop"
    gts = {sid: ds.to_ground_truth(rec, with_masks=with_masks) for sid, rec in by_id.items()}
    seg = _make_segmenter(args, records) if args.mode == "sam_loop" else None

    def score(entry):
        parsed = parse_response(entry["rollout"])
        gt = gts[entry["gt_ref"]]
        if args.mode == "distance":
            return distance_reward(parsed, gt, reward_cfg)
        return sam_loop_reward(parsed, gt, seg, reward_cfg)

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            breakdowns = list(pool.map(score, lines))
    else:
        breakdowns = [score(e) for e in lines]

    out_path = args.out or args.rollouts + ".scored.jsonl"
    out_lines = []
    for entry, b in zip(lines, breakdowns):
        merged = dict(entry)
        merged["breakdown"] = {"total": b.total, "components": b.components, "faults": list(b.faults)}
        out_lines.append(json.dumps(merged, sort_keys=True))
    _write_atomic(out_path, "\n".join(out_lines) + ("\n" if out_lines else ""))

    n = max(1, len(breakdowns))
    mean_total = sum(b.total for b in breakdowns) / n
    print(f"scored {len(breakdowns)} rollouts in {args.mode} mode -> {out_path}")
    print(f"mean total reward: {mean_total:.6f}")
    for name in ("format", "think", "bbox", "point", "repetition", "sam_iou", "neg_validity", "no_target"):
        mean_c = sum(b.components[name] for b in breakdowns) / n
        print(f"  mean {name}: {mean_c:.6f}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    records = ds.load_annotations(args.annotations)
    predictions = ds.load_predictions(args.predictions)
    seg = _make_segmenter(args, records)
    batch = evaluate_predictions(records, predictions, seg, prompt_mode=args.prompt_mode, jobs=args.jobs)
    report = build_report(batch.evals, box_preds=batch.box_preds or None, box_gts=batch.box_gts or None)

    report_path = Path(args.report)
    _write_atomic(report_path, report.to_json())
    tsv_path = report_path.with_suffix(".tsv") if report_path.suffix else Path(str(report_path) + ".tsv")
    _write_atomic(tsv_path, report.to_tsv())
    if args.evals_out:
        _write_atomic(Path(args.evals_out), ds.evaluations_to_jsonl(batch.evals))

    print(f"evaluated {len(batch.evals)} samples with prompt mode {args.prompt_mode} -> {report_path}")
    print(f"ciou={report.ciou:.4f} miou={report.miou:.4f} p50={report.p_at[0.5]:.4f}")
    if report.no_target_acc is not None:
        print(f"no_target_acc={report.no_target_acc:.4f}")
    return EXIT_OK


def _cmd_overlap(args) -> int:
    train_ids = ds.load_train_ids(args.train_ids)
    records = ds.load_annotations(args.annotations)
    evals = ds.load_evaluations(args.evals)
    train_expressions = None
    if args.train_expressions:
        with open(args.train_expressions, "r", encoding="utf-8") as fh:
            train_expressions = {line.rstrip("\n") for line in fh if line.strip()}
    report = ds.overlap_analysis(train_ids, records, evals, train_expressions=train_expressions)
    _write_atomic(args.report, _dump_json(report.to_json_dict()))
    print(f"overlap report -> {args.report}")
    print(
        f"images: {report.n_overlap_images}/{report.n_val_images} overlap ({report.pct_overlap:.1f}%), "
        f"refs: clean {report.clean_refs} / overlap {report.overlap_refs}"
    )
    return EXIT_OK


def _cmd_train_toy(args) -> int:
    reward_cfg, grpo_cfg = _apply_overrides(_load_config_overrides(args.config))
    if args.seed is not None:
        grpo_cfg = dataclasses.replace(grpo_cfg, seed=args.seed)
    policy, trace = train_toy(grpo_cfg, steps=args.steps, mode=args.mode, reward_cfg=reward_cfg)

    rows = [",".join(TRACE_FIELDS)]
    for row in trace:
        rows.append(",".join(repr(row[f]) if isinstance(row[f], float) else str(row[f]) for f in TRACE_FIELDS))
    _write_atomic(args.trace, "\n".join(rows) + "\n")

    heldout_rng = np.random.default_rng(grpo_cfg.seed + 1_000_003)
    acc, fnr = evaluate_no_target(policy, heldout_rng)
    print(f"trained {args.steps} steps in {args.mode} mode -> {args.trace}")
    print(f"final mean reward: {trace[-1]['mean_reward']:.6f} (step 0: {trace[0]['mean_reward']:.6f})")
    print(f"held-out no_target accuracy: {acc:.4f}, false-negative rate: {fnr:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="segreward", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value overrides for reward/trainer config")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("score", help="score a rollout batch against annotations")
    p.add_argument("--rollouts", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--mode", choices=("distance", "sam_loop"), default="distance")
    p.add_argument("--segmenter", choices=("stub", "remote"), default="stub")
    p.add_argument("--endpoint")
    p.add_argument("--out", help="scored JSONL path (default: <rollouts>.scored.jsonl)")
    common(p)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("eval", help="run the metric suite over a prediction file")
    p.add_argument("--predictions", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--segmenter", choices=("stub", "remote"), default="stub")
    p.add_argument("--endpoint")
    p.add_argument("--prompt-mode", choices=("box_only", "box_1pt", "box_2pt"), default="box_2pt")
    p.add_argument("--report", required=True)
    p.add_argument("--evals-out", help="per-sample evaluation JSONL (input for overlap)")
    common(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("overlap", help="train/val overlap analysis")
    p.add_argument("--train-ids", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--evals", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--train-expressions", help="optional file of train expressions, one per line")
    common(p)
    p.set_defaults(func=_cmd_overlap)

    p = sub.add_parser("train-toy", help="desk-scale GRPO demonstration run")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--mode", choices=("distance", "sam_loop"), default="distance")
    p.add_argument("--trace", required=True)
    common(p)
    p.set_defaults(func=_cmd_train_toy)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SegmenterUnavailable, UnknownImage) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SEGMENTER
    except (SegRewardError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
