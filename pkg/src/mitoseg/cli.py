"""Batch command-line front end.

Machine-readable JSON goes to stdout, human summaries and diagnostics to
stderr.  Exit codes: 0 success, 1 internal error, 2 usage/validation error.
Defaults follow the published pipeline constants and can be overridden by a
JSON config file (--config); explicit flags win over the config file.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from typing import Optional, Tuple

from .denoise import load_kernel_field, load_noise_mask, restore_slices
from .errors import InvalidArgumentError, MitosegError
from .labeling import instance_table, label_components, label_components_chunked
from .loss import foreground_ratio, total_loss, wbce
from .metrics import SizeBins, evaluate_instances, semantic_metrics
from .seedmap import SeedParams, make_seed_map
from .volume import ChunkGrid, Volume, load_volume, save_volume


@dataclass
class PipelineConfig:
    t1: float = 0.9
    t2: float = 0.8
    connectivity: int = 6
    min_size: int = 0
    iou_threshold: float = 0.75
    small_max: int = 5000
    med_max: int = 15000
    chunk: Optional[Tuple[int, int, int]] = None
    workers: int = 1


def _parse_chunk(text: str) -> Tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise InvalidArgumentError(f"--chunk expects 'd,h,w', got {text!r}")
    try:
        d, h, w = (int(p) for p in parts)
    except ValueError:
        raise InvalidArgumentError(f"--chunk expects integers, got {text!r}") from None
    return d, h, w


def _resolve_config(args) -> PipelineConfig:
    cfg = PipelineConfig()
    file_values = {}
    if getattr(args, "config", None):
        with open(args.config) as f:
            file_values = json.load(f)
    for name in ("t1", "t2", "connectivity", "min_size", "iou_threshold",
                 "small_max", "med_max", "workers"):
        flag = getattr(args, name, None)
        if flag is not None:
            setattr(cfg, name, flag)
        elif name in file_values:
            setattr(cfg, name, file_values[name])
    chunk = getattr(args, "chunk", None)
    if chunk is not None:
        cfg.chunk = _parse_chunk(chunk)
    elif "chunk" in file_values:
        cfg.chunk = tuple(file_values["chunk"])
    return cfg


def _label(seed: Volume, cfg: PipelineConfig) -> Volume:
    if cfg.chunk is None:
        return label_components(seed, cfg.connectivity, cfg.min_size)
    chunk = tuple(min(c, d) for c, d in zip(cfg.chunk, seed.dims))
    if chunk != cfg.chunk:
        print(f"note: chunk clamped to volume dims: {chunk}", file=sys.stderr)
    grid = ChunkGrid(seed.dims, chunk, halo=(1, 1, 1))
    return label_components_chunked(seed, grid, cfg.connectivity, cfg.min_size,
                                    workers=cfg.workers)


def _emit_labels(labels: Volume, out_path, cfg: PipelineConfig) -> None:
    save_volume(labels, out_path)
    table = instance_table(labels, bins=SizeBins(cfg.small_max, cfg.med_max))
    bins = {name: int((table.categories == name).sum()) for name in ("small", "med", "large")}
    print(json.dumps({"instances": len(table), "bins": bins}))
    print(f"{len(table)} instances -> {out_path}", file=sys.stderr)


def cmd_segment(args) -> int:
    cfg = _resolve_config(args)
    mask = load_volume(args.mask, expect_probability=True)
    boundary = load_volume(args.boundary, expect_probability=True)
    seed = make_seed_map(mask, boundary, SeedParams(cfg.t1, cfg.t2))
    if args.seed_out:
        save_volume(seed, args.seed_out)
    labels = _label(seed, cfg)
    _emit_labels(labels, args.out, cfg)
    return 0


def cmd_seedmap(args) -> int:
    cfg = _resolve_config(args)
    mask = load_volume(args.mask, expect_probability=True)
    boundary = load_volume(args.boundary, expect_probability=True)
    seed = make_seed_map(mask, boundary, SeedParams(cfg.t1, cfg.t2))
    save_volume(seed, args.out)
    print(json.dumps({"seeds": int(seed.data.sum(dtype="int64"))}))
    return 0


def cmd_label(args) -> int:
    cfg = _resolve_config(args)
    seed = load_volume(args.seed)
    labels = _label(seed, cfg)
    _emit_labels(labels, args.out, cfg)
    return 0


def cmd_evaluate(args) -> int:
    cfg = _resolve_config(args)
    pred = load_volume(args.pred)
    gt = load_volume(args.gt)
    report = evaluate_instances(pred, gt, iou_threshold=cfg.iou_threshold,
                                bins=SizeBins(cfg.small_max, cfg.med_max))
    if args.report:
        with open(args.report, "w") as f:
            json.dump(report.to_dict(), f, indent=2)
    print(json.dumps({"ap": report.bins["all"].ap}))
    return 0


def cmd_semantic_eval(args) -> int:
    pred = load_volume(args.pred)
    gt = load_volume(args.gt)
    jaccard, dsc = semantic_metrics(pred, gt)
    print(json.dumps({"jaccard": jaccard, "dsc": dsc}))
    return 0


def cmd_loss(args) -> int:
    x = load_volume(args.pred, expect_probability=True)
    y = load_volume(args.target)
    dual = args.boundary_pred is not None or args.boundary_target is not None
    if dual:
        if args.boundary_pred is None or args.boundary_target is None:
            raise InvalidArgumentError(
                "--boundary-pred and --boundary-target must be given together"
            )
        xb = load_volume(args.boundary_pred, expect_probability=True)
        yb = load_volume(args.boundary_target)
        lm, _ = wbce(x, y)
        lb, _ = wbce(xb, yb)
        print(json.dumps({"wbce_mask": lm, "wbce_boundary": lb, "total": total_loss(x, y, xb, yb)}))
    else:
        loss, grad = wbce(x, y)
        if args.grad_out:
            save_volume(grad, args.grad_out)
        print(json.dumps({"wbce": loss, "wf": foreground_ratio(y)}))
    return 0


def cmd_denoise(args) -> int:
    vol = load_volume(args.volume)
    masks, fields = {}, {}
    for spec in args.restore or []:
        parts = spec.split(":")
        if len(parts) != 2:
            raise InvalidArgumentError(f"--restore expects 'kernels.emv:mask.emv', got {spec!r}")
        kf, z = load_kernel_field(parts[0])
        masks[z] = load_noise_mask(parts[1])
        fields[z] = kf
    out = restore_slices(vol, masks, fields)
    save_volume(out, args.out)
    print(json.dumps({"restored_slices": sorted(masks)}))
    return 0


def _add_common(p: argparse.ArgumentParser, *names: str) -> None:
    if "config" in names:
        p.add_argument("--config", help="JSON config file; flags override it")
    if "thresholds" in names:
        p.add_argument("--t1", type=float, help="semantic-mask threshold (default 0.9)")
        p.add_argument("--t2", type=float, help="boundary threshold (default 0.8)")
    if "labeling" in names:
        p.add_argument("--connectivity", type=int, help="6 or 26 (default 6)")
        p.add_argument("--min-size", type=int, dest="min_size",
                       help="drop components smaller than this many voxels")
        p.add_argument("--chunk", help="chunk dims 'd,h,w' for chunked labeling")
        p.add_argument("--workers", type=int, help="worker threads (default 1)")
    if "bins" in names:
        p.add_argument("--small-max", type=int, dest="small_max",
                       help="small/med size boundary (default 5000)")
        p.add_argument("--med-max", type=int, dest="med_max",
                       help="med/large size boundary (default 15000)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mitoseg",
        description="Mitochondria instance post-processing and evaluation for EM volumes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="probability volumes -> labeled instances")
    p.add_argument("--mask", required=True, help="semantic mask EMV1 (f32)")
    p.add_argument("--boundary", required=True, help="instance boundary EMV1 (f32)")
    p.add_argument("--out", required=True, help="output label volume")
    p.add_argument("--seed-out", dest="seed_out", help="also write the binary seed map")
    _add_common(p, "config", "thresholds", "labeling", "bins")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("seedmap", help="probability volumes -> binary seed map")
    p.add_argument("--mask", required=True)
    p.add_argument("--boundary", required=True)
    p.add_argument("--out", required=True)
    _add_common(p, "config", "thresholds")
    p.set_defaults(func=cmd_seedmap)

    p = sub.add_parser("label", help="binary seed map -> labeled instances")
    p.add_argument("--seed", required=True, help="seed map EMV1 (u8, values 0/1)")
    p.add_argument("--out", required=True)
    _add_common(p, "config", "labeling", "bins")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("evaluate", help="AP at an IoU threshold with size bins")
    p.add_argument("--pred", required=True, help="predicted label volume")
    p.add_argument("--gt", required=True, help="ground-truth label volume")
    p.add_argument("--report", help="write the full JSON match report here")
    p.add_argument("--iou", type=float, dest="iou_threshold",
                   help="IoU threshold in (0.5, 1] (default 0.75)")
    _add_common(p, "config", "bins")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("semantic-eval", help="jaccard and DSC of two binary masks")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.set_defaults(func=cmd_semantic_eval)

    p = sub.add_parser("loss", help="weighted BCE of prediction/target pairs")
    p.add_argument("--pred", required=True, help="predicted probabilities (f32)")
    p.add_argument("--target", required=True, help="binary target")
    p.add_argument("--boundary-pred", dest="boundary_pred",
                   help="second pair: boundary prediction")
    p.add_argument("--boundary-target", dest="boundary_target",
                   help="second pair: boundary target")
    p.add_argument("--grad-out", dest="grad_out",
                   help="write the gradient volume (single-pair mode)")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("denoise", help="restore hand-marked noisy slices")
    p.add_argument("--volume", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--restore", action="append", metavar="KERNELS:MASK",
                   help="kernel-field and noise-mask EMV1 pair; repeatable")
    p.set_defaults(func=cmd_denoise)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MitosegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        return 1
    except Exception as exc:  # pragma: no cover - internal failures
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
