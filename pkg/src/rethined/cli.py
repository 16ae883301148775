"""Command-line interface: inpaint, fuse, genmask, metrics and bench."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench as bench_mod
from .image_io import read_image, read_mask, write_image, write_mask
from .masks import MaskSpec, generate_mask, mask_coverage
from .metrics import l1, psnr, ssim
from .pipeline import (
    PipelineConfig,
    config_for_model,
    fuse_pipeline_model,
    load_model,
    random_model,
    run_pipeline,
    save_model,
)
from .spectral import focal_frequency_loss_padded


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lr", type=int, default=256, help="LR working size (default 256)")
    p.add_argument("--patch", type=int, default=8, help="patch size P (default 8)")
    p.add_argument("--dk", type=int, default=64, help="embedding dimension d_k (default 64)")
    p.add_argument("--weights", type=Path, default=None, help="RTHD weight container")
    p.add_argument("--seed", type=int, default=7,
                   help="seed for the random model when no weights are given")


def _build(args, composite: bool = True):
    if args.weights is not None:
        model = load_model(args.weights)
        config = config_for_model(model, lr_size=args.lr, composite=composite,
                                  seed=args.seed)
        if config.patch_size != args.patch or config.d_k != args.dk:
            # weight shapes win over flags; keep the run honest about it
            print(json.dumps({"note": "patch/dk taken from weights",
                              "patch": config.patch_size, "dk": config.d_k}),
                  file=sys.stderr)
        return config, model
    config = PipelineConfig(lr_size=args.lr, patch_size=args.patch, d_k=args.dk,
                            composite=composite, seed=args.seed)
    return config, random_model(config)


def _cmd_inpaint(args) -> int:
    config, model = _build(args, composite=not args.no_composite)
    image = read_image(args.image)
    mask = read_mask(args.mask)
    masked = image * (1.0 - mask)
    out = run_pipeline(config, model, masked, mask)
    write_image(out, args.out)
    print(json.dumps({
        "out": str(args.out),
        "resolution": [int(s) for s in image.shape[1:]],
        "lr_size": config.lr_size,
        "patch_size": config.patch_size,
        "d_k": config.d_k,
        "n_patches": config.n_patches,
        "composite": config.composite,
        "renormalized_attention": True,
        "random_weights": args.weights is None,
    }))
    return 0


def _cmd_fuse(args) -> int:
    model = load_model(args.input)
    save_model(fuse_pipeline_model(model), args.out)
    print(json.dumps({"out": str(args.out), "fused": True}))
    return 0


def _cmd_genmask(args) -> int:
    mask = generate_mask(MaskSpec(seed=args.seed), args.h, args.w)
    write_mask(mask, args.out)
    print(json.dumps({"out": str(args.out), "coverage": round(mask_coverage(mask), 4)}))
    return 0


def _cmd_metrics(args) -> int:
    a = read_image(args.a)
    b = read_image(args.b)
    ffl, padded = focal_frequency_loss_padded(a, b)
    result = {
        "l1": l1(a, b),
        "ssim": ssim(a, b),
        "psnr": "inf" if psnr(a, b) == float("inf") else psnr(a, b),
        "ffl": ffl,
    }
    if padded is not None:
        result["ffl_padding"] = [int(x) for x in padded]
    print(json.dumps(result))
    return 0


def _cmd_bench(args) -> int:
    config, model = _build(args)
    resolutions = [int(tok) for tok in args.res.split(",") if tok]
    report = bench_mod.run_bench(config, model, resolutions,
                                 runs=args.runs, warmup=args.warmup,
                                 hr_runs=args.hr_runs, seed=args.seed)
    csv_text = bench_mod.report_to_csv(report)
    args.report.write_text(csv_text)
    md_path = args.report.with_suffix(".md")
    md_path.write_text(bench_mod.report_to_markdown(report))
    print(json.dumps({"csv": str(args.report), "markdown": str(md_path),
                      "resolutions": resolutions}))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rethined",
        description="High-resolution inpainting: coarse completion, masked patch "
                    "attention, attention-reusing high-frequency upscaling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inpaint", help="inpaint a masked PPM image")
    p.add_argument("--image", type=Path, required=True, help="input P6 PPM")
    p.add_argument("--mask", type=Path, required=True, help="input P5 PGM (255 = corrupted)")
    p.add_argument("--out", type=Path, required=True, help="output P6 PPM")
    _add_config_flags(p)
    p.add_argument("--no-composite", action="store_true",
                   help="skip overwriting known pixels with the originals")
    p.set_defaults(fn=_cmd_inpaint)

    p = sub.add_parser("fuse", help="fuse conv+BN+skip branches for inference")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(fn=_cmd_fuse)

    p = sub.add_parser("genmask", help="generate a free-form mask (30-50% coverage)")
    p.add_argument("--h", type=int, required=True)
    p.add_argument("--w", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(fn=_cmd_genmask)

    p = sub.add_parser("metrics", help="print L1/SSIM/PSNR/FFL between two PPMs as JSON")
    p.add_argument("--a", type=Path, required=True)
    p.add_argument("--b", type=Path, required=True)
    p.set_defaults(fn=_cmd_metrics)

    p = sub.add_parser("bench", help="latency benchmark over a resolution sweep")
    p.add_argument("--res", type=str, required=True, help="comma-separated resolutions")
    p.add_argument("--report", type=Path, required=True, help="CSV output path")
    p.add_argument("--runs", type=int, default=bench_mod.DEFAULT_RUNS)
    p.add_argument("--warmup", type=int, default=bench_mod.DEFAULT_WARMUP)
    p.add_argument("--hr-runs", type=int, default=None,
                   help="override run count for HR-heavy stages")
    _add_config_flags(p)
    p.set_defaults(fn=_cmd_bench)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
