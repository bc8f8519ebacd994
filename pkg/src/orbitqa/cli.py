"""Command-line interface: rating pipeline, frame sampling, training,
evaluation, benchmarking, significance, figures, and the rating service."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import benchmark as bench
from . import plots
from .data import (
    DIMENSIONS,
    load_manifest,
    load_mos,
    load_ratings,
    load_scores,
    load_splits,
    make_splits,
    save_mos,
    save_ratings,
    save_scores,
    save_splits,
)
from .losses import LossConfig
from .metrics import evaluate
from .model import EncoderSpec, ModelConfig, TINY
from .projection import PreprocessSpec, load_clip, sample_frames, write_clip_frames
from .subjective import process_ratings
from .synthetic import make_synthetic_dataset, scripted_ratings
from .training import ClipStore, TrainConfig, ablation_grid, predict_scores, train


def _read_flat_toml(path: str | Path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def config_from_mapping(cfg: dict) -> TrainConfig:
    """Build a TrainConfig from the flat key/value train-config document."""
    preset = cfg.get("preset", TINY)
    if preset == TINY:
        shape = EncoderSpec("shape", TINY, int(cfg.get("shape_dim", 64)))
        tex_f = EncoderSpec("texture_front", TINY, int(cfg.get("texture_dim", 48)))
        tex_b = EncoderSpec("texture_back", TINY, int(cfg.get("texture_dim", 48)))
        al_i = EncoderSpec("align_image", TINY, int(cfg.get("align_dim", 64)), frozen=True)
        al_t = EncoderSpec("align_text", TINY, int(cfg.get("align_dim", 64)), frozen=True)
        mean, std = (0.5, 0.5, 0.5), (0.5, 0.5, 0.5)
    elif preset == "paper":
        shape = EncoderSpec("shape", "video-transformer-small", int(cfg.get("shape_dim", 768)))
        tex_f = EncoderSpec("texture_front", "image-transformer-small", int(cfg.get("texture_dim", 768)))
        tex_b = EncoderSpec("texture_back", "image-transformer-small", int(cfg.get("texture_dim", 768)))
        al_i = EncoderSpec("align_image", "contrastive-pair", 512, frozen=True)
        al_t = EncoderSpec("align_text", "contrastive-pair", 512, frozen=True)
        mean, std = (0.485, 0.456, 0.406), (0.229, 0.224, 0.225)
    else:
        raise SystemExit(f"unknown preset {preset!r} (expected {TINY!r} or 'paper')")
    resolution = (int(cfg.get("input_width", 224)), int(cfg.get("input_height", 224)))
    model = ModelConfig(
        shape=shape, texture_front=tex_f, texture_back=tex_b,
        align_image=al_i, align_text=al_t,
        align_fused_dim=int(cfg.get("align_fused_dim", al_i.output_dim)),
        hidden=tuple(cfg.get("hidden", (1024, 128))),
        use_shape=bool(cfg.get("use_shape", True)),
        use_texture=bool(cfg.get("use_texture", True)),
        use_align=bool(cfg.get("use_align", True)),
        expected_frames=int(cfg.get("n_segments", 12)),
        preprocess=PreprocessSpec(size=resolution, mean=mean, std=std),
    )
    return TrainConfig(
        lr=float(cfg.get("lr", 1e-4)),
        batch_size=int(cfg.get("batch_size", 4)),
        epochs=int(cfg.get("epochs", 50)),
        seed=int(cfg.get("seed", 0)),
        loss=LossConfig(
            lam=float(cfg.get("lambda", 0.3)),
            rank_variant=cfg.get("rank_variant", "pairwise_sign_hinge"),
        ),
        model=model,
        input_resolution=resolution,
        n_segments=int(cfg.get("n_segments", 12)),
        max_steps=int(cfg["max_steps"]) if cfg.get("max_steps") else None,
    )


def cmd_process_ratings(args) -> int:
    ratings = load_ratings(args.ratings)
    if args.manifest:
        manifest_ids = {a.asset_id for a in load_manifest(args.manifest)}
        unknown = sorted({r.asset_id for r in ratings} - manifest_ids)
        if unknown:
            raise SystemExit(f"ratings reference assets missing from the manifest: {unknown[:10]}")
    mos, report = process_ratings(
        ratings,
        subject_reject_rate=args.subject_reject_rate,
    )
    save_mos(mos, args.out)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump({
                "rejected_subjects": report.rejected_subjects,
                "rating_discard_fraction": report.rating_discard_fraction,
                "subject_discard_fraction": report.subject_discard_fraction,
                "n_flagged": len(report.flagged),
                "flagged": [
                    {"subject_id": s, "asset_id": a, "dimension": DIMENSIONS[d]}
                    for s, a, d in report.flagged
                ],
                "distribution_class": [
                    {"asset_id": a, "dimension": DIMENSIONS[d], "class": c}
                    for (a, d), c in sorted(report.distribution_class.items())
                ],
            }, fh, indent=2)
    print(f"wrote {len(mos)} MOS records to {args.out} "
          f"({len(report.flagged)} scores flagged, {len(report.rejected_subjects)} subjects rejected)")
    return 0


def cmd_sample_frames(args) -> int:
    manifest = load_manifest(args.manifest)
    base_dir = Path(args.manifest).parent
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    index = {}
    for rec in manifest:
        clip = load_clip(rec, base_dir=base_dir)
        sample = sample_frames(clip, args.mode, n_segments=args.n_segments, seed=args.seed)
        asset_dir = out_root / rec.asset_id
        asset_dir.mkdir(exist_ok=True)
        selected = clip.frames[list(sample.indices)]
        sub = replace(clip, frames=selected)
        write_clip_frames(sub, asset_dir)
        index[rec.asset_id] = list(sample.indices)
    with open(out_root / "frame_index.json", "w", encoding="utf-8") as fh:
        json.dump({"mode": args.mode, "n_segments": args.n_segments, "seed": args.seed,
                   "indices": index}, fh, indent=2)
    print(f"sampled {args.n_segments} frames per asset for {len(manifest)} assets into {out_root}")
    return 0


def cmd_make_splits(args) -> int:
    manifest = load_manifest(args.manifest)
    splits = make_splits(manifest, args.n_splits, args.seed, group_by_prompt=args.group_by_prompt)
    save_splits(splits, args.out)
    print(f"wrote {len(splits)} splits (test size {len(splits[0].test_ids)}) to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    preds = load_scores(args.pred)
    mos = load_mos(args.mos)
    if args.subset:
        common = {p.asset_id for p in preds} & {m.asset_id for m in mos}
        preds = [p for p in preds if p.asset_id in common]
        mos = [m for m in mos if m.asset_id in common]
    result = evaluate(preds, mos)
    rows = [(dim, r.srcc, r.krcc, r.plcc) for dim, r in result.items()]
    print(f"{'dimension':<16} {'SRCC':>8} {'KRCC':>8} {'PLCC':>8}")
    for dim, s, k, p in rows:
        print(f"{dim:<16} {s:>8.4f} {k:>8.4f} {p:>8.4f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump({dim: {"srcc": r.srcc, "krcc": r.krcc, "plcc": r.plcc}
                       for dim, r in result.items()}, fh, indent=2)
    return 0


def _load_or_make_splits(args, manifest):
    if getattr(args, "splits_file", None):
        return load_splits(args.splits_file)
    return make_splits(manifest, args.splits, args.seed, group_by_prompt=getattr(args, "group_by_prompt", False))


def _write_benchmark_outputs(results, args) -> None:
    bench.save_report(results, args.out)
    csv_path = Path(args.out).with_suffix(".csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "split_seed", "dimension", "srcc", "krcc", "plcc"])
        for result in results:
            for ev in result.splits:
                for dim in DIMENSIONS:
                    writer.writerow([result.method, ev.seed, dim,
                                     f"{ev.srcc[dim]:.6f}", f"{ev.krcc[dim]:.6f}", f"{ev.plcc[dim]:.6f}"])
            for dim in DIMENSIONS:
                writer.writerow([result.method, "mean", dim,
                                 f"{result.mean('srcc', dim):.6f}",
                                 f"{result.mean('krcc', dim):.6f}",
                                 f"{result.mean('plcc', dim):.6f}"])
    if args.figures:
        plots.plot_benchmark_summary(results, args.figures)
    for result in results:
        line = ", ".join(f"{dim} SRCC {result.mean('srcc', dim):.4f}" for dim in DIMENSIONS)
        print(f"{result.method}: {line}")
    print(f"report: {args.out} (+ {csv_path})")


def cmd_benchmark(args) -> int:
    manifest = load_manifest(args.manifest)
    mos = load_mos(args.mos)
    splits = _load_or_make_splits(args, manifest)
    methods_dir = Path(args.methods)
    score_files = sorted(methods_dir.glob("*.jsonl"))
    if not score_files:
        raise SystemExit(f"no .jsonl score files in {methods_dir}")
    results = [
        bench.run_benchmark(str(path), manifest, mos, splits, name=path.stem)
        for path in score_files
    ]
    _write_benchmark_outputs(results, args)
    return 0


def cmd_significance(args) -> int:
    results = bench.load_report(args.report)
    if len(results) < 2:
        raise SystemExit("significance needs a report with at least 2 methods")
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dimension", "row_method", "col_method", "f_statistic", "verdict"])
        for dim in DIMENSIONS:
            residuals = {r.method: r.residuals[dim] for r in results}
            matrix = bench.significance_matrix(residuals, confidence=args.confidence)
            for i, row in enumerate(matrix.methods):
                for j, col in enumerate(matrix.methods):
                    writer.writerow([dim, row, col,
                                     f"{matrix.f_statistics[i][j]:.6f}", matrix.verdicts[i][j]])
            if args.figures:
                fig_dir = Path(args.figures)
                fig_dir.mkdir(parents=True, exist_ok=True)
                plots.plot_significance(matrix, fig_dir / f"significance_{dim}.png",
                                        title=f"{dim} (95% F-test)")
    print(f"wrote pairwise verdicts to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = config_from_mapping(_read_flat_toml(args.config))
    manifest = load_manifest(args.manifest)
    mos = load_mos(args.mos)
    splits = load_splits(args.split)
    split = splits[args.split_index]
    store = ClipStore(manifest, base_dir=Path(args.manifest).parent)
    result = train(cfg, split, manifest, mos, store,
                   checkpoint_path=args.out, log_path=args.log)
    print(f"trained {result.steps} steps in {result.wall_seconds:.1f}s, final loss {result.final_loss:.4f}")
    if args.scores_out:
        assets_by_id = {a.asset_id: a for a in manifest}
        test_assets = [assets_by_id[a] for a in split.test_ids]
        preds = predict_scores(result.model, test_assets, store, cfg)
        save_scores(preds, args.scores_out)
        print(f"wrote test-set scores to {args.scores_out}")
    return 0


def cmd_ablate(args) -> int:
    cfg = config_from_mapping(_read_flat_toml(args.config))
    manifest = load_manifest(args.manifest)
    mos = load_mos(args.mos)
    splits = _load_or_make_splits(args, manifest)
    grid = [g.strip() for g in args.grid.split(",") if g.strip()]
    store = ClipStore(manifest, base_dir=Path(args.manifest).parent)
    results, errors = ablation_grid(cfg, grid, splits, manifest, mos, store)
    _write_benchmark_outputs(list(results.values()), args)
    for key, message in errors.items():
        print(f"config {key} failed: {message}", file=sys.stderr)
    return 0 if not errors else 1


def cmd_plot(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    made = []
    if args.mos:
        mos = load_mos(args.mos)
        made.extend(plots.plot_mos_histograms(mos, out_dir))
        if args.manifest:
            manifest = load_manifest(args.manifest)
            made.append(plots.plot_generator_bars(mos, manifest, out_dir))
            made.append(plots.plot_prompt_length_bars(mos, manifest, out_dir))
    if args.report:
        made.append(plots.plot_benchmark_summary(bench.load_report(args.report), out_dir))
    if not made:
        raise SystemExit("nothing to plot: pass --mos and/or --report")
    for p in made:
        print(f"wrote {p}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    manifest = load_manifest(args.manifest)
    app = create_app(
        manifest,
        store_path=args.store,
        seed=args.seed,
        roster=args.subjects.split(",") if args.subjects else None,
        allow_overwrite=not args.no_overwrite,
        media_root=args.media_root or Path(args.manifest).parent,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_make_synthetic(args) -> int:
    w, h = (int(v) for v in args.resolution.split("x"))
    records, latents = make_synthetic_dataset(
        args.out, n_assets=args.n_assets, n_frames=args.frames,
        resolution=(w, h), seed=args.seed, as_video=args.video,
    )
    if args.subjects > 0:
        ratings = scripted_ratings(records, latents, n_subjects=args.subjects, seed=args.seed)
        save_ratings(ratings, Path(args.out) / "ratings.csv")
    with open(Path(args.out) / "latents.json", "w", encoding="utf-8") as fh:
        json.dump(latents, fh, indent=2)
    print(f"synthetic dataset with {len(records)} assets under {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orbitqa", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("process-ratings", help="raw ratings -> MOS labels + outlier report")
    p.add_argument("--ratings", required=True)
    p.add_argument("--manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--subject-reject-rate", type=float, default=0.03)
    p.set_defaults(fn=cmd_process_ratings)

    p = sub.add_parser("sample-frames", help="export per-segment frames for each asset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", choices=["train", "test"], default="test")
    p.add_argument("--out", required=True)
    p.add_argument("--n-segments", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_sample_frames)

    p = sub.add_parser("make-splits", help="draw repeated 4:1 train/test splits")
    p.add_argument("--manifest", required=True)
    p.add_argument("--n-splits", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--group-by-prompt", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_make_splits)

    p = sub.add_parser("evaluate", help="SRCC/KRCC/PLCC of a score file against MOS")
    p.add_argument("--pred", required=True)
    p.add_argument("--mos", required=True)
    p.add_argument("--out")
    p.add_argument("--subset", action="store_true",
                   help="evaluate on the intersection of predicted and labeled assets "
                        "(e.g. test-split scores against a full MOS file)")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("benchmark", help="evaluate external score files over repeated splits")
    p.add_argument("--methods", required=True, help="directory of <method>.jsonl score files")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mos", required=True)
    p.add_argument("--splits", type=int, default=10)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--splits-file")
    p.add_argument("--group-by-prompt", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--figures")
    p.set_defaults(fn=cmd_benchmark)

    p = sub.add_parser("significance", help="pairwise F-test verdicts from a benchmark report")
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--confidence", type=float, default=0.95)
    p.add_argument("--figures")
    p.set_defaults(fn=cmd_significance)

    p = sub.add_parser("train", help="train the regressor on one split")
    p.add_argument("--config", required=True, help="flat TOML key/value train config")
    p.add_argument("--split", required=True, help="splits JSON file")
    p.add_argument("--split-index", type=int, default=0)
    p.add_argument("--manifest", required=True)
    p.add_argument("--mos", required=True)
    p.add_argument("--out", help="checkpoint path")
    p.add_argument("--log", help="per-step loss breakdown JSONL")
    p.add_argument("--scores-out", help="write test-split predictions here")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("ablate", help="train/evaluate the branch-switch grid")
    p.add_argument("--grid", default="a,b,c,d,e,f,g")
    p.add_argument("--config", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--mos", required=True)
    p.add_argument("--splits", type=int, default=10)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--splits-file")
    p.add_argument("--group-by-prompt", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--figures")
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("plot", help="render MOS and benchmark figures")
    p.add_argument("--mos")
    p.add_argument("--manifest")
    p.add_argument("--report")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_plot)

    p = sub.add_parser("serve", help="run the rating-collection service")
    p.add_argument("--manifest", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subjects", help="comma-separated roster; omit to allow any subject id")
    p.add_argument("--media-root")
    p.add_argument("--no-overwrite", action="store_true")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("make-synthetic", help="generate a small synthetic study dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n-assets", type=int, default=12)
    p.add_argument("--frames", type=int, default=24)
    p.add_argument("--resolution", default="64x64")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--video", action="store_true", help="encode clips as mp4 instead of PNG frames")
    p.add_argument("--subjects", type=int, default=5, help="scripted raters; 0 to skip ratings")
    p.set_defaults(fn=cmd_make_synthetic)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
