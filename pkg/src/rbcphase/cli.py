"""Command-line front end.

Subcommands mirror the pipeline stages (`synth`, `retrieve`, `extract`,
`dataset build`, `train`, `predict`, `eval`), plus `coherence` for the
formula calculator, `run` for the whole pipeline, and `plot-roc` for an SVG
of a ROC curve. `QPI_THREADS` caps worker counts (processing is sequential,
i.e. one worker, which satisfies any cap); `--deterministic` pins the
already-sequential reduction paths.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from . import config as config_mod
from . import fileio
from .errors import RbcPhaseError


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    os.environ.setdefault("QPI_THREADS", "1")
    try:
        return args.func(args)
    except RbcPhaseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rbcphase",
                                     description="Quantitative-phase RBC staging pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("coherence", help="evaluate the coherence formulas")
    p.add_argument("--wavelength-nm", type=float, required=True)
    p.add_argument("--na", type=float, required=True)
    p.add_argument("--bandwidth-nm", type=float, default=0.0)
    p.set_defaults(func=cmd_coherence)

    p = sub.add_parser("synth", help="synthesize labelled interferograms")
    p.add_argument("--subjects", type=int, required=True,
                   help="subjects per class (split over train/val/test by config)")
    p.add_argument("--cells-per-fov", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--config", help="pipeline config file (INI)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("retrieve", help="recover unwrapped phase from interferograms")
    p.add_argument("--in", dest="input", required=True, help="a .qpi file or a directory")
    p.add_argument("--out", required=True)
    p.add_argument("--filter-radius", type=float, default=0.0, help="bins; 0 = auto")
    p.add_argument("--no-plane-fit", action="store_true")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("extract", help="extract single-RBC patches from phase maps")
    p.add_argument("--phase-dir", required=True,
                   help="directory produced by a pipeline run (with retrieve_manifest.jsonl)")
    p.add_argument("--out", required=True)
    p.add_argument("--entropy-threshold", type=float, default=1.0)
    p.add_argument("--min-area", type=int, default=1600)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("dataset", help="dataset operations")
    dsub = p.add_subparsers(dest="dataset_command", required=True)
    b = dsub.add_parser("build", help="build a balanced, split, augmented manifest")
    b.add_argument("--patch-dir", required=True,
                   help="directory with extract_manifest.jsonl and .qpa patches")
    b.add_argument("--split-spec", required=True,
                   help="JSON file with train/val/test subject-id lists")
    b.add_argument("--per-class", type=int, default=600)
    b.add_argument("--seed", type=int, required=True)
    b.add_argument("--out", default="manifest.tsv")
    b.add_argument("--channels-as-samples", action="store_true")
    b.set_defaults(func=cmd_dataset_build)

    p = sub.add_parser("train", help="train one binary task")
    p.add_argument("--manifest", required=True)
    p.add_argument("--task", choices=("hvi", "evl"), required=True)
    p.add_argument("--config", help="pipeline config file (INI)")
    p.add_argument("--out", required=True, help="checkpoint path (.qpn)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score a split with a trained checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--task", choices=("hvi", "evl"), default="hvi")
    p.add_argument("--scores-out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="metrics from a scores CSV")
    p.add_argument("--scores", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--roc-out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run", help="run the full pipeline")
    p.add_argument("--config", help="pipeline config file (INI); defaults shipped")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="override the config root seed")
    p.add_argument("--deterministic", action="store_true",
                   help="force sequential reductions (processing is already sequential)")
    p.add_argument("--dump-config", action="store_true",
                   help="print the effective config and exit")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("plot-roc", help="render a ROC CSV as SVG")
    p.add_argument("--roc", required=True, help="CSV with fpr,tpr columns")
    p.add_argument("--out", required=True, help="output .svg path")
    p.set_defaults(func=cmd_plot_roc)

    p = sub.add_parser("validate", help="validate a pipeline config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_validate)

    return parser


def _load_config(path, seed=None) -> config_mod.PipelineConfig:
    cfg = config_mod.load(path) if path else config_mod.PipelineConfig()
    if seed is not None:
        cfg.root_seed = seed
    return cfg


def cmd_coherence(args) -> int:
    from .coherence import report, um_from_nm
    rep = report(um_from_nm(args.wavelength_nm), args.na,
                 spectral_width_um=um_from_nm(args.bandwidth_nm))
    print(json.dumps({k: round(v, 6) for k, v in rep.as_dict().items()}))
    return 0


def cmd_synth(args) -> int:
    from .pipeline import stage_synth
    cfg = _load_config(args.config, seed=args.seed)
    total = args.subjects
    if total < 1:
        print("error: need at least one subject per class", file=sys.stderr)
        return 1
    cfg.synth.test_subjects_per_class = 1 if total >= 3 else 0
    cfg.synth.val_subjects_per_class = 1 if total >= 2 else 0
    cfg.synth.train_subjects_per_class = (total - cfg.synth.val_subjects_per_class
                                          - cfg.synth.test_subjects_per_class)
    cfg.synth.cells_per_fov = args.cells_per_fov
    records = stage_synth(cfg, Path(args.out))
    print(f"wrote {3 * len(records)} interferograms for {total * 3} subjects to {args.out}")
    return 0


def cmd_retrieve(args) -> int:
    from .phase_retrieval import FringeFilter, detect_carrier_bin, retrieve
    src = Path(args.input)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = sorted(src.glob("*.qpi")) if src.is_dir() else [src]
    for path in paths:
        frame = fileio.read_interferogram(path)
        filt = None
        if args.filter_radius:
            center = detect_carrier_bin(frame.pixels)
            filt = FringeFilter(center_bin=center, radius_bins=args.filter_radius)
        phase, _ = retrieve(frame, filt=filt, plane_fit=not args.no_plane_fit)
        fileio.write_phase_map(out_dir / (path.stem + ".qph"), phase)
    print(f"retrieved {len(paths)} frame(s) into {out_dir}")
    return 0


def cmd_extract(args) -> int:
    from .forward_model import CellClass
    from .patch_extraction import extract_patches
    phase_dir = Path(args.phase_dir)
    manifest_path = phase_dir / "retrieve_manifest.jsonl"
    if not manifest_path.exists():
        print(f"error: {manifest_path} not found; run the retrieve stage first", file=sys.stderr)
        return 1
    records = fileio.read_jsonl(manifest_path)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = config_mod.PipelineConfig()
    cfg.extract.threshold = args.entropy_threshold
    cfg.extract.min_area = args.min_area
    entries = []
    for rec in records:
        phases = {ch: fileio.read_phase_map(p) for ch, p in rec["phases"].items()}
        result = extract_patches(phases, config=cfg.extract,
                                 label=CellClass(rec["class"]), subject_id=rec["subject_id"])
        for k, patch in enumerate(result["patches"]):
            path = out_dir / f"{rec['subject_id']}_f{rec['fov']}_c{k}.qpa"
            fileio.write_patch(path, patch)
            entries.append({"patch_path": str(path), "label": rec["class"],
                            "subject_id": rec["subject_id"]})
    fileio.write_jsonl(out_dir / "extract_manifest.jsonl", entries)
    print(f"extracted {len(entries)} patches into {out_dir}")
    return 0


def cmd_dataset_build(args) -> int:
    from .dataset import DatasetEntry, SplitSpec, build_manifest
    from .forward_model import CellClass
    raw = fileio.read_jsonl(Path(args.patch_dir) / "extract_manifest.jsonl")
    entries = [DatasetEntry(patch_path=e["patch_path"], label=CellClass(e["label"]),
                            subject_id=e["subject_id"]) for e in raw]
    with open(args.split_spec) as fh:
        spec_doc = json.load(fh)
    split_spec = SplitSpec(frozenset(spec_doc["train"]), frozenset(spec_doc["val"]),
                           frozenset(spec_doc.get("test", ())))
    manifest = build_manifest(entries, split_spec, per_class=args.per_class, seed=args.seed,
                              channels_as_samples=args.channels_as_samples)
    manifest.save(args.out)
    print(f"wrote {len(manifest.entries)} manifest rows to {args.out}")
    return 0


def cmd_train(args) -> int:
    from .cnn import TrainConfig, build_classifier, train
    from .dataset import DatasetLoader, DatasetManifest
    cfg = _load_config(args.config)
    manifest = DatasetManifest.load(args.manifest)
    train_cfg = TrainConfig(**cfg.train.__dict__)
    loader = DatasetLoader(manifest, task=args.task, dtype=train_cfg.dtype)
    model = build_classifier()
    result = train(model, loader, train_cfg,
                   log_fn=lambda row: print(f"epoch {row.epoch:2d}  lr {row.lr:.2e}  "
                                            f"train {row.train_loss:.4f}  val {row.val_loss:.4f}  "
                                            f"acc {row.val_accuracy:.3f}"))
    fileio.write_checkpoint(args.out, model.layer_specs(), model.state(),
                            sidecar_text=train_cfg.as_text())
    print(f"saved checkpoint to {args.out} "
          f"(final val accuracy {result.log[-1].val_accuracy:.3f})")
    return 0


def cmd_predict(args) -> int:
    from .cnn import network_from_specs, predict_proba
    from .dataset import DatasetLoader, DatasetManifest
    specs, flat = fileio.read_checkpoint(args.ckpt)
    model = network_from_specs(specs)
    model.load_flat_state(flat)
    manifest = DatasetManifest.load(args.manifest)
    loader = DatasetLoader(manifest, task=args.task)
    entries = loader.task_entries(args.split)
    with open(args.scores_out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "score", "truth"])
        for i, entry in enumerate(entries):
            batch = loader.load_batch([entry])
            prob = float(predict_proba(model, batch.inputs)[0])
            writer.writerow([f"{args.task}:{args.split}:{i}", f"{prob:.10f}",
                             int(batch.targets[0])])
    print(f"scored {len(entries)} samples into {args.scores_out}")
    return 0


def cmd_eval(args) -> int:
    from .pipeline import evaluate_scores, read_scores_csv, write_roc_csv
    scores = read_scores_csv(args.scores)
    result = evaluate_scores(scores, threshold=args.threshold)
    write_roc_csv(args.roc_out, result["roc"])
    c = result["counts"]
    print(f"n = {c.total}  tp = {c.tp}  fp = {c.fp}  tn = {c.tn}  fn = {c.fn}")
    for key in ("sensitivity", "specificity", "accuracy", "mcc"):
        print(f"{key} = {result['rates'][key]:.6f}")
    print(f"auroc = {result['roc'].auc:.6f}")
    return 0


def cmd_run(args) -> int:
    from .pipeline import run_pipeline
    cfg = _load_config(args.config, seed=args.seed)
    if args.deterministic:
        cfg.deterministic = True
    if args.dump_config:
        print(config_mod.dumps(cfg), end="")
        return 0
    artifacts = run_pipeline(cfg, args.out, progress=lambda s: print(f"[stage] {s}"))
    print(f"metrics report: {artifacts['metrics_report']}")
    return 0


def cmd_validate(args) -> int:
    cfg = _load_config(args.config)
    violations = config_mod.validate_config(cfg)
    if not violations:
        print("ok")
        return 0
    for v in violations:
        print(v)
    return 1


def cmd_plot_roc(args) -> int:
    rows = []
    with open(args.roc, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append((float(row["fpr"]), float(row["tpr"])))
    if not rows:
        print("error: empty ROC csv", file=sys.stderr)
        return 1
    _write_roc_svg(args.out, rows)
    print(f"wrote {args.out}")
    return 0


def _write_roc_svg(path, points, size=360, margin=40):
    """Minimal standalone SVG: axes, diagonal, and the ROC polyline."""
    span = size - 2 * margin

    def sx(fpr):
        return margin + fpr * span

    def sy(tpr):
        return size - margin - tpr * span

    poly = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in points)
    auc = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
        f'<line x1="{sx(0)}" y1="{sy(0)}" x2="{sx(1)}" y2="{sy(0)}" stroke="black"/>',
        f'<line x1="{sx(0)}" y1="{sy(0)}" x2="{sx(0)}" y2="{sy(1)}" stroke="black"/>',
        f'<line x1="{sx(0)}" y1="{sy(0)}" x2="{sx(1)}" y2="{sy(1)}" stroke="#bbb" '
        f'stroke-dasharray="4 4"/>',
        f'<polyline points="{poly}" fill="none" stroke="#c0392b" stroke-width="2"/>',
        f'<text x="{size / 2:.0f}" y="{size - 8}" text-anchor="middle" '
        f'font-size="12">false positive rate</text>',
        f'<text x="12" y="{size / 2:.0f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 12 {size / 2:.0f})">true positive rate</text>',
        f'<text x="{sx(0.98):.0f}" y="{sy(0.02):.0f}" text-anchor="end" '
        f'font-size="12">AUC = {auc:.4f}</text>',
        "</svg>",
    ]
    Path(path).write_text("\n".join(parts) + "\n")


if __name__ == "__main__":
    raise SystemExit(main())
