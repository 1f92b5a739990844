"""End-to-end batch pipeline: synth -> retrieve -> extract -> dataset ->
train -> predict -> eval.

Every stage writes its outputs under one artifacts directory and records a
stage manifest (seed, input digests, output paths), so any stage can be
re-run in isolation and byte-compared. All randomness flows from the one
root seed through named sub-seeds (stage:purpose).
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

from . import fileio, metrics
from .cnn import TrainConfig, build_classifier, evaluate, network_from_specs, predict_proba, train
from .config import PipelineConfig, dumps, validate_config
from .dataset import (SPLITS, DatasetEntry, DatasetLoader, DatasetManifest, SplitSpec,
                      build_manifest)
from .errors import ConfigError, InsufficientDataError, StageError
from .forward_model import CellClass, SubjectSpec, make_subject
from .patch_extraction import extract_patches
from .phase_retrieval import FringeFilter, detect_carrier_bin, retrieve

CLASS_ORDER = (CellClass.HEALTHY, CellClass.EARLY_TROPHOZOITE, CellClass.LATE_TROPHOZOITE)


def derive_seed(root_seed: int, stage: str, purpose: str = "") -> int:
    """Named 63-bit sub-seed; stages are independently reproducible."""
    digest = hashlib.sha256(f"{root_seed}:{stage}:{purpose}".encode()).digest()
    return int.from_bytes(digest[:8], "little") % 2**63


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _record_stage(out_dir: Path, stage: str, seed: int, inputs: list, outputs: list):
    record = {
        "stage": stage,
        "seed": seed,
        "inputs": {str(p): _sha256_file(p) for p in inputs},
        "outputs": sorted(str(p) for p in outputs),
    }
    path = out_dir / f"stage_{stage}.json"
    path.write_text(json.dumps(record, indent=1, sort_keys=True) + "\n")
    return record


def stage_synth(cfg: PipelineConfig, out_dir: Path) -> list:
    """Render every subject/FoV at three wavelengths; returns the scene records."""
    s = cfg.synth
    frames_dir = out_dir / "frames"
    truth_dir = out_dir / "truth"
    frames_dir.mkdir(parents=True, exist_ok=True)
    truth_dir.mkdir(parents=True, exist_ok=True)
    records = []
    outputs = []
    subject_idx = 0
    for cls in CLASS_ORDER:
        for _ in range(s.subjects_per_class):
            subject_id = f"s{subject_idx:03d}"
            subject_idx += 1
            for fov in range(s.fovs_per_subject):
                seed = derive_seed(cfg.root_seed, "synth", f"{subject_id}:{fov}")
                data = make_subject(SubjectSpec(
                    subject_id=subject_id, class_label=cls, cell_count=s.cells_per_fov,
                    seed=seed, fov_px=(s.fov_rows, s.fov_cols),
                    cell_radius_um=s.cell_radius_um, opd_peak_um=s.opd_peak_um,
                    pixel_size_um=s.pixel_size_um, carrier=(s.carrier_fx, s.carrier_fy),
                    background=s.background, modulation=s.modulation,
                    noise_sigma=s.noise_sigma, inclusion_count=s.inclusion_count,
                    pigment_fraction=s.pigment_fraction))
                rec = {"subject_id": subject_id, "class": cls.value, "fov": fov,
                       "seed": seed, "frames": {}, "truths": {}, "boxes": data.boxes}
                for ch, frame in data.interferograms.items():
                    path = frames_dir / f"{subject_id}_f{fov}_{ch}.qpi"
                    fileio.write_interferogram(path, frame)
                    rec["frames"][ch] = str(path)
                    outputs.append(path)
                for ch, truth in data.truths.items():
                    path = truth_dir / f"{subject_id}_f{fov}_{ch}.qph"
                    fileio.write_phase_map(path, truth)
                    rec["truths"][ch] = str(path)
                    outputs.append(path)
                records.append(rec)
    manifest = out_dir / "synth_manifest.jsonl"
    fileio.write_jsonl(manifest, records)
    _record_stage(out_dir, "synth", derive_seed(cfg.root_seed, "synth"), [], outputs + [manifest])
    return records


def stage_retrieve(cfg: PipelineConfig, out_dir: Path, scene_records: list) -> list:
    phases_dir = out_dir / "phases"
    phases_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    inputs = []
    for rec in scene_records:
        rec["phases"] = {}
        for ch, frame_path in rec["frames"].items():
            frame = fileio.read_interferogram(frame_path, subject_id=rec["subject_id"])
            inputs.append(frame_path)
            phase, _amp = retrieve_with_config(frame, cfg)
            path = phases_dir / (Path(frame_path).stem + ".qph")
            fileio.write_phase_map(path, phase)
            rec["phases"][ch] = str(path)
            outputs.append(path)
    manifest = out_dir / "retrieve_manifest.jsonl"
    fileio.write_jsonl(manifest, scene_records)
    _record_stage(out_dir, "retrieve", 0, inputs, outputs + [manifest])
    return scene_records


def retrieve_with_config(frame, cfg: PipelineConfig):
    filt = None
    if cfg.retrieve.filter_radius_bins:
        center = detect_carrier_bin(frame.pixels)
        filt = FringeFilter(center_bin=center, radius_bins=cfg.retrieve.filter_radius_bins)
    return retrieve(frame, filt=filt, plane_fit=cfg.retrieve.plane_fit,
                    window=cfg.retrieve.window)


def stage_extract(cfg: PipelineConfig, out_dir: Path, scene_records: list) -> list:
    patches_dir = out_dir / "patches"
    patches_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    outputs = []
    inputs = []
    for rec in scene_records:
        phases = {}
        for ch, path in rec["phases"].items():
            phases[ch] = fileio.read_phase_map(path)
            inputs.append(path)
        result = extract_patches(phases, config=cfg.extract,
                                 label=CellClass(rec["class"]), subject_id=rec["subject_id"])
        for k, patch in enumerate(result["patches"]):
            path = patches_dir / f"{rec['subject_id']}_f{rec['fov']}_c{k}.qpa"
            fileio.write_patch(path, patch)
            outputs.append(path)
            entries.append({"patch_path": str(path), "label": rec["class"],
                            "subject_id": rec["subject_id"]})
    manifest = out_dir / "extract_manifest.jsonl"
    fileio.write_jsonl(manifest, entries)
    _record_stage(out_dir, "extract", 0, sorted(set(inputs)), outputs + [manifest])
    return entries


def _split_spec_from_config(cfg: PipelineConfig, entries: list) -> SplitSpec:
    """Allocate sorted subjects per class into train/val/test by config counts."""
    s = cfg.synth
    by_class = {}
    for e in entries:
        by_class.setdefault(e["label"], set()).add(e["subject_id"])
    sets = {"train": set(), "val": set(), "test": set()}
    for cls in CLASS_ORDER:
        pool = sorted(by_class.get(cls.value, ()))
        counts = {"train": s.train_subjects_per_class, "val": s.val_subjects_per_class,
                  "test": s.test_subjects_per_class}
        at = 0
        for split in SPLITS:
            take = min(counts[split], max(len(pool) - at, 0))
            sets[split].update(pool[at:at + take])
            at += take
    return SplitSpec(frozenset(sets["train"]), frozenset(sets["val"]), frozenset(sets["test"]))


def stage_dataset(cfg: PipelineConfig, out_dir: Path, entries: list) -> DatasetManifest:
    if not entries:
        raise InsufficientDataError("extraction produced zero patches")
    dataset_entries = [DatasetEntry(patch_path=e["patch_path"], label=CellClass(e["label"]),
                                    subject_id=e["subject_id"]) for e in entries]
    counts = {}
    for e in dataset_entries:
        counts[e.label] = counts.get(e.label, 0) + 1
    for cls in CLASS_ORDER:
        if counts.get(cls, 0) == 0:
            raise InsufficientDataError(f"class {cls.value} has no extracted patches")
    split_spec = _split_spec_from_config(cfg, entries)
    per_class = cfg.dataset.per_class or None
    augment_splits = ("train", "val") if cfg.dataset.augment_val else ("train",)
    manifest = build_manifest(dataset_entries, split_spec, per_class=per_class,
                              seed=derive_seed(cfg.root_seed, "dataset", "balance"),
                              augment_splits=augment_splits,
                              channels_as_samples=cfg.dataset.channels_as_samples)
    path = out_dir / "manifest.tsv"
    manifest.save(path)
    _record_stage(out_dir, "dataset", derive_seed(cfg.root_seed, "dataset", "balance"),
                  [out_dir / "extract_manifest.jsonl"], [path])
    return manifest


def stage_train(cfg: PipelineConfig, out_dir: Path, manifest: DatasetManifest, task: str):
    train_cfg = TrainConfig(**{**cfg.train.__dict__,
                               "seed": derive_seed(cfg.root_seed, "train", task)})
    loader = DatasetLoader(manifest, task=task, dtype=train_cfg.dtype)
    model = build_classifier()
    result = train(model, loader, train_cfg)
    ckpt = out_dir / f"model_{task}.qpn"
    fileio.write_checkpoint(ckpt, model.layer_specs(), model.state(),
                            sidecar_text=train_cfg.as_text())
    log_path = out_dir / f"train_log_{task}.jsonl"
    fileio.write_jsonl(log_path, [vars(row) for row in result.log])
    _record_stage(out_dir, f"train_{task}", train_cfg.seed,
                  [out_dir / "manifest.tsv"], [ckpt, log_path])
    return ckpt


def stage_predict(cfg: PipelineConfig, out_dir: Path, manifest: DatasetManifest,
                  ckpt_path, task: str, split: str = "test"):
    specs, flat = fileio.read_checkpoint(ckpt_path)
    model = network_from_specs(specs)
    model.load_flat_state(flat)
    loader = DatasetLoader(manifest, task=task, dtype=cfg.train.dtype)
    entries = loader.task_entries(split)
    if not entries:
        raise InsufficientDataError(f"split {split!r} has no entries for task {task!r}")
    path = out_dir / f"scores_{task}_{split}.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "score", "truth"])
        for i, entry in enumerate(entries):
            batch = loader.load_batch([entry])
            prob = float(predict_proba(model, batch.inputs.astype(cfg.train.dtype))[0])
            writer.writerow([f"{task}:{split}:{i}", f"{prob:.10f}", int(batch.targets[0])])
    _record_stage(out_dir, f"predict_{task}", 0, [ckpt_path, out_dir / "manifest.tsv"], [path])
    return path


def read_scores_csv(path) -> list:
    fileio._notify(path)
    scores = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            scores.append((float(row["score"]), int(row["truth"])))
    return scores


def evaluate_scores(scores: list, threshold: float = 0.5) -> dict:
    counts = metrics.confusion(scores, threshold=threshold)
    report = metrics.rates(counts)
    roc = metrics.roc_auc(scores)
    return {"counts": counts, "rates": report, "roc": roc}


def format_metrics_report(per_task: dict, threshold: float) -> str:
    """Deterministic human-readable + key/value report (no timing, no wall clock)."""
    lines = ["# metrics report", f"threshold = {threshold}"]
    for task in sorted(per_task):
        res = per_task[task]
        c = res["counts"]
        lines.append(f"\n[{task}]")
        lines.append(f"tp = {c.tp}\nfp = {c.fp}\ntn = {c.tn}\nfn = {c.fn}")
        for key in ("sensitivity", "specificity", "accuracy", "mcc"):
            lines.append(f"{key} = {res['rates'][key]:.6f}")
        lines.append(f"auroc = {res['roc'].auc:.6f}")
    return "\n".join(lines) + "\n"


def write_roc_csv(path, roc: metrics.RocCurve):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fpr", "tpr"])
        for fpr, tpr in roc.points:
            writer.writerow([f"{fpr:.10f}", f"{tpr:.10f}"])


def stage_eval(cfg: PipelineConfig, out_dir: Path, score_paths: dict):
    per_task = {}
    for task, path in score_paths.items():
        per_task[task] = evaluate_scores(read_scores_csv(path), threshold=cfg.eval.threshold)
        write_roc_csv(out_dir / f"roc_{task}.csv", per_task[task]["roc"])
    report_path = out_dir / "metrics_report.txt"
    report_path.write_text(format_metrics_report(per_task, cfg.eval.threshold))
    _record_stage(out_dir, "eval", 0, sorted(score_paths.values()),
                  [report_path] + [out_dir / f"roc_{t}.csv" for t in sorted(score_paths)])
    return report_path


def run_pipeline(cfg: PipelineConfig, out_dir, progress=None) -> dict:
    """Execute all stages in order; raises StageError naming the first failure."""
    violations = validate_config(cfg)
    if violations:
        raise ConfigError("invalid config:\n" + "\n".join(violations))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.ini").write_text(dumps(cfg))

    def run_stage(name, fn, *args):
        if progress:
            progress(name)
        try:
            return fn(*args)
        except Exception as exc:
            raise StageError(name, exc) from exc

    artifacts = {"out_dir": str(out_dir)}
    records = run_stage("synth", stage_synth, cfg, out_dir)
    records = run_stage("retrieve", stage_retrieve, cfg, out_dir, records)
    entries = run_stage("extract", stage_extract, cfg, out_dir, records)
    manifest = run_stage("dataset", stage_dataset, cfg, out_dir, entries)

    score_paths = {}
    for task in cfg.tasks:
        ckpt = run_stage(f"train:{task}", stage_train, cfg, out_dir, manifest, task)
        score_paths[task] = run_stage(f"predict:{task}", stage_predict,
                                      cfg, out_dir, manifest, ckpt, task)
        artifacts[f"checkpoint_{task}"] = str(ckpt)

    report = run_stage("eval", stage_eval, cfg, out_dir, score_paths)
    artifacts["metrics_report"] = str(report)
    artifacts["scores"] = {t: str(p) for t, p in score_paths.items()}
    return artifacts
