"""Balanced, augmented, subject-disjoint datasets served as minibatches.

The manifest is the unit of truth: one entry per training sample, carrying
the patch path, class label, subject id, split, an augmentation tag
(none / rot45 / rot135) and a wavelength-set id. Augmentations are tags, not
files; the loader applies the rotation when the sample is served.

Two readings of the source data's "x3 wavelengths" arithmetic exist: the
default treats the three wavelengths as the three input channels of one
sample, while `channels_as_samples=True` explodes each patch into three
single-wavelength samples (the reading that makes 600 x 3 classes x 3
wavelengths = 5400 base images, times 3 rotations = 16200).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from . import fileio
from .errors import InsufficientDataError, SplitError
from .forward_model import CellClass
from .patch_extraction import RbcPatch, resize_bilinear

SPLITS = ("train", "val", "test")
AUG_TAGS = ("none", "rot45", "rot135")
WAVELENGTH_SETS = ("rgb", "red", "green", "blue")
NETWORK_INPUT_SIDE = 120

# Binary task label maps; positive class listed second. For the stage task
# the positive class is the late trophozoite.
TASKS = {
    "hvi": {CellClass.HEALTHY: 0, CellClass.EARLY_TROPHOZOITE: 1, CellClass.LATE_TROPHOZOITE: 1},
    "evl": {CellClass.EARLY_TROPHOZOITE: 0, CellClass.LATE_TROPHOZOITE: 1},
}


@dataclass(frozen=True)
class DatasetEntry:
    patch_path: str
    label: CellClass
    subject_id: str
    split: str = "train"
    augmentation: str = "none"
    wavelength_set: str = "rgb"

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split}")
        if self.augmentation not in AUG_TAGS:
            raise ValueError(f"augmentation must be one of {AUG_TAGS}")
        if self.wavelength_set not in WAVELENGTH_SETS:
            raise ValueError(f"wavelength set must be one of {WAVELENGTH_SETS}")


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint subject-id sets for train/val/test."""

    train_ids: frozenset
    val_ids: frozenset
    test_ids: frozenset

    def __post_init__(self):
        object.__setattr__(self, "train_ids", frozenset(self.train_ids))
        object.__setattr__(self, "val_ids", frozenset(self.val_ids))
        object.__setattr__(self, "test_ids", frozenset(self.test_ids))
        if (self.train_ids & self.val_ids) or (self.train_ids & self.test_ids) \
                or (self.val_ids & self.test_ids):
            raise SplitError("split subject-id sets must be pairwise disjoint")

    def split_of(self, subject_id: str) -> str:
        if subject_id in self.train_ids:
            return "train"
        if subject_id in self.val_ids:
            return "val"
        if subject_id in self.test_ids:
            return "test"
        raise SplitError(f"subject {subject_id!r} not covered by the split spec")

    def all_ids(self) -> frozenset:
        return self.train_ids | self.val_ids | self.test_ids


# Subject counts per class for the two groupings the source data reports.
PAPER_SPLIT_COUNTS = {"train": (5, 10, 7), "val": (2, 3, 4), "test": (1, 2, 2)}
PAPER_TRAINVAL_COUNTS = {"train": (7, 13, 11), "val": (0, 0, 0), "test": (1, 2, 2)}


def preset_split(subjects_by_class: dict, counts: dict = PAPER_SPLIT_COUNTS) -> SplitSpec:
    """Allocate per-class subject counts over sorted subject lists."""
    classes = (CellClass.HEALTHY, CellClass.EARLY_TROPHOZOITE, CellClass.LATE_TROPHOZOITE)
    sets = {s: set() for s in SPLITS}
    for ci, cls in enumerate(classes):
        pool = sorted(subjects_by_class.get(cls, []))
        need = sum(counts[s][ci] for s in SPLITS)
        if len(pool) != need:
            raise SplitError(f"{cls.value}: preset expects {need} subjects, got {len(pool)}")
        at = 0
        for s in SPLITS:
            take = counts[s][ci]
            sets[s].update(pool[at:at + take])
            at += take
    return SplitSpec(frozenset(sets["train"]), frozenset(sets["val"]), frozenset(sets["test"]))


def _border_median(image: np.ndarray) -> float:
    ring = np.concatenate([image[0, :], image[-1, :], image[1:-1, 0], image[1:-1, -1]])
    return float(np.median(ring))


def rotate_patch(channels: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate about the patch centre, bilinear, corners filled per-channel
    with the border-median phase."""
    out = np.empty_like(channels)
    for k in range(channels.shape[0]):
        out[k] = ndimage.rotate(channels[k], angle_deg, reshape=False, order=1,
                                mode="constant", cval=_border_median(channels[k]))
    return out


def augment_rotations(patch: RbcPatch) -> list:
    """[original, rotate(45 deg), rotate(135 deg)], labels and ids preserved."""
    if not patch.normalized:
        raise ValueError("augment normalized patches only")
    out = [patch]
    for angle in (45.0, 135.0):
        out.append(RbcPatch(channels=rotate_patch(patch.channels, angle),
                            label=patch.label, subject_id=patch.subject_id,
                            bbox=patch.bbox, normalized=True))
    return out


def balance_classes(entries: list, per_class: int, seed: int = 0) -> list:
    """Seeded subsample to exactly `per_class` entries per class (pre-augmentation)."""
    rng = np.random.default_rng(seed)
    by_class = {}
    for i, e in enumerate(entries):
        by_class.setdefault(e.label, []).append(i)
    keep = set()
    for cls in sorted(by_class, key=lambda c: c.value):
        idx = by_class[cls]
        if len(idx) < per_class:
            raise InsufficientDataError(
                f"class {cls.value} has {len(idx)} entries, fewer than {per_class}")
        chosen = rng.permutation(len(idx))[:per_class]
        keep.update(idx[k] for k in chosen)
    return [e for i, e in enumerate(entries) if i in keep]


def split_by_subject(entries: list, split_spec: SplitSpec) -> list:
    """Assign each entry's split from its subject id; spec must cover all subjects."""
    subjects = {e.subject_id for e in entries}
    missing = subjects - split_spec.all_ids()
    if missing:
        raise SplitError(f"split spec does not cover subjects: {sorted(missing)}")
    return [replace(e, split=split_spec.split_of(e.subject_id)) for e in entries]


@dataclass
class DatasetManifest:
    entries: list = field(default_factory=list)

    def __post_init__(self):
        self.assert_no_leakage()
        for e in self.entries:
            if e.split == "test" and e.augmentation != "none":
                raise ValueError("test entries must not carry augmentation tags")

    def assert_no_leakage(self):
        seen = {}
        for e in self.entries:
            prior = seen.setdefault(e.subject_id, e.split)
            if prior != e.split:
                raise SplitError(f"subject {e.subject_id!r} appears in splits "
                                 f"{prior!r} and {e.split!r}")

    def split_entries(self, split: str) -> list:
        return [e for e in self.entries if e.split == split]

    def counts(self, split: str | None = None) -> dict:
        out = {}
        for e in self.entries:
            if split is None or e.split == split:
                out[e.label] = out.get(e.label, 0) + 1
        return out

    def save(self, path):
        with open(path, "w") as fh:
            for e in self.entries:
                path_col = e.patch_path
                if e.wavelength_set != "rgb":
                    path_col += f"#{e.wavelength_set}"
                fh.write(f"{path_col}\t{e.label.value}\t{e.subject_id}\t{e.split}\t{e.augmentation}\n")

    @classmethod
    def load(cls, path):
        entries = []
        fileio._notify(path)
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                path_col, label, subject, split, aug = line.rstrip("\n").split("\t")
                patch_path, _, wset = path_col.partition("#")
                entries.append(DatasetEntry(patch_path=patch_path, label=CellClass(label),
                                            subject_id=subject, split=split,
                                            augmentation=aug,
                                            wavelength_set=wset or "rgb"))
        return cls(entries=entries)


def build_manifest(entries: list, split_spec: SplitSpec, per_class: int | None = None,
                   seed: int = 0, balance_scope: str = "train",
                   augment_splits: tuple = ("train",),
                   channels_as_samples: bool = False) -> DatasetManifest:
    """Split, balance, optionally explode wavelengths, then tag augmentations.

    balance_scope "train" subsamples the train split only (train class counts
    end up equal); "trainval" subsamples train+val jointly, which is the
    book-keeping the 600-per-class arithmetic uses.
    """
    split_entries = split_by_subject(entries, split_spec)
    if per_class is not None:
        if balance_scope == "train":
            scope = [e for e in split_entries if e.split == "train"]
            rest = [e for e in split_entries if e.split != "train"]
        elif balance_scope == "trainval":
            scope = [e for e in split_entries if e.split in ("train", "val")]
            rest = [e for e in split_entries if e.split == "test"]
        else:
            raise ValueError(f"unknown balance scope {balance_scope!r}")
        split_entries = balance_classes(scope, per_class, seed=seed) + rest

    if channels_as_samples:
        split_entries = [replace(e, wavelength_set=ch)
                         for e in split_entries for ch in ("red", "green", "blue")]

    final = []
    for e in split_entries:
        final.append(e)
        if e.split in augment_splits:
            for tag in ("rot45", "rot135"):
                final.append(replace(e, augmentation=tag))
    return DatasetManifest(entries=final)


def paper_arithmetic_manifest(entries: list, split_spec: SplitSpec, per_class: int = 600,
                              seed: int = 0) -> DatasetManifest:
    """Preset reproducing the 600/class -> 5400 -> 16200 train+val arithmetic."""
    return build_manifest(entries, split_spec, per_class=per_class, seed=seed,
                          balance_scope="trainval", augment_splits=("train", "val"),
                          channels_as_samples=True)


@dataclass
class Minibatch:
    inputs: np.ndarray   # (B, 3, side, side)
    targets: np.ndarray  # (B,) int

    def __post_init__(self):
        if not np.all(np.isfinite(self.inputs)):
            raise ValueError("minibatch inputs must be finite")


class DatasetLoader:
    """Serves standardized minibatches for one binary task.

    Per-channel mean/std are computed once over the un-augmented train
    entries and frozen; val/test pixels never enter the statistics.
    """

    def __init__(self, manifest: DatasetManifest, task: str = "hvi",
                 input_side: int = NETWORK_INPUT_SIDE, dtype=np.float64):
        if task not in TASKS:
            raise ValueError(f"task must be one of {tuple(TASKS)}, got {task}")
        self.manifest = manifest
        self.task = task
        self.label_map = TASKS[task]
        self.input_side = input_side
        self.dtype = np.dtype(dtype)
        self._cache = {}
        self._stats = None

    def task_entries(self, split: str) -> list:
        return [e for e in self.manifest.split_entries(split) if e.label in self.label_map]

    def _raw_channels(self, entry: DatasetEntry) -> np.ndarray:
        key = (entry.patch_path, entry.wavelength_set)
        if key not in self._cache:
            patch = fileio.read_patch(entry.patch_path)
            channels = patch.channels
            if entry.wavelength_set != "rgb":
                idx = ("red", "green", "blue").index(entry.wavelength_set)
                channels = np.repeat(channels[idx:idx + 1], 3, axis=0)
            self._cache[key] = channels.astype(np.float32)
        return self._cache[key].astype(np.float64)

    def _prepared(self, entry: DatasetEntry) -> np.ndarray:
        channels = self._raw_channels(entry)
        if entry.augmentation == "rot45":
            channels = rotate_patch(channels, 45.0)
        elif entry.augmentation == "rot135":
            channels = rotate_patch(channels, 135.0)
        side = self.input_side
        return np.stack([resize_bilinear(ch, (side, side)) for ch in channels])

    @property
    def stats(self):
        """(mean, std) per channel over un-augmented train entries, frozen."""
        if self._stats is None:
            train = [e for e in self.task_entries("train") if e.augmentation == "none"]
            if not train:
                raise ValueError("cannot compute statistics: empty train split")
            acc = np.zeros(3)
            acc2 = np.zeros(3)
            count = 0
            for e in train:
                x = self._raw_channels(e)
                acc += x.sum(axis=(1, 2))
                acc2 += (x * x).sum(axis=(1, 2))
                count += x.shape[1] * x.shape[2]
            mean = acc / count
            var = np.maximum(acc2 / count - mean**2, 1e-12)
            self._stats = (mean, np.sqrt(var))
        return self._stats

    def load_batch(self, entries: list) -> Minibatch:
        mean, std = self.stats
        xs = np.stack([self._prepared(e) for e in entries])
        xs = (xs - mean[None, :, None, None]) / std[None, :, None, None]
        ys = np.array([self.label_map[e.label] for e in entries], dtype=np.int64)
        return Minibatch(inputs=xs.astype(self.dtype), targets=ys)

    def iter_batches(self, split: str, batch_size: int, epoch_seed: int = 0,
                     shuffle: bool = True):
        """Yield minibatches; one seeded shuffle per epoch."""
        entries = self.task_entries(split)
        if not entries:
            raise ValueError(f"split {split!r} has no entries for task {self.task!r}")
        if batch_size < 1:
            raise ValueError("batch size must be >= 1")
        order = np.arange(len(entries))
        if shuffle:
            order = np.random.default_rng(epoch_seed).permutation(len(entries))
        for start in range(0, len(entries), batch_size):
            chunk = [entries[i] for i in order[start:start + batch_size]]
            yield self.load_batch(chunk)
