"""Single-RBC patch extraction from unwrapped phase maps.

The flow: per-pixel Shannon entropy of the local phase histogram, threshold,
8-connected component labelling, small-artifact rejection, touching-cell
separation on the distance transform, overlap exclusion, and tight-box
cropping of all three wavelength channels resampled to 60x60.

Entropy of an n x n neighbourhood: phase values are quantized into L uniform
bins over the image's global range, P_i = f(i) / n^2, and

    entropy = -sum_i P_i ln P_i,

so 0 <= entropy <= ln L. Natural log: the 1.0 operating threshold then sits
between a two-bin window (ln 2 ~ 0.69) and a four-bin window (ln 4 ~ 1.39),
which is where flat background separates from cell texture.
"""

from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .forward_model import CellClass, PhaseMap

PATCH_SIZE = 60
MIN_COMPONENT_AREA = 1600  # 40 x 40 px
DEFAULT_REFERENCE_AREA = math.pi * 26.0**2  # default synthetic cell, radius ~26 px


@dataclass
class EntropyMap:
    """Per-pixel local phase entropy (natural log units)."""

    values: np.ndarray
    window_px: int
    bin_count: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.bin_count < 2:
            raise ValueError("bin count must be >= 2")
        if np.any(self.values < -1e-9) or np.any(self.values > math.log(self.bin_count) + 1e-9):
            raise ValueError("entropy values must lie in [0, ln L]")


@dataclass
class Component:
    """One labelled connected region."""

    label: int
    area: int
    bbox: tuple  # (row, col, height, width)
    mask: np.ndarray  # full-frame boolean mask


@dataclass
class RbcPatch:
    """Single-cell 3-channel phase patch in red/green/blue order."""

    channels: np.ndarray  # (3, h, w)
    label: CellClass
    subject_id: str
    bbox: tuple  # (row, col, height, width) in source coordinates
    normalized: bool

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.float64)
        if self.channels.ndim != 3 or self.channels.shape[0] != 3:
            raise ValueError("patch needs 3 equally shaped channels")
        if self.normalized and self.channels.shape[1:] != (PATCH_SIZE, PATCH_SIZE):
            raise ValueError(f"normalized patches are {PATCH_SIZE}x{PATCH_SIZE}")


@dataclass
class ExtractionConfig:
    window_px: int = 9
    bin_count: int = 256
    threshold: float = 1.0
    min_area: int = MIN_COMPONENT_AREA
    seed_min_separation: float = 10.0
    fragment_fraction: float = 0.5
    reference_area: float = DEFAULT_REFERENCE_AREA
    margin_px: int = 2
    patch_size: int = PATCH_SIZE
    segmentation_channel: str = "mean"  # red | green | blue | mean


def entropy_map(phase: PhaseMap, window_px: int = 9, bin_count: int = 256) -> EntropyMap:
    """Local Shannon entropy of the phase histogram; edges are replicated.

    Window histogram counts come from per-bin integral images computed in
    float32, which is exact here (counts and their prefix sums stay far below
    2**24), so P_i is an exact multiple of 1/n^2.
    """
    values = phase.values_rad if isinstance(phase, PhaseMap) else np.asarray(phase, dtype=np.float64)
    n, L = window_px, bin_count
    rows, cols = values.shape
    if n % 2 == 0 or n < 3 or n > min(rows, cols):
        raise ValueError(f"window must be odd and in [3, min(shape)], got {n}")
    if L < 2:
        raise ValueError(f"bin count must be >= 2, got {L}")
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return EntropyMap(values=np.zeros_like(values), window_px=n, bin_count=L)
    binned = np.clip(((values - lo) * (L / (hi - lo))).astype(np.int64), 0, L - 1)
    padded = np.pad(binned, n // 2, mode="edge")
    present = np.unique(binned)
    entropy = np.zeros_like(values)
    inv_area = 1.0 / (n * n)
    for start in range(0, present.size, 32):
        bins = present[start:start + 32]
        onehot = (padded[None, :, :] == bins[:, None, None]).astype(np.float32)
        ii = np.zeros((bins.size, padded.shape[0] + 1, padded.shape[1] + 1), dtype=np.float32)
        np.cumsum(onehot, axis=1, out=ii[:, 1:, 1:])
        np.cumsum(ii[:, 1:, 1:], axis=2, out=ii[:, 1:, 1:])
        counts = (ii[:, n:, n:] - ii[:, :-n, n:] - ii[:, n:, :-n] + ii[:, :-n, :-n])
        p = counts.astype(np.float64) * inv_area
        np.clip(p, 0.0, 1.0, out=p)
        contrib = np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
        entropy -= contrib.sum(axis=0)
    np.clip(entropy, 0.0, math.log(L), out=entropy)
    return EntropyMap(values=entropy, window_px=n, bin_count=L)


@dataclass
class Segmentation:
    mask: np.ndarray
    labels: np.ndarray
    components: list


def segment_cells(em: EntropyMap, threshold: float = 1.0) -> Segmentation:
    """Threshold the entropy map and label 8-connected components."""
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    mask = em.values >= threshold
    labels, count = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    components = []
    slices = ndimage.find_objects(labels)
    for lab in range(1, count + 1):
        sl = slices[lab - 1]
        comp_mask = labels == lab
        area = int(comp_mask.sum())
        bbox = (sl[0].start, sl[1].start, sl[0].stop - sl[0].start, sl[1].stop - sl[1].start)
        components.append(Component(label=lab, area=area, bbox=bbox, mask=comp_mask))
    return Segmentation(mask=mask, labels=labels, components=components)


def reject_artifacts(components: list, min_area: int = MIN_COMPONENT_AREA) -> list:
    """Drop every component smaller than the area floor."""
    return [c for c in components if c.area >= min_area]


def _distance_seeds(dt: np.ndarray, mask: np.ndarray, min_separation: float) -> list:
    """Local maxima of the distance transform after 3x3 NMS and separation pruning.

    A connected plateau of equal-depth maxima (e.g. the ring crest of an
    annular mask) collapses to a single seed, its lexicographically smallest
    pixel, before the separation rule is applied.
    """
    local_max = (ndimage.maximum_filter(dt, size=3, mode="constant") == dt) & mask & (dt > 0)
    plateau_labels, count = ndimage.label(local_max, structure=np.ones((3, 3), dtype=int))
    if count == 0:
        return []
    candidates = []
    for lab in range(1, count + 1):
        rr, cc = np.nonzero(plateau_labels == lab)
        k = np.lexsort((cc, rr))[0]
        candidates.append((float(dt[rr[k], cc[k]]), int(rr[k]), int(cc[k])))
    candidates.sort(key=lambda t: (-t[0], t[1], t[2]))  # deepest first; (row, col) on ties
    seeds = []
    for _, r, c in candidates:
        if all(math.hypot(r - r0, c - c0) >= min_separation for r0, c0 in seeds):
            seeds.append((r, c))
    return seeds


def split_touching(mask: np.ndarray, min_separation: float = 10.0) -> list:
    """Separate touching cells inside one component mask.

    Seeds are distance-transform maxima; regions grow from the seeds
    simultaneously in order of descending distance value (priority flood),
    a marker-based stand-in for a random-walker solve. The returned masks
    partition the input exactly, one per seed.
    """
    mask = np.asarray(mask, dtype=bool)
    dt = ndimage.distance_transform_edt(mask)
    seeds = _distance_seeds(dt, mask, min_separation)
    if len(seeds) <= 1:
        return [mask.copy()]
    assign = np.full(mask.shape, -1, dtype=np.int32)
    heap = []
    for sid, (r, c) in enumerate(seeds):
        heapq.heappush(heap, (-dt[r, c], r, c, sid))
    while heap:
        _, r, c, sid = heapq.heappop(heap)
        if assign[r, c] != -1:
            continue
        assign[r, c] = sid
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nr, nc = r + dr, c + dc
            if 0 <= nr < mask.shape[0] and 0 <= nc < mask.shape[1] \
                    and mask[nr, nc] and assign[nr, nc] == -1:
                heapq.heappush(heap, (-dt[nr, nc], nr, nc, sid))
    parts = [assign == sid for sid in range(len(seeds))]
    # A seed swallowed by a deeper basin before its own turn claims nothing;
    # an empty region is not a component.
    return [p for p in parts if p.any()]


def classify_overlap(sub_masks: list, reference_area: float,
                     fragment_fraction: float = 0.5) -> str:
    """'overlapping' when splitting left a fragment under half a typical cell."""
    if len(sub_masks) <= 1:
        return "separable"
    areas = [int(m.sum()) for m in sub_masks]
    if min(areas) < fragment_fraction * reference_area:
        return "overlapping"
    return "separable"


def resize_bilinear(image: np.ndarray, out_shape: tuple) -> np.ndarray:
    """Bilinear resample with half-pixel-centre coordinate mapping."""
    in_r, in_c = image.shape
    out_r, out_c = out_shape
    rr = (np.arange(out_r) + 0.5) * (in_r / out_r) - 0.5
    cc = (np.arange(out_c) + 0.5) * (in_c / out_c) - 0.5
    grid = np.meshgrid(rr, cc, indexing="ij")
    return ndimage.map_coordinates(image, grid, order=1, mode="nearest")


def crop_patches(components: list, phases: dict, label: CellClass = CellClass.UNLABELED,
                 subject_id: str = "", margin_px: int = 2,
                 patch_size: int = PATCH_SIZE) -> list:
    """Tight-box crop (+margin) of all three channels, resampled to 60x60.

    `components` holds full-frame boolean masks (or Component objects);
    `phases` maps red/green/blue to co-registered PhaseMaps.
    """
    maps = {ch: phases[ch].values_rad for ch in ("red", "green", "blue")}
    shape = maps["red"].shape
    if any(m.shape != shape for m in maps.values()):
        raise ValueError("the three phase maps must be co-registered and same shape")
    patches = []
    skipped = 0
    for comp in components:
        mask = comp.mask if isinstance(comp, Component) else np.asarray(comp, dtype=bool)
        rr, cc = np.nonzero(mask)
        if rr.size == 0:
            skipped += 1
            continue
        r0 = max(int(rr.min()) - margin_px, 0)
        r1 = min(int(rr.max()) + margin_px + 1, shape[0])
        c0 = max(int(cc.min()) - margin_px, 0)
        c1 = min(int(cc.max()) + margin_px + 1, shape[1])
        channels = np.stack([
            resize_bilinear(maps[ch][r0:r1, c0:c1], (patch_size, patch_size))
            for ch in ("red", "green", "blue")
        ])
        patches.append(RbcPatch(channels=channels, label=label, subject_id=subject_id,
                                bbox=(r0, c0, r1 - r0, c1 - c0), normalized=True))
    if skipped:
        warnings.warn(f"skipped {skipped} empty component(s)", stacklevel=2)
    return patches


def extract_patches(phases: dict, config: ExtractionConfig = ExtractionConfig(),
                    label: CellClass = CellClass.UNLABELED, subject_id: str = "") -> dict:
    """Full extraction flow on one co-registered three-channel field of view.

    Returns {"patches": [...], "excluded_overlaps": n, "rejected_small": n}.
    """
    if config.segmentation_channel == "mean":
        seg_values = np.mean([phases[ch].values_rad for ch in ("red", "green", "blue")], axis=0)
        seg_phase = PhaseMap(values_rad=seg_values, wrapped=False,
                             wavelength_um=phases["green"].wavelength_um)
    else:
        seg_phase = phases[config.segmentation_channel]
    em = entropy_map(seg_phase, window_px=config.window_px, bin_count=config.bin_count)
    seg = segment_cells(em, threshold=config.threshold)
    kept = reject_artifacts(seg.components, min_area=config.min_area)
    rejected_small = len(seg.components) - len(kept)

    cell_masks = []
    excluded = 0
    for comp in kept:
        subs = split_touching(comp.mask, min_separation=config.seed_min_separation)
        verdict = classify_overlap(subs, config.reference_area, config.fragment_fraction)
        if verdict == "overlapping":
            excluded += 1
            continue
        cell_masks.extend(subs)
    patches = crop_patches(cell_masks, phases, label=label, subject_id=subject_id,
                           margin_px=config.margin_px, patch_size=config.patch_size)
    return {"patches": patches, "excluded_overlaps": excluded, "rejected_small": rejected_small}
