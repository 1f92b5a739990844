"""Binary raster, patch, and checkpoint file formats.

All rasters are little-endian float32, row major, behind a 64-byte header:

    interferogram ("QPI1"):  magic 4s | rows u32 | cols u32 | wavelength_nm u32
                             | pixel_pitch_nm u32 | carrier fx f32 | fy f32
                             | zero padding to 64 bytes
    phase map     ("QPH1"):  same layout with a `wrapped` flag byte after the
                             carrier fields

    patch         ("QPA1"):  magic 4s | label u8 | subject id 16 bytes
                             | 3 x 60 x 60 float32
    checkpoint    ("QPN1"):  magic 4s | spec length u32 | UTF-8 JSON layer-spec
                             table | parameter blobs as float32 in declaration
                             order; training config goes in a text sidecar

Readers notify registered observers with every path they open, which lets
tests audit which files a pipeline stage touched.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .forward_model import CellClass, Interferogram, PhaseMap
from .patch_extraction import PATCH_SIZE, RbcPatch

MAGIC_INTERFEROGRAM = b"QPI1"
MAGIC_PHASE = b"QPH1"
MAGIC_PATCH = b"QPA1"
MAGIC_CHECKPOINT = b"QPN1"
HEADER_SIZE = 64

_LABEL_TO_BYTE = {
    CellClass.HEALTHY: 0,
    CellClass.EARLY_TROPHOZOITE: 1,
    CellClass.LATE_TROPHOZOITE: 2,
    CellClass.UNLABELED: 255,
}
_BYTE_TO_LABEL = {v: k for k, v in _LABEL_TO_BYTE.items()}

_read_observers = []


def add_read_observer(callback):
    """Register callback(path: str); used by file-access audits in tests."""
    _read_observers.append(callback)


def remove_read_observer(callback):
    _read_observers.remove(callback)


def _notify(path):
    for cb in _read_observers:
        cb(str(path))


def _raster_header(magic, rows, cols, wavelength_um, pixel_pitch_um, carrier, wrapped=None):
    head = struct.pack("<4s4I2f", magic, rows, cols,
                       round(wavelength_um * 1000.0), round(pixel_pitch_um * 1000.0),
                       float(carrier[0]), float(carrier[1]))
    if wrapped is not None:
        head += struct.pack("<B", 1 if wrapped else 0)
    return head.ljust(HEADER_SIZE, b"\0")


def _parse_raster_header(buf, expect_magic, has_wrapped):
    magic, rows, cols, wl_nm, pitch_nm, fx, fy = struct.unpack_from("<4s4I2f", buf)
    if magic != expect_magic:
        raise ValueError(f"bad magic {magic!r}, expected {expect_magic!r}")
    wrapped = bool(buf[struct.calcsize('<4s4I2f')]) if has_wrapped else None
    return rows, cols, wl_nm / 1000.0, pitch_nm / 1000.0, (fx, fy), wrapped


def write_interferogram(path, frame: Interferogram):
    with open(path, "wb") as fh:
        fh.write(_raster_header(MAGIC_INTERFEROGRAM, *frame.pixels.shape,
                                frame.wavelength_um, frame.pixel_pitch_um,
                                frame.carrier_cycles_per_px))
        fh.write(frame.pixels.astype("<f4").tobytes())


def read_interferogram(path, subject_id: str = "") -> Interferogram:
    _notify(path)
    with open(path, "rb") as fh:
        rows, cols, wl, pitch, carrier, _ = _parse_raster_header(
            fh.read(HEADER_SIZE), MAGIC_INTERFEROGRAM, has_wrapped=False)
        pixels = np.frombuffer(fh.read(rows * cols * 4), dtype="<f4").reshape(rows, cols)
    return Interferogram(pixels=pixels.astype(np.float64), wavelength_um=wl,
                         carrier_cycles_per_px=carrier, pixel_pitch_um=pitch,
                         subject_id=subject_id)


def write_phase_map(path, phase: PhaseMap, pixel_pitch_um: float = 4.65):
    with open(path, "wb") as fh:
        fh.write(_raster_header(MAGIC_PHASE, *phase.shape, phase.wavelength_um,
                                pixel_pitch_um, (0.0, 0.0), wrapped=phase.wrapped))
        fh.write(phase.values_rad.astype("<f4").tobytes())


def read_phase_map(path) -> PhaseMap:
    _notify(path)
    with open(path, "rb") as fh:
        rows, cols, wl, _, _, wrapped = _parse_raster_header(
            fh.read(HEADER_SIZE), MAGIC_PHASE, has_wrapped=True)
        values = np.frombuffer(fh.read(rows * cols * 4), dtype="<f4").reshape(rows, cols)
    return PhaseMap(values_rad=values.astype(np.float64), wrapped=wrapped, wavelength_um=wl)


def write_patch(path, patch: RbcPatch):
    if not patch.normalized:
        raise ValueError("only normalized 60x60 patches are persisted")
    sid = patch.subject_id.encode("utf-8")[:16].ljust(16, b"\0")
    with open(path, "wb") as fh:
        fh.write(MAGIC_PATCH + struct.pack("<B", _LABEL_TO_BYTE[patch.label]) + sid)
        fh.write(patch.channels.astype("<f4").tobytes())


def read_patch(path) -> RbcPatch:
    _notify(path)
    with open(path, "rb") as fh:
        head = fh.read(4 + 1 + 16)
        if head[:4] != MAGIC_PATCH:
            raise ValueError(f"bad magic {head[:4]!r}, expected {MAGIC_PATCH!r}")
        label = _BYTE_TO_LABEL[head[4]]
        subject = head[5:21].rstrip(b"\0").decode("utf-8")
        data = np.frombuffer(fh.read(3 * PATCH_SIZE * PATCH_SIZE * 4), dtype="<f4")
    channels = data.astype(np.float64).reshape(3, PATCH_SIZE, PATCH_SIZE)
    return RbcPatch(channels=channels, label=label, subject_id=subject,
                    bbox=(0, 0, PATCH_SIZE, PATCH_SIZE), normalized=True)


def write_checkpoint(path, layer_specs: list, arrays: list, sidecar_text: str | None = None):
    """Persist a network: JSON layer-spec table plus float32 parameter blobs."""
    spec_bytes = json.dumps(layer_specs).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC_CHECKPOINT + struct.pack("<I", len(spec_bytes)) + spec_bytes)
        for arr in arrays:
            fh.write(np.asarray(arr).astype("<f4").tobytes())
    if sidecar_text is not None:
        Path(str(path) + ".cfg").write_text(sidecar_text)


def read_checkpoint(path):
    """Returns (layer_specs, flat float64 parameter vector)."""
    _notify(path)
    with open(path, "rb") as fh:
        head = fh.read(8)
        if head[:4] != MAGIC_CHECKPOINT:
            raise ValueError(f"bad magic {head[:4]!r}, expected {MAGIC_CHECKPOINT!r}")
        (spec_len,) = struct.unpack("<I", head[4:])
        layer_specs = json.loads(fh.read(spec_len).decode("utf-8"))
        blob = np.frombuffer(fh.read(), dtype="<f4")
    return layer_specs, blob.astype(np.float64)


def write_jsonl(path, records: list):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_jsonl(path) -> list:
    _notify(path)
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
