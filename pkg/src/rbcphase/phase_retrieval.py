"""Phase retrieval from one off-axis interferogram.

Fourier fringe analysis: 2-D FFT, hard circular mask over one first-order
lobe, recentre the lobe on DC, inverse FFT. The argument of the resulting
complex field is the wrapped phase; Goldstein branch-cut unwrapping then
removes the 2 pi ambiguities:

1. residues: every 2x2 plaquette whose four rewrapped phase differences sum
   to +-2 pi marks an unwrapping obstruction of that sign;
2. branch cuts: residues are paired greedily with the nearest opposite
   charge (or the image border, whichever is closer) inside a box search
   radius that doubles until a partner is found; cuts are rasterized as
   8-connected pixel lines;
3. integration: a 4-connected flood fill from a seed pixel accumulates
   rewrapped gradients without stepping onto cut pixels;
4. continuation: pixels isolated by cuts (and the cut pixels themselves)
   are filled last from their nearest unwrapped neighbour and flagged False
   in the output quality mask.

The unwrapped result is defined modulo a global 2 pi k plus the seed offset;
comparisons should remove the best-fit constant first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFieldError, FilterError, NotWrappedError
from .forward_model import Interferogram, PhaseMap

TWO_PI = 2.0 * math.pi


@dataclass
class ComplexField:
    """Filtered first-order complex field; values = re + i*im."""

    values: np.ndarray
    wavelength_um: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.ndim != 2:
            raise ValueError("field must be a 2-D array")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @property
    def re(self):
        return self.values.real

    @property
    def im(self):
        return self.values.imag


@dataclass(frozen=True)
class Residue:
    """Phase residue at a 2x2 plaquette corner."""

    position: tuple  # (row, col) of the top-left plaquette pixel
    charge: int      # +1 or -1

    def __post_init__(self):
        if self.charge not in (-1, 1):
            raise ValueError(f"residue charge must be +-1, got {self.charge}")


@dataclass(frozen=True)
class FringeFilter:
    """Circular pass band: centre offset from DC in FFT bins, radius in bins."""

    center_bin: tuple  # (row offset, col offset) relative to DC
    radius_bins: float


def wrap_to_pi(x):
    """Rewrap values into (-pi, pi]."""
    return math.pi - np.mod(math.pi - np.asarray(x, dtype=np.float64), TWO_PI)


def detect_carrier_bin(pixels: np.ndarray, guard_bins: int = 2) -> tuple:
    """Largest spectral peak outside a DC guard, searched in the upper half-plane.

    The spectrum of a real image is conjugate symmetric, so restricting the
    search to offsets with row > 0 (or row == 0, col > 0) loses nothing and
    makes the choice between the +-1 twins deterministic.
    """
    rows, cols = pixels.shape
    spectrum = np.abs(np.fft.fftshift(np.fft.fft2(pixels)))
    r0, c0 = rows // 2, cols // 2
    uu, vv = np.ogrid[-r0:rows - r0, -c0:cols - c0]
    allowed = (uu > 0) | ((uu == 0) & (vv > 0))
    allowed &= uu**2 + vv**2 > guard_bins**2
    spectrum = np.where(allowed, spectrum, -1.0)
    idx = np.unravel_index(int(np.argmax(spectrum)), spectrum.shape)
    return (idx[0] - r0, idx[1] - c0)


def default_filter(pixels: np.ndarray) -> FringeFilter:
    """Auto filter: centred on the largest non-DC peak, radius half its DC distance."""
    center = detect_carrier_bin(pixels)
    return FringeFilter(center_bin=center, radius_bins=math.hypot(*center) / 2.0)


def extract_complex_field(frame: Interferogram, filt: FringeFilter | None = None,
                          window: bool = False) -> ComplexField:
    """Isolate one first-order lobe and demodulate it to DC."""
    pixels = frame.pixels
    rows, cols = pixels.shape
    if window:
        pixels = pixels * np.outer(np.hanning(rows), np.hanning(cols))
    if filt is None:
        filt = default_filter(pixels)
    u, v = filt.center_bin
    r = float(filt.radius_bins)
    if r < 2.0:
        raise FilterError(f"filter radius must be >= 2 bins, got {r}")
    if math.hypot(u, v) <= r:
        raise FilterError(f"filter circle (centre {filt.center_bin}, radius {r:.1f}) touches the DC bin")
    r0, c0 = rows // 2, cols // 2
    if not (-r0 <= u - r and u + r <= rows - 1 - r0 and -c0 <= v - r and v + r <= cols - 1 - c0):
        raise FilterError(f"filter circle (centre {filt.center_bin}, radius {r:.1f}) leaves the spectrum")

    spectrum = np.fft.fftshift(np.fft.fft2(pixels))
    uu, vv = np.ogrid[-r0:rows - r0, -c0:cols - c0]
    mask = (uu - u) ** 2 + (vv - v) ** 2 <= r * r
    recentred = np.roll(spectrum * mask, (-u, -v), axis=(0, 1))
    field = np.fft.ifft2(np.fft.ifftshift(recentred))
    return ComplexField(values=field, wavelength_um=frame.wavelength_um)


def amplitude(field: ComplexField) -> np.ndarray:
    """Companion amplitude map |field|."""
    return np.hypot(field.re, field.im)


def wrapped_phase(field: ComplexField) -> PhaseMap:
    """Per-pixel arg of the field, in (-pi, pi]."""
    if not np.any(field.values):
        raise DegenerateFieldError("all-zero field has no phase")
    ang = np.arctan2(field.im, field.re)
    ang[ang == -math.pi] = math.pi
    return PhaseMap(values_rad=ang, wrapped=True, wavelength_um=field.wavelength_um)


def find_residues(wrapped: PhaseMap) -> list:
    """Residues of the wrapped gradient field, one per charged 2x2 plaquette."""
    if not wrapped.wrapped:
        raise NotWrappedError("residues are defined on wrapped phase")
    phi = wrapped.values_rad
    if phi.shape[0] < 2 or phi.shape[1] < 2:
        return []
    right = wrap_to_pi(np.diff(phi, axis=1))  # phi[i, j+1] - phi[i, j]
    down = wrap_to_pi(np.diff(phi, axis=0))   # phi[i+1, j] - phi[i, j]
    # Loop a->b->c->d->a around each plaquette (a = top-left):
    circulation = right[:-1, :] + down[:, 1:] - right[1:, :] - down[:, :-1]
    charges = np.rint(circulation / TWO_PI).astype(int)
    out = []
    for i, j in zip(*np.nonzero(charges)):
        out.append(Residue(position=(int(i), int(j)), charge=int(charges[i, j])))
    return out


def _draw_line(mask, p0, p1):
    """Mark an 8-connected pixel line from p0 to p1 inclusive (Bresenham)."""
    r0, c0 = p0
    r1, c1 = p1
    dr, dc = abs(r1 - r0), abs(c1 - c0)
    sr = 1 if r1 >= r0 else -1
    sc = 1 if c1 >= c0 else -1
    err = dr - dc
    r, c = r0, c0
    while True:
        mask[r, c] = True
        if (r, c) == (r1, c1):
            return
        e2 = 2 * err
        if e2 > -dc:
            err -= dc
            r += sr
        if e2 < dr:
            err += dr
            c += sc


def branch_cut_mask(residues: list, shape: tuple) -> np.ndarray:
    """Rasterized branch cuts pairing opposite charges or reaching the border.

    Residues are visited in lexicographic position order. For each one still
    unbalanced, a Chebyshev box search with doubling radius looks for the
    nearest unbalanced opposite-charge residue; if the image border is at
    least as close as the best partner (or no partner exists inside the
    box), the cut runs straight to the nearest border point instead.
    Euclidean-distance ties break on lexicographic position.
    """
    rows, cols = shape
    cuts = np.zeros(shape, dtype=bool)
    order = sorted(residues, key=lambda res: res.position)
    balanced = [False] * len(order)
    positions = [res.position for res in order]
    max_radius = max(rows, cols)

    for i, res in enumerate(order):
        if balanced[i]:
            continue
        ri, ci = res.position
        border_dist = min(ri + 1, ci + 1, rows - 1 - ri, cols - 1 - ci)
        radius = 1
        while True:
            best = None  # (distance, position, index)
            for k, other in enumerate(order):
                if balanced[k] or k == i or other.charge == res.charge:
                    continue
                rk, ck = positions[k]
                if max(abs(rk - ri), abs(ck - ci)) > radius:
                    continue
                cand = (math.hypot(rk - ri, ck - ci), (rk, ck), k)
                if best is None or cand[:2] < best[:2]:
                    best = cand
            if best is not None and best[0] <= border_dist:
                _draw_line(cuts, (ri, ci), best[1])
                balanced[i] = balanced[best[2]] = True
                break
            if border_dist <= radius or radius >= max_radius:
                target = _nearest_border_point((ri, ci), shape)
                _draw_line(cuts, (ri, ci), target)
                balanced[i] = True
                break
            radius *= 2
    return cuts


def _nearest_border_point(pos, shape):
    rows, cols = shape
    r, c = pos
    dists = (r, rows - 1 - r, c, cols - 1 - c)
    side = int(np.argmin(dists))
    return ((0, c), (rows - 1, c), (r, 0), (r, cols - 1))[side]


def _flood_integrate(phi, blocked, out, done, seeds_rc):
    """Vectorized BFS accumulating rewrapped gradients from the seed front.

    Neighbour priority is fixed (up, down, left, right) and claims are
    resolved through the `done` mask, so the result does not depend on the
    order of pixels inside a frontier.
    """
    rows, cols = phi.shape
    frontier_r, frontier_c = seeds_rc
    while frontier_r.size:
        next_r, next_c = [], []
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nr = frontier_r + dr
            nc = frontier_c + dc
            ok = (nr >= 0) & (nr < rows) & (nc >= 0) & (nc < cols)
            if not ok.any():
                continue
            nr, nc = nr[ok], nc[ok]
            sr, sc = frontier_r[ok], frontier_c[ok]
            free = ~(done[nr, nc] | blocked[nr, nc])
            if not free.any():
                continue
            nr, nc, sr, sc = nr[free], nc[free], sr[free], sc[free]
            out[nr, nc] = out[sr, sc] + wrap_to_pi(phi[nr, nc] - phi[sr, sc])
            done[nr, nc] = True
            next_r.append(nr)
            next_c.append(nc)
        if next_r:
            frontier_r = np.concatenate(next_r)
            frontier_c = np.concatenate(next_c)
        else:
            break


def _pick_seed(cuts, amp):
    """Highest-amplitude pixel not 8-adjacent to a cut; lexicographic ties."""
    eligible = ~cuts
    if cuts.any():
        padded = np.pad(cuts, 1)
        near = np.zeros_like(cuts)
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                near |= padded[1 + dr:1 + dr + cuts.shape[0], 1 + dc:1 + dc + cuts.shape[1]]
        if (~near).any():
            eligible = ~near
    if not eligible.any():
        raise DegenerateFieldError("no pixel available to seed the unwrap")
    score = np.where(eligible, amp, -np.inf)
    return np.unravel_index(int(np.argmax(score)), cuts.shape)  # argmax is first in scan order


def goldstein_unwrap(wrapped: PhaseMap, amplitude_map: np.ndarray | None = None) -> PhaseMap:
    """Branch-cut unwrap; the output quality mask is False on continuation fills."""
    if not wrapped.wrapped:
        raise NotWrappedError("goldstein_unwrap expects a wrapped phase map")
    phi = wrapped.values_rad
    rows, cols = phi.shape
    amp = np.zeros_like(phi) if amplitude_map is None else np.asarray(amplitude_map, dtype=np.float64)
    if amp.shape != phi.shape:
        raise ValueError("amplitude map shape must match the phase map")

    cuts = branch_cut_mask(find_residues(wrapped), phi.shape)
    seed = _pick_seed(cuts, amp)

    out = np.zeros_like(phi)
    done = np.zeros(phi.shape, dtype=bool)
    out[seed] = phi[seed]
    done[seed] = True
    seeds = (np.array([seed[0]]), np.array([seed[1]]))
    _flood_integrate(phi, cuts, out, done, seeds)

    quality = done.copy()
    if not done.all():
        # Fill cut and isolated pixels from the unwrapped front, ignoring cuts.
        front = np.nonzero(done)
        _flood_integrate(phi, np.zeros_like(cuts), out, done, front)
    return PhaseMap(values_rad=out, wrapped=False, wavelength_um=wrapped.wavelength_um,
                    quality=quality)


def plane_fit_subtract(values: np.ndarray, amplitude_map: np.ndarray | None = None,
                       drop_lowest_decile: bool = True) -> np.ndarray:
    """Remove the least-squares background plane from an unwrapped phase map.

    Pixels in the lowest amplitude decile (unreliable phase) are excluded
    from the fit; the fitted plane is subtracted everywhere.
    """
    rows, cols = values.shape
    rr, cc = np.meshgrid(np.arange(rows, dtype=np.float64),
                         np.arange(cols, dtype=np.float64), indexing="ij")
    if amplitude_map is not None and drop_lowest_decile:
        keep = amplitude_map >= np.quantile(amplitude_map, 0.1)
    else:
        keep = np.ones(values.shape, dtype=bool)
    a = np.column_stack([np.ones(int(keep.sum())), rr[keep], cc[keep]])
    coef, *_ = np.linalg.lstsq(a, values[keep], rcond=None)
    return values - (coef[0] + coef[1] * rr + coef[2] * cc)


def retrieve(frame: Interferogram, filt: FringeFilter | None = None,
             plane_fit: bool = True, window: bool = False):
    """Full single-frame pipeline: extract, wrap, unwrap, de-tilt.

    Returns (unwrapped PhaseMap, amplitude ndarray).
    """
    field = extract_complex_field(frame, filt=filt, window=window)
    amp = amplitude(field)
    unwrapped = goldstein_unwrap(wrapped_phase(field), amplitude_map=amp)
    values = unwrapped.values_rad
    if plane_fit:
        values = plane_fit_subtract(values, amplitude_map=amp)
    return (PhaseMap(values_rad=values, wrapped=False,
                     wavelength_um=frame.wavelength_um, quality=unwrapped.quality), amp)
