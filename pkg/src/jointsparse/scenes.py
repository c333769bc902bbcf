"""Synthetic piecewise-planar test scene and a matched patch dictionary.

The scene has a slanted background plane and two raised rectangular
objects; each region carries a sinusoidal intensity grating whose
orientation matches the region's depth slant, and region boundaries show
coinciding intensity and depth edges. These are the two feature
archetypes the coupled model targets: edges that appear in both
modalities and textures on slanted surfaces. The companion dictionary
pairs step-edge atoms across modalities and pairs gratings with ramps of
the same orientation, so the atom index set carries the coupling.
"""

from __future__ import annotations

import numpy as np

from .model import DictionaryPair
from .rng import substream

# per-region grating parameters shared by the scene and the dictionary
_THETAS = (0.0, 45.0, 90.0)
_FREQS = (0.22, 0.25, 0.28)


def piecewise_planar_scene(size: int = 96, seed: int = 7) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic intensity/depth pair in [0, 1], shape (size, size).

    Depth steps across region boundaries are large relative to the
    within-region slants, so edge localization dominates reconstruction
    quality; every boundary coincides with an intensity edge.
    """
    rng = substream(seed, "scene")
    rows = np.arange(size)[:, None] / size
    cols = np.arange(size)[None, :] / size
    pix_r = np.arange(size)[:, None].astype(float)
    pix_c = np.arange(size)[None, :].astype(float)

    regions = [
        # (row0, row1, col0, col1, depth base, slope, theta_idx, freq_idx, amp, brightness)
        (0.00, 1.00, 0.00, 1.00, 0.85, -0.10, 0, 0, 0.15, 0.45),
        (0.08, 0.50, 0.06, 0.46, 0.52, -0.08, 2, 1, 0.24, 0.66),
        (0.42, 0.88, 0.50, 0.94, 0.30, 0.06, 1, 2, 0.20, 0.26),
        (0.60, 0.94, 0.08, 0.42, 0.12, 0.05, 0, 1, 0.18, 0.82),
        (0.06, 0.34, 0.58, 0.90, 0.38, -0.06, 2, 0, 0.22, 0.58),
    ]
    depth = np.zeros((size, size))
    intensity = np.zeros((size, size))
    for r0, r1, c0, c1, base, slope, ti, fi, amp, bright in regions:
        inside = (rows >= r0) & (rows < r1) & (cols >= c0) & (cols < c1)
        theta = np.deg2rad(_THETAS[ti])
        freq = _FREQS[fi]
        # depth slants along the grating wavevector
        along = np.cos(theta) * cols + np.sin(theta) * rows
        phase = float(rng.uniform(0.0, 2.0 * np.pi))
        wave = np.cos(theta) * pix_c + np.sin(theta) * pix_r
        grating = amp * np.sin(2.0 * np.pi * freq * wave + phase)
        depth = np.where(inside, base + slope * along, depth)
        intensity = np.where(inside, bright + grating, intensity)
    return np.clip(intensity, 0.02, 0.98), np.clip(depth, 0.0, 1.0)


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def planted_patch_dictionary(patch_size: int = 8) -> DictionaryPair:
    """Analytic atom pairs matched to the synthetic scene.

    Atom pairs: a DC pair, two plain ramp pairs, step-edge pairs at every
    offset and both axis orientations (same geometry in both modalities),
    and grating/ramp pairs for each orientation-frequency-phase of the
    scene family. Coefficient magnitudes stay free per modality, so the
    pairs only tie locations, not amplitudes.
    """
    p = patch_size
    rr = np.arange(p)[:, None] * np.ones((1, p))
    cc = np.ones((p, 1)) * np.arange(p)[None, :]
    flat = np.ones((p, p))
    ramp_r = rr - rr.mean()
    ramp_c = cc - cc.mean()

    atoms_int: list[np.ndarray] = []
    atoms_dep: list[np.ndarray] = []

    def add(ai, ad):
        atoms_int.append(_unit(ai.ravel()))
        atoms_dep.append(_unit(ad.ravel()))

    add(flat, flat)
    add(ramp_r, ramp_r)
    add(ramp_c, ramp_c)
    for offset in range(1, p):
        step_v = np.where(cc < offset, -1.0, 1.0)
        add(step_v, step_v)
        step_h = np.where(rr < offset, -1.0, 1.0)
        add(step_h, step_h)
    for theta_deg in _THETAS:
        theta = np.deg2rad(theta_deg)
        wave = np.cos(theta) * cc + np.sin(theta) * rr
        ramp = wave - wave.mean()
        for freq in _FREQS:
            for phase in (0.0, 0.5 * np.pi):
                grating = np.sin(2.0 * np.pi * freq * wave + phase)
                add(grating - grating.mean(), ramp)
    return DictionaryPair(np.column_stack(atoms_int), np.column_stack(atoms_dep))
