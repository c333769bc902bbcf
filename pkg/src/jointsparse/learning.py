"""Two-step dictionary learning for paired intensity-depth data.

Learning alternates batch sparse inference (either the conic-program
solver or group lasso) with per-modality dictionary updates by conjugate
gradient. Preprocessing utilities cover spectral whitening of intensity
images and sampling of coinciding patch pairs with missing-pixel masks;
:func:`match_atoms` scores a learned dictionary against a planted one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .baselines import GlOptions, solve_gl_batch
from .errors import Exhausted, SizeMismatch, TooSmall
from .model import DictionaryPair, as_matrix
from .rng import substream
from .solver import JbpProblem, SolverOptions, solve


@dataclass
class WhitenFilter:
    """Radially symmetric frequency-ramp filter with a smooth cutoff.

    The amplitude response at radial frequency f (in cycles per sample,
    Nyquist = 0.5) is ``(f / 0.5) * exp(-((f / 0.5) / cutoff)**exponent)``:
    a ramp that flattens natural 1/f spectra, rolled off by a sharp
    super-Gaussian low-pass reaching 1/e at ``cutoff`` of Nyquist. The
    high exponent keeps the passband flat: a plain Gaussian rolloff
    would tilt the whitened spectrum well before the cutoff.
    """

    cutoff: float = 0.8
    exponent: int = 8

    def response(self, freq: np.ndarray) -> np.ndarray:
        fr = np.asarray(freq, dtype=float) / 0.5
        return fr * np.exp(-((fr / self.cutoff) ** self.exponent))


def whiten(images: list[np.ndarray]) -> tuple[list[np.ndarray], WhitenFilter]:
    """Flatten the frequency spectrum of each image.

    Applies the :class:`WhitenFilter` ramp in the frequency domain. The
    ramp is zero at DC, so outputs are zero-mean; below the cutoff the
    radially averaged spectrum of 1/f-type input becomes approximately
    flat.
    """
    if not images:
        raise ValueError("images must be non-empty")
    filt = WhitenFilter()
    out = []
    for img in images:
        img = as_matrix(img, "image")
        if min(img.shape) < 16:
            raise TooSmall(f"image {img.shape} smaller than 16x16")
        fy = np.fft.fftfreq(img.shape[0])[:, None]
        fx = np.fft.fftfreq(img.shape[1])[None, :]
        freq = np.sqrt(fx**2 + fy**2)
        spectrum = np.fft.fft2(img) * filt.response(freq)
        out.append(np.real(np.fft.ifft2(spectrum)))
    return out, filt


@dataclass
class PatchBatch:
    """Coinciding intensity-depth patch pairs as columns.

    Each column of ``y_int``/``y_dep`` is one vectorized patch; columns
    are unit-normalized (depth over its observed pixels). ``masks`` marks
    valid depth pixels per column.
    """

    y_int: np.ndarray
    y_dep: np.ndarray
    masks: np.ndarray

    def __post_init__(self):
        self.y_int = as_matrix(self.y_int, "y_int")
        self.y_dep = as_matrix(self.y_dep, "y_dep")
        self.masks = np.asarray(self.masks, dtype=bool)
        if self.y_int.shape[1] != self.y_dep.shape[1]:
            raise ValueError("modality batches must have equal column count")
        if self.masks.shape != self.y_dep.shape:
            raise ValueError("masks must match y_dep")

    @property
    def count(self) -> int:
        return self.y_int.shape[1]


def _sample_patches(intensity, depth, masks, size, count, rng) -> PatchBatch:
    n_images = len(intensity)
    if n_images == 0 or len(depth) != n_images:
        raise ValueError("need aligned non-empty intensity/depth lists")
    if masks is None:
        masks = [np.ones_like(d, dtype=bool) for d in depth]
    positions = []
    for img, dep in zip(intensity, depth):
        if img.shape != dep.shape:
            raise ValueError("intensity/depth images must have equal shapes")
        if min(img.shape) < size:
            raise TooSmall(f"image {img.shape} smaller than patch size {size}")
        positions.append((img.shape[0] - size + 1) * (img.shape[1] - size + 1))
    cumulative = np.cumsum(positions)
    total = int(cumulative[-1])

    cols_int, cols_dep, cols_mask = [], [], []
    budget = 10 * count
    drawn = 0
    while len(cols_int) < count and drawn < budget:
        flat = int(rng.integers(total))
        drawn += 1
        k = int(np.searchsorted(cumulative, flat, side="right"))
        local = flat - (0 if k == 0 else int(cumulative[k - 1]))
        w = intensity[k].shape[1] - size + 1
        r, c = divmod(local, w)
        p_int = intensity[k][r : r + size, c : c + size].ravel()
        p_dep = depth[k][r : r + size, c : c + size].ravel()
        p_mask = masks[k][r : r + size, c : c + size].ravel()
        if p_mask.sum() < 0.5 * p_mask.size:
            continue
        n_int = np.linalg.norm(p_int)
        p_dep = np.where(p_mask, p_dep, 0.0)
        n_dep = np.linalg.norm(p_dep)
        if n_int == 0.0 or n_dep == 0.0:
            continue
        cols_int.append(p_int / n_int)
        cols_dep.append(p_dep / n_dep)
        cols_mask.append(p_mask)
    if len(cols_int) < count:
        raise Exhausted(
            f"only {len(cols_int)} valid patches after {drawn} draws (wanted {count})"
        )
    return PatchBatch(
        y_int=np.column_stack(cols_int),
        y_dep=np.column_stack(cols_dep),
        masks=np.column_stack(cols_mask),
    )


def sample_patches(intensity, depth, masks, size: int, count: int, seed: int) -> PatchBatch:
    """Draw coinciding patch pairs uniformly over valid positions.

    Pairs whose depth patch is more than half masked out are discarded,
    as are zero-norm patches; drawing stops with :class:`Exhausted` if
    fewer than ``count`` valid pairs are found within a 10x oversampling
    budget. Patches are unit-normalized (depth over observed pixels).
    """
    return _sample_patches(intensity, depth, masks, size, count, substream(seed, "patches"))


class ImagePatchSource:
    """Batch sampler backed by full images (with optional depth masks)."""

    def __init__(self, intensity, depth, masks=None, patch_size: int = 12):
        self.intensity = [as_matrix(m, "intensity") for m in intensity]
        self.depth = [as_matrix(m, "depth") for m in depth]
        self.masks = masks
        self.patch_size = patch_size

    @property
    def signal_dims(self) -> tuple[int, int]:
        return self.patch_size**2, self.patch_size**2

    def sample(self, count: int, rng: np.random.Generator) -> PatchBatch:
        return _sample_patches(
            self.intensity, self.depth, self.masks, self.patch_size, count, rng
        )


class SignalPool:
    """Batch sampler over a fixed pool of signal-pair columns."""

    def __init__(self, y_int: np.ndarray, y_dep: np.ndarray, masks: np.ndarray | None = None):
        self.y_int = as_matrix(y_int, "y_int")
        self.y_dep = as_matrix(y_dep, "y_dep")
        if self.y_int.shape[1] != self.y_dep.shape[1]:
            raise ValueError("pool modalities must have equal column count")
        if masks is None:
            masks = np.ones_like(self.y_dep, dtype=bool)
        self.masks = np.asarray(masks, dtype=bool)

    @property
    def signal_dims(self) -> tuple[int, int]:
        return self.y_int.shape[0], self.y_dep.shape[0]

    def sample(self, count: int, rng: np.random.Generator) -> PatchBatch:
        j = self.y_int.shape[1]
        take = min(count, j)
        cols = np.sort(rng.choice(j, size=take, replace=False))
        return PatchBatch(self.y_int[:, cols], self.y_dep[:, cols], self.masks[:, cols])


@dataclass
class LearnConfig:
    """Configuration of the two-step learning loop.

    ``eta`` is the per-patch residual fraction used as the solver's ball
    radius (patches are unit norm); ``rho`` scales the dictionary-norm
    penalty of the update step. ``inference`` selects the sparse-coding
    method, ``"jbp"`` or ``"gl"``.
    """

    n_atoms: int
    patch_size: int = 12
    batch_size: int = 200
    n_iterations: int = 20
    eta: float = 0.1
    rho: float = 1e-4
    inference: str = "jbp"
    gl_lambda: float = 0.3
    cg_max: int = 200
    cg_tol: float = 1e-9
    seed: int = 0
    normalize_atoms: bool = True
    penalty_squared: bool = True
    u_bound: float = 1.0
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if not 0.0 < self.eta < 1.0:
            raise ValueError("eta must be in (0, 1)")
        if self.rho < 0.0:
            raise ValueError("rho must be non-negative")
        if self.inference not in ("jbp", "gl"):
            raise ValueError("inference must be 'jbp' or 'gl'")
        if self.n_atoms < 1:
            raise ValueError("n_atoms must be positive")


@dataclass
class LearnHistory:
    """Per-iteration statistics of a learning run."""

    mean_residual_int: list = field(default_factory=list)
    mean_residual_dep: list = field(default_factory=list)
    mean_activity: list = field(default_factory=list)
    atom_change_int: list = field(default_factory=list)
    atom_change_dep: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.mean_residual_int)


def _masked_normal_op(c: np.ndarray, mask: np.ndarray | None, rho: float):
    """Linear operator X -> ((X C) * mask) C^T + rho X and its RHS builder."""
    if mask is None:

        def op(x):
            return (x @ c) @ c.T + rho * x

    else:

        def op(x):
            return ((x @ c) * mask) @ c.T + rho * x

    return op


def _update_one(y, mask, c, phi0, rho, cg_max, cg_tol, penalty_squared):
    """Minimize ||(Y - Phi C) * mask||_F^2 + penalty by conjugate gradient."""
    mask_arr = None if mask is None or mask.all() else mask.astype(float)
    y_obs = y if mask_arr is None else y * mask_arr
    rhs = y_obs @ c.T

    if penalty_squared:
        op = _masked_normal_op(c, mask_arr, rho)
        x = phi0.copy()
        r = rhs - op(x)
        grad0 = 2.0 * np.linalg.norm(r)
        if grad0 == 0.0:
            return x
        p = r.copy()
        rs = float(np.sum(r * r))
        for _ in range(cg_max):
            if 2.0 * np.sqrt(rs) <= cg_tol * (1.0 + grad0):
                break
            ap = op(p)
            denom = float(np.sum(p * ap))
            if denom <= 0.0:
                break
            alpha = rs / denom
            x += alpha * p
            r -= alpha * ap
            rs_new = float(np.sum(r * r))
            p = r + (rs_new / rs) * p
            rs = rs_new
        return x

    # unsquared Frobenius penalty: nonlinear CG (Polak-Ribiere) with an
    # exact line search on the 1-D convex restriction
    quad_op = _masked_normal_op(c, mask_arr, 0.0)

    def grad(x):
        g = 2.0 * (quad_op(x) - rhs)
        nx = np.linalg.norm(x)
        if rho > 0.0 and nx > 0.0:
            g = g + (rho / nx) * x
        return g

    x = phi0.copy()
    g = grad(x)
    g0_norm = np.linalg.norm(g)
    if g0_norm == 0.0:
        return x
    d = -g
    for _ in range(cg_max):
        if np.linalg.norm(g) <= cg_tol * (1.0 + g0_norm):
            break
        qd = quad_op(d)
        q2 = float(np.sum(d * qd))
        if q2 <= 0.0:
            break
        q1 = float(np.sum((2.0 * (quad_op(x) - rhs)) * d))

        def dphi(alpha):
            xa = x + alpha * d
            na = np.linalg.norm(xa)
            pen = 0.0 if (rho == 0.0 or na == 0.0) else (rho / na) * float(np.sum(xa * d))
            return q1 + 2.0 * q2 * alpha + pen

        lo, hi = 0.0, 1.0
        while dphi(hi) < 0.0 and hi < 1e12:
            hi *= 2.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if dphi(mid) < 0.0:
                lo = mid
            else:
                hi = mid
        alpha = 0.5 * (lo + hi)
        if alpha == 0.0:
            break
        x = x + alpha * d
        g_new = grad(x)
        beta = max(0.0, float(np.sum(g_new * (g_new - g))) / float(np.sum(g * g)))
        d = -g_new + beta * d
        g = g_new
    return x


def update_dictionaries(
    batch: PatchBatch,
    a: np.ndarray,
    b: np.ndarray,
    dicts: DictionaryPair,
    rho: float,
    cg_max: int = 200,
    cg_tol: float = 1e-9,
    penalty_squared: bool = True,
    normalize_atoms: bool = True,
) -> DictionaryPair:
    """Dictionary step: fit each modality to the batch at fixed codes.

    Runs conjugate gradient per modality on the masked reconstruction
    error plus ``rho`` times the squared Frobenius norm (or the plain
    norm when ``penalty_squared`` is false). With ``normalize_atoms`` the
    columns are rescaled to unit norm afterwards, coefficients left
    untouched; atoms driven to zero norm (unused with rho > 0) keep their
    previous direction.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    phi_i = _update_one(
        batch.y_int, None, a, dicts.phi_int, rho, cg_max, cg_tol, penalty_squared
    )
    phi_d = _update_one(
        batch.y_dep, batch.masks, b, dicts.phi_dep, rho, cg_max, cg_tol, penalty_squared
    )
    if normalize_atoms:
        for phi, old in ((phi_i, dicts.phi_int), (phi_d, dicts.phi_dep)):
            norms = np.linalg.norm(phi, axis=0)
            dead = norms < 1e-10
            phi[:, dead] = old[:, dead] / np.linalg.norm(old[:, dead], axis=0)
            norms[dead] = 1.0
            phi /= norms
    return DictionaryPair(phi_i, phi_d)


def _infer_batch(batch: PatchBatch, dicts: DictionaryPair, config: LearnConfig):
    j = batch.count
    n = dicts.n_atoms
    a = np.zeros((n, j))
    b = np.zeros((n, j))
    keep = np.ones(j, dtype=bool)
    activity = np.zeros(j)
    if config.inference == "gl":
        opts = GlOptions(lam=config.gl_lambda, max_iter=2000, rel_tol=1e-8)
        a, b, _, _, _ = solve_gl_batch(batch.y_int, batch.y_dep, dicts, opts, batch.masks)
        activity = np.sum(np.sqrt(a**2 + b**2) > 1e-8, axis=0).astype(float)
        return a, b, keep, activity
    for col in range(j):
        mask = batch.masks[:, col]
        problem = JbpProblem(
            y_int=batch.y_int[:, col],
            y_dep=batch.y_dep[:, col],
            phi_int=dicts.phi_int,
            phi_dep=dicts.phi_dep,
            eps_int=config.eta,
            eps_dep=config.eta,
            u_int=config.u_bound,
            u_dep=config.u_bound,
            mask_dep=None if mask.all() else mask,
        )
        sol = solve(problem, config.solver)
        if sol.status == "Infeasible":
            keep[col] = False
            continue
        a[:, col] = sol.code.a
        b[:, col] = sol.code.b
        activity[col] = sol.objective
    return a, b, keep, activity


def learn(dataset, config: LearnConfig) -> tuple[DictionaryPair, LearnHistory]:
    """Two-step learning loop.

    ``dataset`` provides ``signal_dims`` and ``sample(count, rng)``
    (see :class:`ImagePatchSource` and :class:`SignalPool`). Both
    dictionaries start from seeded unit-norm Gaussian atoms; each
    iteration samples a fresh batch, infers codes, and refits the
    dictionaries. Patches whose inference is infeasible are skipped and
    counted in the history. Deterministic given ``config.seed``.
    """
    d_int, d_dep = dataset.signal_dims
    rng = substream(config.seed, "learn-init")
    phi_i = rng.standard_normal((d_int, config.n_atoms))
    phi_d = rng.standard_normal((d_dep, config.n_atoms))
    phi_i /= np.linalg.norm(phi_i, axis=0)
    phi_d /= np.linalg.norm(phi_d, axis=0)
    dicts = DictionaryPair(phi_i, phi_d)

    history = LearnHistory()
    for it in range(config.n_iterations):
        batch = dataset.sample(config.batch_size, substream(config.seed, "learn-batch", it))
        a, b, keep, activity = _infer_batch(batch, dicts, config)
        kept = PatchBatch(batch.y_int[:, keep], batch.y_dep[:, keep], batch.masks[:, keep])
        res_i = batch.y_int[:, keep] - dicts.phi_int @ a[:, keep]
        res_d = (batch.y_dep[:, keep] - dicts.phi_dep @ b[:, keep]) * batch.masks[:, keep]
        new_dicts = update_dictionaries(
            kept,
            a[:, keep],
            b[:, keep],
            dicts,
            config.rho,
            cg_max=config.cg_max,
            cg_tol=config.cg_tol,
            penalty_squared=config.penalty_squared,
            normalize_atoms=config.normalize_atoms,
        )
        history.mean_residual_int.append(float(np.mean(np.linalg.norm(res_i, axis=0))))
        history.mean_residual_dep.append(float(np.mean(np.linalg.norm(res_d, axis=0))))
        history.mean_activity.append(float(np.mean(activity[keep])))
        history.atom_change_int.append(float(np.linalg.norm(new_dicts.phi_int - dicts.phi_int)))
        history.atom_change_dep.append(float(np.linalg.norm(new_dicts.phi_dep - dicts.phi_dep)))
        history.skipped.append(int(np.sum(~keep)))
        dicts = new_dicts
    return dicts, history


@dataclass
class MatchResult:
    """Atom-recovery score of a learned dictionary against a reference.

    ``assignment[j]`` is the learned atom matched to reference atom j;
    ``mse[j]`` the squared distance of the unit-normalized, sign-aligned
    stacked atom pair; ``recovered`` the count below the threshold.
    """

    assignment: np.ndarray
    mse: np.ndarray
    recovered: int


def _stacked_unit_atoms(dicts: DictionaryPair) -> np.ndarray:
    stacked = np.vstack([dicts.phi_int, dicts.phi_dep])
    return stacked / np.linalg.norm(stacked, axis=0)


def match_atoms(
    learned: DictionaryPair, truth: DictionaryPair, threshold: float = 0.05
) -> MatchResult:
    """Optimally match learned atom pairs to reference atom pairs.

    Atoms are compared as stacked intensity+depth columns, unit
    normalized; the assignment maximizes total absolute similarity, signs
    are aligned per pair, and an atom counts as recovered when its
    squared error is below ``threshold``.
    """
    if learned.n_atoms != truth.n_atoms:
        raise SizeMismatch(
            f"atom counts differ: {learned.n_atoms} vs {truth.n_atoms}"
        )
    lu = _stacked_unit_atoms(learned)
    tu = _stacked_unit_atoms(truth)
    sim = np.abs(lu.T @ tu)
    rows, cols = linear_sum_assignment(-sim)
    assignment = np.empty(truth.n_atoms, dtype=int)
    assignment[cols] = rows
    mse = np.empty(truth.n_atoms)
    for j in range(truth.n_atoms):
        i = assignment[j]
        sign = 1.0 if float(lu[:, i] @ tu[:, j]) >= 0.0 else -1.0
        mse[j] = float(np.sum((sign * lu[:, i] - tu[:, j]) ** 2))
    return MatchResult(assignment=assignment, mse=mse, recovered=int(np.sum(mse < threshold)))
