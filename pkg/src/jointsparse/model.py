"""Generative model for paired intensity-depth signals.

Two signals are sparse in two different dictionaries that share one atom
index set; per-atom activities couple the two coefficient vectors so the
pair has a common sparse support. This module holds the data containers,
synthetic instance generation, normalization, and the dictionary-geometry
measures (coherence and restricted-isometry estimates) used by the
recovery bounds.

Matrices are plain ``numpy`` 2-D float arrays throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BadSparsity, SingleColumn, ZeroOnSupport, ZeroSignal
from .rng import substream


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    """Validate and return a dense real matrix (2-D, finite, non-empty)."""
    m = np.asarray(values, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got ndim={m.ndim}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and column")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite values")
    return m


def as_vector(values, name: str = "vector") -> np.ndarray:
    """Validate and return a dense real vector (1-D, finite)."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got ndim={v.ndim}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite values")
    return v


@dataclass
class DictionaryPair:
    """Per-modality dictionaries sharing one atom index set.

    ``phi_int`` is the intensity dictionary (n_int x n_atoms) and
    ``phi_dep`` the depth dictionary (n_dep x n_atoms). Column i of each
    forms the i-th atom pair. Every column must have positive norm.
    """

    phi_int: np.ndarray
    phi_dep: np.ndarray

    def __post_init__(self):
        self.phi_int = as_matrix(self.phi_int, "phi_int")
        self.phi_dep = as_matrix(self.phi_dep, "phi_dep")
        if self.phi_int.shape[1] != self.phi_dep.shape[1]:
            raise ValueError(
                "dictionaries must have the same atom count, got "
                f"{self.phi_int.shape[1]} and {self.phi_dep.shape[1]}"
            )
        for name, phi in (("phi_int", self.phi_int), ("phi_dep", self.phi_dep)):
            norms = np.linalg.norm(phi, axis=0)
            if np.any(norms <= 0.0):
                raise ValueError(f"{name} has a zero column")

    @property
    def n_atoms(self) -> int:
        return self.phi_int.shape[1]

    @property
    def n_int(self) -> int:
        return self.phi_int.shape[0]

    @property
    def n_dep(self) -> int:
        return self.phi_dep.shape[0]

    def normalized_atoms(self) -> "DictionaryPair":
        """Copy with every column rescaled to unit norm."""
        pi = self.phi_int / np.linalg.norm(self.phi_int, axis=0)
        pd = self.phi_dep / np.linalg.norm(self.phi_dep, axis=0)
        return DictionaryPair(pi, pd)


@dataclass
class SignalPair:
    """One intensity-depth observation pair.

    ``f0`` is the common norm of the two signals; it is set automatically
    when the norms agree (relatively, to 1e-9) and is ``None`` otherwise.
    :func:`normalize_pair` returns pairs with ``f0 = 1``.
    """

    y_int: np.ndarray
    y_dep: np.ndarray
    f0: float | None = None

    def __post_init__(self):
        self.y_int = as_vector(self.y_int, "y_int")
        self.y_dep = as_vector(self.y_dep, "y_dep")
        if self.f0 is None:
            ni = float(np.linalg.norm(self.y_int))
            nd = float(np.linalg.norm(self.y_dep))
            scale = max(ni, nd)
            if scale > 0.0 and abs(ni - nd) <= 1e-9 * scale:
                self.f0 = 0.5 * (ni + nd)
        elif self.f0 <= 0.0:
            raise ValueError("f0 must be positive")


@dataclass
class JointCode:
    """Coefficients and coupling activities for one signal pair.

    The coupling constraints are |a_i| <= u_int * x_i and
    |b_i| <= u_dep * x_i with 0 <= x_i <= 1.
    """

    a: np.ndarray
    b: np.ndarray
    x: np.ndarray
    u_int: float
    u_dep: float

    def __post_init__(self):
        self.a = as_vector(self.a, "a")
        self.b = as_vector(self.b, "b")
        self.x = as_vector(self.x, "x")
        if not (self.a.size == self.b.size == self.x.size):
            raise ValueError("a, b, x must have equal length")
        if self.u_int <= 0.0 or self.u_dep <= 0.0:
            raise ValueError("activity bounds must be positive")

    def max_violation(self) -> float:
        """Worst violation of the box and coupling constraints."""
        box = max(float(np.max(-self.x)), float(np.max(self.x - 1.0)))
        coupling = max(
            float(np.max(np.abs(self.a) - self.u_int * self.x)),
            float(np.max(np.abs(self.b) - self.u_dep * self.x)),
        )
        return max(box, coupling)

    def is_valid(self, tol: float = 1e-6) -> bool:
        return self.max_violation() <= tol


@dataclass
class GroundTruth:
    """Planted support, coefficients, and realized noise of a synthetic pair."""

    support: np.ndarray
    a0: np.ndarray
    b0: np.ndarray
    gamma: float
    noise_int: np.ndarray
    noise_dep: np.ndarray

    def __post_init__(self):
        self.support = np.sort(np.asarray(self.support, dtype=int))
        self.a0 = as_vector(self.a0, "a0")
        self.b0 = as_vector(self.b0, "b0")
        self.noise_int = as_vector(self.noise_int, "noise_int")
        self.noise_dep = as_vector(self.noise_dep, "noise_dep")
        if self.support.size > self.a0.size:
            raise ValueError("support larger than coefficient vector")
        recomputed = gamma_of(self.a0, self.b0, self.support)
        if not math.isclose(self.gamma, recomputed, rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError("gamma inconsistent with coefficients")

    def rescaled(self, scale_int: float, scale_dep: float) -> "GroundTruth":
        """Ground truth matching signals divided by the given scales."""
        a0 = self.a0 / scale_int
        b0 = self.b0 / scale_dep
        return GroundTruth(
            support=self.support,
            a0=a0,
            b0=b0,
            gamma=gamma_of(a0, b0, self.support),
            noise_int=self.noise_int / scale_int,
            noise_dep=self.noise_dep / scale_dep,
        )


@dataclass
class RipEstimate:
    """Estimated restricted-isometry constant for sets of size ``s``.

    ``worst`` mode scales the dictionary coherence, ``mean`` mode the
    average absolute inner product between distinct atoms.
    """

    s: int
    delta: float
    mode: str = "worst"

    def __post_init__(self):
        if self.s < 1:
            raise ValueError("set size must be positive")
        if self.delta < 0.0:
            raise ValueError("delta must be non-negative")
        if self.mode not in ("worst", "mean"):
            raise ValueError(f"unknown mode {self.mode!r}")


def normalize_pair(pair: SignalPair) -> tuple[SignalPair, float, float]:
    """Rescale both signals to unit norm.

    Returns the normalized pair (with ``f0 = 1``) and the two scale
    factors; multiplying the returned signals by their scales recovers
    the inputs exactly.
    """
    ni = float(np.linalg.norm(pair.y_int))
    nd = float(np.linalg.norm(pair.y_dep))
    if ni == 0.0 or nd == 0.0:
        raise ZeroSignal("cannot normalize a zero signal")
    out = SignalPair(pair.y_int / ni, pair.y_dep / nd, f0=1.0)
    return out, ni, nd


def _noise_at_snr(rng: np.random.Generator, signal: np.ndarray, snr_db: float) -> np.ndarray:
    """White Gaussian noise rescaled to hit the requested SNR exactly."""
    if math.isinf(snr_db):
        return np.zeros_like(signal)
    w = rng.standard_normal(signal.size)
    signal_norm = np.linalg.norm(signal)
    w_norm = np.linalg.norm(w)
    if signal_norm == 0.0 or w_norm == 0.0:
        return np.zeros_like(signal)
    return w * (signal_norm * 10.0 ** (-snr_db / 20.0) / w_norm)


def synthesize(
    dicts: DictionaryPair,
    sparsity: int,
    gamma_target: float,
    snr_db: float,
    seed: int,
) -> tuple[SignalPair, GroundTruth]:
    """Draw a planted joint-sparse signal pair.

    The support is uniform without replacement. Per support index the
    larger-magnitude coefficient is uniform on [0.5, 1], the smaller one
    equals the larger times a ratio uniform on [1 - gamma_target, 1]; a
    fair coin picks which modality gets the larger magnitude and the two
    signs are independent fair coins. Noiseless signals are synthesized
    from the dictionaries, then white Gaussian noise is added at the
    requested per-modality SNR (``math.inf`` means noiseless). Signals
    are not renormalized here; apply :func:`normalize_pair` when the
    unit-norm convention is needed.

    The realized dissimilarity of the returned ground truth satisfies
    ``gamma <= gamma_target``.
    """
    n_atoms = dicts.n_atoms
    if sparsity > n_atoms or sparsity < 1:
        raise BadSparsity(f"sparsity {sparsity} not in [1, {n_atoms}]")
    if not 0.0 <= gamma_target < 1.0:
        raise ValueError("gamma_target must be in [0, 1)")

    rng = substream(seed, "synthesize")
    support = np.sort(rng.choice(n_atoms, size=sparsity, replace=False))
    larger = rng.uniform(0.5, 1.0, size=sparsity)
    ratio = rng.uniform(1.0 - gamma_target, 1.0, size=sparsity)
    smaller = larger * ratio
    dep_is_larger = rng.random(sparsity) < 0.5
    sign_int = np.where(rng.random(sparsity) < 0.5, -1.0, 1.0)
    sign_dep = np.where(rng.random(sparsity) < 0.5, -1.0, 1.0)

    a0 = np.zeros(n_atoms)
    b0 = np.zeros(n_atoms)
    a0[support] = sign_int * np.where(dep_is_larger, smaller, larger)
    b0[support] = sign_dep * np.where(dep_is_larger, larger, smaller)

    clean_int = dicts.phi_int @ a0
    clean_dep = dicts.phi_dep @ b0
    noise_int = _noise_at_snr(rng, clean_int, snr_db)
    noise_dep = _noise_at_snr(rng, clean_dep, snr_db)

    pair = SignalPair(clean_int + noise_int, clean_dep + noise_dep)
    truth = GroundTruth(
        support=support,
        a0=a0,
        b0=b0,
        gamma=gamma_of(a0, b0, support),
        noise_int=noise_int,
        noise_dep=noise_dep,
    )
    return pair, truth


def _normalized_offdiag_grams(m: np.ndarray) -> np.ndarray:
    m = as_matrix(m)
    norms = np.linalg.norm(m, axis=0)
    if np.any(norms == 0.0):
        raise ValueError("matrix has a zero column")
    q = m / norms
    gram = np.abs(q.T @ q)
    np.fill_diagonal(gram, 0.0)
    return np.minimum(gram, 1.0)


def coherence(m: np.ndarray) -> float:
    """Maximum absolute inner product between distinct unit-normalized columns."""
    m = as_matrix(m)
    if m.shape[1] < 2:
        raise SingleColumn("coherence needs at least two columns")
    return float(_normalized_offdiag_grams(m).max())


def delta_estimate(m: np.ndarray, s: int, mode: str = "worst") -> RipEstimate:
    """Restricted-isometry estimate for column sets of size ``s``.

    ``worst`` returns coherence * (s - 1), which provably satisfies the
    isometry inequality; ``mean`` replaces the coherence by the mean
    absolute off-diagonal inner product and is an optimistic average-case
    figure, not a certified constant.
    """
    m = as_matrix(m)
    if not 1 <= s <= m.shape[1]:
        raise ValueError(f"s={s} not in [1, {m.shape[1]}]")
    if s == 1:
        return RipEstimate(s=1, delta=0.0, mode=mode)
    gram = _normalized_offdiag_grams(m)
    n = m.shape[1]
    if mode == "worst":
        base = float(gram.max())
    elif mode == "mean":
        base = float(gram.sum() / (n * (n - 1)))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return RipEstimate(s=s, delta=base * (s - 1), mode=mode)


def gamma_of(a0: np.ndarray, b0: np.ndarray, support) -> float:
    """Dissimilarity of the two coefficient vectors over the support.

    Returns 1 minus the worst ratio min(|a_i|/|b_i|, |b_i|/|a_i|) over
    the support; 0 means equal magnitudes everywhere, values near 1 mean
    at least one very unbalanced pair. If exactly one coefficient of a
    pair is zero the ratio is 0; if both are zero the value is undefined
    and :class:`ZeroOnSupport` is raised.
    """
    a0 = as_vector(a0, "a0")
    b0 = as_vector(b0, "b0")
    if a0.size != b0.size:
        raise ValueError("a0 and b0 must have equal length")
    support = np.asarray(support, dtype=int)
    if support.size == 0:
        raise ValueError("support is empty")
    if np.any(support < 0) or np.any(support >= a0.size):
        raise ValueError("support index out of range")
    aa = np.abs(a0[support])
    bb = np.abs(b0[support])
    if np.any((aa == 0.0) & (bb == 0.0)):
        raise ZeroOnSupport("both coefficients vanish on a support index")
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = np.minimum(aa / bb, bb / aa)
    alpha = np.where((aa == 0.0) | (bb == 0.0), 0.0, alpha)
    return float(1.0 - alpha.min())


def block_dict(dicts: DictionaryPair) -> np.ndarray:
    """Block-diagonal stacking of the two dictionaries.

    The result has shape (n_int + n_dep) x (2 * n_atoms) and maps a
    stacked coefficient vector [a; b] to the stacked noiseless signals.
    """
    ni, nd = dicts.n_int, dicts.n_dep
    n_atoms = dicts.n_atoms
    out = np.zeros((ni + nd, 2 * n_atoms))
    out[:ni, :n_atoms] = dicts.phi_int
    out[ni:, n_atoms:] = dicts.phi_dep
    return out


def random_dictionary_pair(
    n_int: int, n_dep: int, n_atoms: int, seed: int
) -> DictionaryPair:
    """Gaussian i.i.d. dictionaries with unit-normalized atoms."""
    rng = substream(seed, "dictionary")
    phi_int = rng.standard_normal((n_int, n_atoms))
    phi_dep = rng.standard_normal((n_dep, n_atoms))
    phi_int /= np.linalg.norm(phi_int, axis=0)
    phi_dep /= np.linalg.norm(phi_dep, axis=0)
    return DictionaryPair(phi_int, phi_dep)
