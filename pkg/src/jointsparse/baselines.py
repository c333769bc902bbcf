"""Comparison methods: group lasso over atom pairs, and TV inpainting.

The group-lasso objective treats each atom pair's coefficients as one
group::

    ||y_int - phi_int a||^2 + ||y_dep - phi_dep b||^2
        + lam * sum_i sqrt(a_i^2 + b_i^2)

and is minimized by accelerated proximal gradient (FISTA) with pairwise
soft-thresholding and a monotone restart. The data terms carry no 1/2
factor, so on orthonormal dictionaries the fixed point shrinks each pair
(y_int_i, y_dep_i) by max(0, 1 - lam / (2 ||pair||)).

TV inpainting minimizes isotropic discrete total variation subject to
exact agreement with the observed pixels, via a primal-dual scheme with
the observation constraint projected every iteration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMask
from .model import DictionaryPair, as_matrix, as_vector


@dataclass
class GlOptions:
    """Group-lasso solve configuration.

    ``step`` defaults to the inverse gradient Lipschitz constant of the
    data terms, 1 / (2 * max squared spectral norm of the dictionaries).
    """

    lam: float
    max_iter: int = 10000
    rel_tol: float = 1e-8
    step: float | None = None

    def __post_init__(self):
        if self.lam <= 0.0:
            raise ValueError("lam must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")


@dataclass
class GlResult:
    """Coefficients plus convergence diagnostics; ``converged`` is False
    when ``rel_tol`` was not reached within ``max_iter``."""

    a: np.ndarray
    b: np.ndarray
    objective: float
    iterations: int
    converged: bool


@dataclass
class TvOptions:
    """TV inpainting configuration.

    ``weight`` balances the primal and dual step sizes of the scheme
    (their product stays fixed); it affects the convergence path, not
    the constrained minimizer being approximated.
    """

    weight: float = 1.0
    max_iter: int = 500
    tol: float = 1e-6

    def __post_init__(self):
        if self.weight <= 0.0:
            raise ValueError("weight must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")


def spectral_norm_sq(m: np.ndarray, iters: int = 50, tol: float = 1e-10) -> float:
    """Largest squared singular value, by power iteration on m^T m."""
    m = np.asarray(m, dtype=float)
    v = np.ones(m.shape[1]) / np.sqrt(m.shape[1])
    prev = 0.0
    for _ in range(iters):
        w = m.T @ (m @ v)
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 0.0
        v = w / lam
        if abs(lam - prev) <= tol * max(1.0, lam):
            break
        prev = lam
    return lam


def _group_shrink(a: np.ndarray, b: np.ndarray, thresh: float) -> tuple[np.ndarray, np.ndarray]:
    norms = np.sqrt(a**2 + b**2)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.maximum(0.0, 1.0 - thresh / norms)
    scale[norms == 0.0] = 0.0
    return a * scale, b * scale


def solve_gl_batch(
    y_int: np.ndarray,
    y_dep: np.ndarray,
    dicts: DictionaryPair,
    opts: GlOptions,
    mask_dep: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int, bool]:
    """Group-lasso solve for a batch of column signals.

    ``y_int`` and ``y_dep`` are (n x J) matrices of J independent signal
    pairs sharing the dictionaries; ``mask_dep`` (same shape as
    ``y_dep``) restricts the depth data term to observed entries.
    Returns (A, B, objectives, iterations, converged).
    """
    y_int = np.atleast_2d(np.asarray(y_int, dtype=float))
    y_dep = np.atleast_2d(np.asarray(y_dep, dtype=float))
    phi_i, phi_d = dicts.phi_int, dicts.phi_dep
    n_atoms = dicts.n_atoms
    n_sig = y_int.shape[1]
    if mask_dep is None:
        mask = np.ones_like(y_dep, dtype=bool)
    else:
        mask = np.asarray(mask_dep, dtype=bool)
        if mask.shape != y_dep.shape:
            raise ValueError("mask_dep must match y_dep")
    y_dep_obs = np.where(mask, y_dep, 0.0)

    lam = opts.lam
    if opts.step is None:
        lips = 2.0 * max(spectral_norm_sq(phi_i), spectral_norm_sq(phi_d))
        step = 1.0 / lips if lips > 0.0 else 1.0
    else:
        step = opts.step

    def objective(a, b):
        r_i = phi_i @ a - y_int
        r_d = np.where(mask, phi_d @ b - y_dep_obs, 0.0)
        fit = np.sum(r_i * r_i, axis=0) + np.sum(r_d * r_d, axis=0)
        return fit + lam * np.sum(np.sqrt(a**2 + b**2), axis=0)

    a = np.zeros((n_atoms, n_sig))
    b = np.zeros((n_atoms, n_sig))
    va, vb = a.copy(), b.copy()
    t_mom = 1.0
    f_prev = objective(a, b)
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        grad_a = 2.0 * (phi_i.T @ (phi_i @ va - y_int))
        r_d = np.where(mask, phi_d @ vb - y_dep_obs, 0.0)
        grad_b = 2.0 * (phi_d.T @ r_d)
        a_new, b_new = _group_shrink(va - step * grad_a, vb - step * grad_b, step * lam)
        f_new = objective(a_new, b_new)
        if np.any(f_new > f_prev + 1e-15):
            # momentum overshot; restart from the last accepted point
            t_mom = 1.0
            va, vb = a.copy(), b.copy()
            a_new, b_new = _group_shrink(va - step * 2.0 * (phi_i.T @ (phi_i @ va - y_int)),
                                         vb - step * 2.0 * (phi_d.T @ np.where(mask, phi_d @ vb - y_dep_obs, 0.0)),
                                         step * lam)
            f_new = objective(a_new, b_new)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom**2))
        beta = (t_mom - 1.0) / t_next
        va = a_new + beta * (a_new - a)
        vb = b_new + beta * (b_new - b)
        a, b = a_new, b_new
        t_mom = t_next
        change = np.abs(f_prev - f_new)
        if np.all(change <= opts.rel_tol * np.maximum(1.0, np.abs(f_new))):
            f_prev = f_new
            converged = True
            break
        f_prev = f_new
    return a, b, f_prev, it, converged


def solve_gl(
    y_int: np.ndarray,
    y_dep: np.ndarray,
    dicts: DictionaryPair,
    opts: GlOptions,
    mask_dep: np.ndarray | None = None,
) -> GlResult:
    """Group-lasso solve for one signal pair.

    Returns the stationary coefficients; when ``rel_tol`` is not reached
    within ``max_iter`` the best iterate is still returned with
    ``converged=False``.
    """
    y_int = as_vector(y_int, "y_int")
    y_dep = as_vector(y_dep, "y_dep")
    m = None if mask_dep is None else np.asarray(mask_dep, dtype=bool).reshape(-1, 1)
    a, b, f, iters, ok = solve_gl_batch(
        y_int.reshape(-1, 1), y_dep.reshape(-1, 1), dicts, opts, mask_dep=m
    )
    return GlResult(a=a[:, 0], b=b[:, 0], objective=float(f[0]), iterations=iters, converged=ok)


def _forward_diff(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences with Neumann boundary (last row/col zero)."""
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:-1, :] = u[1:, :] - u[:-1, :]
    gy[:, :-1] = u[:, 1:] - u[:, :-1]
    return gx, gy


def _divergence(px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Negative adjoint of :func:`_forward_diff`."""
    div = np.zeros_like(px)
    div[0, :] = px[0, :]
    div[1:-1, :] = px[1:-1, :] - px[:-2, :]
    div[-1, :] = -px[-2, :]
    div[:, 0] += py[:, 0]
    div[:, 1:-1] += py[:, 1:-1] - py[:, :-2]
    div[:, -1] += -py[:, -2]
    return div


def tv_energy(u: np.ndarray) -> float:
    """Isotropic discrete TV value with the package's discretization."""
    gx, gy = _forward_diff(np.asarray(u, dtype=float))
    return float(np.sum(np.sqrt(gx**2 + gy**2)))


def tv_inpaint(image: np.ndarray, mask: np.ndarray, opts: TvOptions | None = None) -> np.ndarray:
    """Fill unobserved pixels by TV minimization.

    ``mask`` marks observed pixels, whose values are reproduced exactly
    in the output; the rest approximately minimizes isotropic TV.
    """
    if opts is None:
        opts = TvOptions()
    image = as_matrix(image, "image")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != image.shape:
        raise ValueError("mask must match image shape")
    if not mask.any():
        raise EmptyMask("mask has no observed pixel")
    if mask.all():
        return image.copy()

    fill = float(image[mask].mean())
    u = np.where(mask, image, fill)
    u_bar = u.copy()
    px = np.zeros_like(u)
    py = np.zeros_like(u)
    # ||grad||^2 <= 8 for forward differences; keep sigma * tau * 8 = 1
    sigma = opts.weight / np.sqrt(8.0)
    tau = 1.0 / (opts.weight * np.sqrt(8.0))
    for _ in range(opts.max_iter):
        gx, gy = _forward_diff(u_bar)
        px += sigma * gx
        py += sigma * gy
        mag = np.maximum(1.0, np.sqrt(px**2 + py**2))
        px /= mag
        py /= mag
        u_new = u + tau * _divergence(px, py)
        u_new[mask] = image[mask]
        change = np.linalg.norm(u_new - u) / max(1.0, np.linalg.norm(u))
        u_bar = 2.0 * u_new - u
        u = u_new
        if change <= opts.tol:
            break
    u[mask] = image[mask]
    return u
