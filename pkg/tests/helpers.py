"""Independent oracles used by the tests.

Everything here is deliberately separate from the package's solution
paths: a first-order (projected subgradient) solve of the coupled
sparse-coding program, exhaustive support enumeration, and small
closed-form references. The oracles share no code with the implementations
they check. The subgradient loop is numba-compiled so the high iteration
counts it needs stay affordable.
"""

from itertools import combinations

import numba
import numpy as np


class BallProjector:
    """Euclidean projection onto {c : ||y - phi c||_2 <= eps}."""

    def __init__(self, phi, y, eps):
        self.eps = float(eps)
        u, s, vt = np.linalg.svd(phi, full_matrices=True)
        self.vt = vt
        self.k = s.size
        self.s = s
        self.s2 = s**2
        self.uty = u.T @ y
        # residual energy in directions outside the column space
        self.fixed_sq = float(np.sum(self.uty[self.k :] ** 2)) if self.uty.size > self.k else 0.0
        self.phi = phi
        self.y = y
        self.nu_warm = 1.0
        if np.sqrt(self.fixed_sq) > self.eps + 1e-12:
            raise ValueError("ball is empty: unreachable residual component exceeds eps")

    def residual(self, c):
        return float(np.linalg.norm(self.y - self.phi @ c))

    def __call__(self, c0):
        if self.residual(c0) <= self.eps:
            return c0.copy()
        w0 = self.vt @ c0
        rho0_sq = (self.uty[: self.k] - self.s * w0[: self.k]) ** 2
        target = self.eps**2

        def res_sq(nu):
            return float(np.sum(rho0_sq / (1.0 + nu * self.s2) ** 2)) + self.fixed_sq

        def dres_sq(nu):
            return float(np.sum(-2.0 * rho0_sq * self.s2 / (1.0 + nu * self.s2) ** 3))

        # bracket the root, warm-started from the previous call
        hi = max(self.nu_warm, 1e-6)
        lo = 0.0
        for _ in range(300):
            if res_sq(hi) < target:
                break
            lo = hi
            hi *= 4.0
        # safeguarded Newton from the midpoint
        nu = 0.5 * (lo + hi)
        for _ in range(100):
            g = res_sq(nu) - target
            if g > 0.0:
                lo = nu
            else:
                hi = nu
            if abs(g) <= 1e-14 * target or hi - lo <= 1e-14 * max(1.0, hi):
                break
            d = dres_sq(nu)
            nu_next = nu - g / d if d != 0.0 else 0.5 * (lo + hi)
            if not (lo < nu_next < hi):
                nu_next = 0.5 * (lo + hi)
            nu = nu_next
        self.nu_warm = nu
        w = w0.copy()
        w[: self.k] = (w0[: self.k] + nu * self.s * self.uty[: self.k]) / (1.0 + nu * self.s2)
        return self.vt.T @ w


def project_ball_box(c0, ball, u, iters=200, tol=1e-14):
    """Dykstra projection onto ball(y, eps) intersected with |c_i| <= u."""
    yb = ball(c0)
    if np.max(np.abs(yb)) <= u:
        return yb
    x = c0.copy()
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for _ in range(iters):
        yb = ball(x + p)
        p = x + p - yb
        x_new = np.clip(yb + q, -u, u)
        q = yb + q - x_new
        if np.max(np.abs(x_new - x)) <= tol:
            x = x_new
            break
        x = x_new
    return x


def least_norm_in_ball(phi, y, eps):
    """argmin ||c|| s.t. ||y - phi c|| <= eps, or None when the ball is empty."""
    try:
        ball = BallProjector(phi, y, eps)
    except ValueError:
        return None
    c = ball(np.zeros(phi.shape[1]))
    if ball.residual(c) > eps * (1.0 + 1e-9) + 1e-12:
        return None
    return c


def opt2_objective(a, b, u_int, u_dep):
    return float(np.sum(np.maximum(np.abs(a) / u_int, np.abs(b) / u_dep)))


@numba.njit(cache=True)
def _nb_ball_project(c, phi, y, vt, s, s2, uty, k, eps, fixed_sq, nu_warm):
    r = y - phi @ c
    if r @ r <= eps * eps:
        return c.copy(), nu_warm
    w0 = vt @ c
    rho0_sq = (uty[:k] - s * w0[:k]) ** 2
    target = eps * eps - fixed_sq

    hi = max(nu_warm, 1e-6)
    lo = 0.0
    for _ in range(300):
        val = np.sum(rho0_sq / (1.0 + hi * s2) ** 2)
        if val < target:
            break
        lo = hi
        hi *= 4.0
    nu = 0.5 * (lo + hi)
    for _ in range(100):
        base = 1.0 + nu * s2
        g = np.sum(rho0_sq / base**2) - target
        if g > 0.0:
            lo = nu
        else:
            hi = nu
        if abs(g) <= 1e-14 * target or hi - lo <= 1e-14 * max(1.0, hi):
            break
        d = np.sum(-2.0 * rho0_sq * s2 / base**3)
        if d != 0.0:
            nu_next = nu - g / d
        else:
            nu_next = 0.5 * (lo + hi)
        if not (lo < nu_next < hi):
            nu_next = 0.5 * (lo + hi)
        nu = nu_next
    w = w0.copy()
    w[:k] = (w0[:k] + nu * s * uty[:k]) / (1.0 + nu * s2)
    return vt.T @ w, nu


@numba.njit(cache=True)
def _nb_project_ball_box(c0, phi, y, vt, s, s2, uty, k, eps, fixed_sq, u, nu_warm):
    yb, nu_warm = _nb_ball_project(c0, phi, y, vt, s, s2, uty, k, eps, fixed_sq, nu_warm)
    inside = True
    for i in range(yb.size):
        if abs(yb[i]) > u:
            inside = False
            break
    if inside:
        return yb, nu_warm
    x = c0.copy()
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for _ in range(200):
        yb, nu_warm = _nb_ball_project(x + p, phi, y, vt, s, s2, uty, k, eps, fixed_sq, nu_warm)
        p = x + p - yb
        x_new = np.minimum(np.maximum(yb + q, -u), u)
        q = yb + q - x_new
        if np.max(np.abs(x_new - x)) <= 1e-14:
            x = x_new
            break
        x = x_new
    return x, nu_warm


@numba.njit(cache=True)
def _nb_subgrad_loop(
    phi_a, y_a, vt_a, s_a, s2_a, uty_a, k_a, eps_a, fixed_a, u_a,
    phi_b, y_b, vt_b, s_b, s2_b, uty_b, k_b, eps_b, fixed_b, u_b,
    max_iter, delta0, stall_window, delta_floor,
):
    n = phi_a.shape[1]
    nu_a = 1.0
    nu_b = 1.0
    a, nu_a = _nb_project_ball_box(
        np.zeros(n), phi_a, y_a, vt_a, s_a, s2_a, uty_a, k_a, eps_a, fixed_a, u_a, nu_a
    )
    b, nu_b = _nb_project_ball_box(
        np.zeros(n), phi_b, y_b, vt_b, s_b, s2_b, uty_b, k_b, eps_b, fixed_b, u_b, nu_b
    )

    f_best = np.sum(np.maximum(np.abs(a) / u_a, np.abs(b) / u_b))
    best_a = a.copy()
    best_b = b.copy()
    delta = max(delta0, 0.05 * f_best)
    since = 0

    for _ in range(max_iter):
        ga = np.zeros(n)
        gb = np.zeros(n)
        gn2 = 0.0
        f_cur = 0.0
        for i in range(n):
            ra = abs(a[i]) / u_a
            rb = abs(b[i]) / u_b
            f_cur += max(ra, rb)
            if ra > rb:
                ga[i] = np.sign(a[i]) / u_a
                gn2 += 1.0 / (u_a * u_a)
            elif rb > ra:
                gb[i] = np.sign(b[i]) / u_b
                gn2 += 1.0 / (u_b * u_b)
            elif ra > 0.0:
                ga[i] = 0.5 * np.sign(a[i]) / u_a
                gb[i] = 0.5 * np.sign(b[i]) / u_b
                gn2 += 0.25 / (u_a * u_a) + 0.25 / (u_b * u_b)
        if gn2 == 0.0:
            break
        step = (f_cur - (f_best - delta)) / gn2
        if step <= 0.0:
            step = delta / gn2
        a, nu_a = _nb_project_ball_box(
            a - step * ga, phi_a, y_a, vt_a, s_a, s2_a, uty_a, k_a, eps_a, fixed_a, u_a, nu_a
        )
        b, nu_b = _nb_project_ball_box(
            b - step * gb, phi_b, y_b, vt_b, s_b, s2_b, uty_b, k_b, eps_b, fixed_b, u_b, nu_b
        )
        f_new = np.sum(np.maximum(np.abs(a) / u_a, np.abs(b) / u_b))
        since += 1
        if f_new < f_best - 1e-14:
            if f_best - f_new >= 0.3 * delta:
                since = 0
            f_best = f_new
            best_a = a.copy()
            best_b = b.copy()
        if since >= stall_window:
            delta *= 0.5
            since = 0
            if delta < delta_floor:
                break
    return f_best, best_a, best_b


def subgradient_opt2(problem, max_iter=400000, delta_floor=2e-7):
    """Projected-subgradient solve of the coupled program.

    Works on the reduced form min sum_i max(|a_i|/u_int, |b_i|/u_dep)
    over the two residual balls intersected with the magnitude boxes
    (the activities are implied by the max rule). Target-level Polyak
    steps with stall-based level halving; high-iteration and entirely
    independent of the interior-point path.
    """
    u_i, u_d = problem.u_int, problem.u_dep
    ball_a = BallProjector(problem.phi_int, problem.y_int, problem.eps_int)
    y_dep, phi_dep = problem.observed_dep()
    ball_b = BallProjector(phi_dep, y_dep, problem.eps_dep)
    f_best, a, b = _nb_subgrad_loop(
        np.ascontiguousarray(problem.phi_int), problem.y_int,
        np.ascontiguousarray(ball_a.vt), ball_a.s, ball_a.s2, ball_a.uty,
        ball_a.k, float(problem.eps_int), ball_a.fixed_sq, float(u_i),
        np.ascontiguousarray(phi_dep), y_dep,
        np.ascontiguousarray(ball_b.vt), ball_b.s, ball_b.s2, ball_b.uty,
        ball_b.k, float(problem.eps_dep), ball_b.fixed_sq, float(u_d),
        max_iter, 1e-3, 400, delta_floor,
    )
    return float(f_best), (a, b)


def enumeration_best_objective(problem, max_size=3):
    """Best objective over feasible points supported on <= max_size atoms.

    For each candidate support, both modalities take the least-norm
    coefficients inside their residual balls; the activities follow from
    the max rule. Returns the minimum objective over all candidates that
    satisfy the activity box (inf if none do).
    """
    n = problem.n_atoms
    u_i, u_d = problem.u_int, problem.u_dep
    y_dep, phi_dep = problem.observed_dep()
    best = np.inf
    if (
        np.linalg.norm(problem.y_int) <= problem.eps_int
        and np.linalg.norm(y_dep) <= problem.eps_dep
    ):
        best = 0.0
    for size in range(1, max_size + 1):
        for support in combinations(range(n), size):
            s = list(support)
            a_s = least_norm_in_ball(problem.phi_int[:, s], problem.y_int, problem.eps_int)
            if a_s is None:
                continue
            b_s = least_norm_in_ball(phi_dep[:, s], y_dep, problem.eps_dep)
            if b_s is None:
                continue
            x_s = np.maximum(np.abs(a_s) / u_i, np.abs(b_s) / u_d)
            if np.max(x_s) <= 1.0:
                best = min(best, float(np.sum(x_s)))
    return best


def brute_coherence(m):
    """Exhaustive pairwise maximum |<phi_i, phi_j>| on normalized columns."""
    m = np.asarray(m, dtype=float)
    cols = [m[:, j] / np.linalg.norm(m[:, j]) for j in range(m.shape[1])]
    worst = 0.0
    for i in range(len(cols)):
        for j in range(len(cols)):
            if i != j:
                worst = max(worst, abs(float(cols[i] @ cols[j])))
    return min(worst, 1.0)


def ridge_dictionary(y, c, rho):
    """Closed-form minimizer of ||Y - Phi C||_F^2 + rho ||Phi||_F^2."""
    n_atoms = c.shape[0]
    return y @ c.T @ np.linalg.inv(c @ c.T + rho * np.eye(n_atoms))


def gl_identity_closed_form(y_int, y_dep, lam):
    """Per-pair minimizer for identity dictionaries: radial shrinkage."""
    norms = np.sqrt(y_int**2 + y_dep**2)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.maximum(0.0, 1.0 - lam / (2.0 * norms))
    scale[norms == 0.0] = 0.0
    return y_int * scale, y_dep * scale
