"""Interior-point solver for the joint sparse-coding program.

The program minimizes the total coupling activity ``sum_i x_i`` subject
to one residual ball per modality and per-atom coupling bounds::

    ||y_int - phi_int a||_2 <= eps_int
    ||y_dep - phi_dep b||_2 <= eps_dep      (over observed depth pixels)
    |a_i| <= u_int * x_i,  |b_i| <= u_dep * x_i,  0 <= x_i <= 1

The solver is a self-contained phase-I + log-barrier method: the ball
constraints enter the barrier through the slack ``eps^2 - ||r||^2``, the
coupling bounds are split into pairs of linear inequalities, and each
centering step solves the dense symmetric Newton system in the 3N
variables (x, a, b). At an optimum the activities satisfy the max rule
``x_i = max(|a_i|/u_int, |b_i|/u_dep)`` (see :func:`tighten_activity`),
which the test suite verifies on every solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import lsq_linear

from .errors import Infeasible
from .model import JointCode, as_matrix, as_vector


@dataclass
class SolverOptions:
    """Log-barrier configuration.

    ``gap_tol`` bounds the final duality-gap certificate m/t where m is
    the total constraint count; ``feas_tol`` is the feasibility slack
    granted when validating returned solutions.
    """

    barrier_mu: float = 10.0
    initial_t: float = 1.0
    gap_tol: float = 1e-8
    newton_tol: float = 1e-9
    max_newton: int = 50
    max_outer: int = 60
    feas_tol: float = 1e-6

    def __post_init__(self):
        for name in ("barrier_mu", "initial_t", "gap_tol", "newton_tol", "feas_tol"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.max_newton < 1 or self.max_outer < 1:
            raise ValueError("iteration budgets must be positive")


@dataclass
class JbpProblem:
    """One instance: signals, dictionaries, ball radii, activity bounds.

    ``mask_dep`` restricts the depth residual to observed pixels; an
    all-false mask drops the depth ball entirely (intensity-only
    inference) and leaves ``b`` constrained only by the coupling bounds.
    """

    y_int: np.ndarray
    y_dep: np.ndarray
    phi_int: np.ndarray
    phi_dep: np.ndarray
    eps_int: float
    eps_dep: float
    u_int: float
    u_dep: float
    mask_dep: np.ndarray | None = None

    def __post_init__(self):
        self.y_int = as_vector(self.y_int, "y_int")
        self.y_dep = as_vector(self.y_dep, "y_dep")
        self.phi_int = as_matrix(self.phi_int, "phi_int")
        self.phi_dep = as_matrix(self.phi_dep, "phi_dep")
        if self.phi_int.shape[0] != self.y_int.size:
            raise ValueError("phi_int rows must match y_int length")
        if self.phi_dep.shape[0] != self.y_dep.size:
            raise ValueError("phi_dep rows must match y_dep length")
        if self.phi_int.shape[1] != self.phi_dep.shape[1]:
            raise ValueError("dictionaries must share one atom count")
        if self.eps_int <= 0.0 or self.eps_dep <= 0.0:
            raise ValueError("ball radii must be positive")
        if self.u_int <= 0.0 or self.u_dep <= 0.0:
            raise ValueError("activity bounds must be positive")
        if self.mask_dep is not None:
            self.mask_dep = np.asarray(self.mask_dep, dtype=bool)
            if self.mask_dep.shape != self.y_dep.shape:
                raise ValueError("mask_dep must match y_dep")

    @property
    def n_atoms(self) -> int:
        return self.phi_int.shape[1]

    def observed_dep(self) -> tuple[np.ndarray, np.ndarray]:
        """Depth signal and dictionary restricted to observed pixels."""
        if self.mask_dep is None:
            return self.y_dep, self.phi_dep
        return self.y_dep[self.mask_dep], self.phi_dep[self.mask_dep]

    @property
    def has_depth_ball(self) -> bool:
        return self.mask_dep is None or bool(self.mask_dep.any())


@dataclass
class FeasibilityReport:
    """Worst-case constraint violations of a candidate code."""

    residual_int: float
    residual_dep: float
    box_violation: float
    coupling_violation: float
    feasible: bool


@dataclass
class JbpSolution:
    """Solver output with diagnostics.

    ``status`` is one of ``"Optimal"``, ``"Infeasible"``, ``"MaxIter"``;
    on ``MaxIter`` the best iterate found is still returned. ``gap`` is
    the barrier duality-gap certificate m/t.
    """

    code: JointCode
    objective: float
    gap: float
    newton_steps: int
    status: str
    min_slack: float | None = None


def tighten_activity(a: np.ndarray, b: np.ndarray, u_int: float, u_dep: float) -> np.ndarray:
    """Smallest activities compatible with the coupling bounds.

    Componentwise ``max(|a_i|/u_int, |b_i|/u_dep)``; at any optimum of
    the program the activities equal this value.
    """
    if u_int <= 0.0 or u_dep <= 0.0:
        raise ValueError("activity bounds must be positive")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.maximum(np.abs(a) / u_int, np.abs(b) / u_dep)


def check_feasibility(problem: JbpProblem, code: JointCode, tol: float) -> FeasibilityReport:
    """Report each constraint family's worst violation of ``code``.

    Residual entries are the achieved residual norms (compared against
    eps + tol); box and coupling entries are signed worst violations, so
    a negative ``tol`` can be used to verify strict interior points.
    """
    residual_int = float(np.linalg.norm(problem.y_int - problem.phi_int @ code.a))
    y_dep, phi_dep = problem.observed_dep()
    if y_dep.size > 0:
        residual_dep = float(np.linalg.norm(y_dep - phi_dep @ code.b))
    else:
        residual_dep = 0.0
    box = max(float(np.max(-code.x)), float(np.max(code.x - 1.0)))
    coupling = max(
        float(np.max(np.abs(code.a) - problem.u_int * code.x)),
        float(np.max(np.abs(code.b) - problem.u_dep * code.x)),
    )
    feasible = (
        residual_int <= problem.eps_int + tol
        and (not problem.has_depth_ball or residual_dep <= problem.eps_dep + tol)
        and box <= tol
        and coupling <= tol
    )
    return FeasibilityReport(
        residual_int=residual_int,
        residual_dep=residual_dep,
        box_violation=box,
        coupling_violation=coupling,
        feasible=feasible,
    )


def _interior_coefficients(phi: np.ndarray, y: np.ndarray, eps: float, u: float) -> np.ndarray:
    """Coefficients strictly inside the residual ball and the magnitude box.

    Tries the minimum-norm ridge interpolant first; if it is not strictly
    inside (or violates the magnitude box), falls back to box-constrained
    least squares and declares infeasibility when even the minimal
    achievable residual exceeds eps by more than 1e-9.
    """
    n = phi.shape[0]
    if float(np.linalg.norm(y)) < eps * (1.0 - 1e-9):
        return np.zeros(phi.shape[1])
    bound = u * (1.0 - 1e-5)
    gram = phi @ phi.T
    reg = 1e-12 * max(float(np.trace(gram)) / n, 1.0)
    c = phi.T @ np.linalg.solve(gram + reg * np.eye(n), y)
    res = float(np.linalg.norm(y - phi @ c))
    if res < eps * (1.0 - 1e-9) and float(np.max(np.abs(c), initial=0.0)) <= bound:
        return c
    sol = lsq_linear(phi, y, bounds=(-bound, bound), tol=1e-14)
    c = sol.x
    res = float(np.linalg.norm(y - phi @ c))
    if res > eps + 1e-9:
        raise Infeasible(res - eps)
    if res >= eps * (1.0 - 1e-9):
        raise Infeasible(res - eps, "residual ball is tight; no strict interior point")
    return c


def phase1_start(problem: JbpProblem) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Strictly feasible starting point (x, a, b).

    Raises :class:`Infeasible` (carrying the minimal-slack value) when no
    point can satisfy the residual balls with bounded coefficients.
    """
    a = _interior_coefficients(problem.phi_int, problem.y_int, problem.eps_int, problem.u_int)
    if problem.has_depth_ball:
        y_dep, phi_dep = problem.observed_dep()
        b = _interior_coefficients(phi_dep, y_dep, problem.eps_dep, problem.u_dep)
    else:
        b = np.zeros(problem.n_atoms)
    tight = tighten_activity(a, b, problem.u_int, problem.u_dep)
    x = np.clip(np.maximum(1.01 * tight, 0.01), 0.01, 1.0 - 1e-6)
    return x, a, b


class _BarrierData:
    """Precomputed quantities shared by all Newton steps of one solve."""

    def __init__(self, problem: JbpProblem):
        self.n = problem.n_atoms
        self.y_int = problem.y_int
        self.phi_int = problem.phi_int
        self.gram_int = problem.phi_int.T @ problem.phi_int
        self.eps2_int = problem.eps_int**2
        self.has_dep = problem.has_depth_ball
        y_dep, phi_dep = problem.observed_dep()
        self.y_dep = y_dep
        self.phi_dep = phi_dep
        self.gram_dep = phi_dep.T @ phi_dep if self.has_dep else None
        self.eps2_dep = problem.eps_dep**2
        self.u_int = problem.u_int
        self.u_dep = problem.u_dep
        # per-atom coupling pairs (4N) + box pairs (2N) + residual balls
        self.m = 6 * self.n + 1 + (1 if self.has_dep else 0)
        self._hbuf = np.zeros((3 * self.n, 3 * self.n))
        self._idx = np.arange(self.n)

    def split(self, z):
        n = self.n
        return z[:n], z[n : 2 * n], z[2 * n :]

    def slacks(self, z):
        """Ball slacks (eps^2 - ||r||^2) and the 6N linear slacks."""
        n = self.n
        x, a, b = self.split(z)
        r_int = self.y_int - self.phi_int @ a
        s_int = self.eps2_int - float(r_int @ r_int)
        if self.has_dep:
            r_dep = self.y_dep - self.phi_dep @ b
            s_dep = self.eps2_dep - float(r_dep @ r_dep)
        else:
            r_dep, s_dep = None, 1.0
        lin = np.empty(6 * n)
        ux = self.u_int * x
        lin[0:n] = ux - a
        lin[n : 2 * n] = ux + a
        ux = self.u_dep * x
        lin[2 * n : 3 * n] = ux - b
        lin[3 * n : 4 * n] = ux + b
        lin[4 * n : 5 * n] = x
        lin[5 * n : 6 * n] = 1.0 - x
        return r_int, s_int, r_dep, s_dep, lin

    def value(self, z, t):
        _, s_int, _, s_dep, lin = self.slacks(z)
        if s_int <= 0.0 or s_dep <= 0.0 or lin.min() <= 0.0:
            return np.inf
        val = t * float(np.sum(z[: self.n])) - math.log(s_int)
        if self.has_dep:
            val -= math.log(s_dep)
        return val - float(np.sum(np.log(lin)))

    def grad_hess(self, z, t):
        n = self.n
        r_int, s_int, r_dep, s_dep, lin = self.slacks(z)
        s_ap = lin[0:n]
        s_am = lin[n : 2 * n]
        s_bp = lin[2 * n : 3 * n]
        s_bm = lin[3 * n : 4 * n]
        s_x0 = lin[4 * n : 5 * n]
        s_x1 = lin[5 * n : 6 * n]
        u_i, u_d = self.u_int, self.u_dep

        inv = 1.0 / lin
        inv_ap = inv[0:n]
        inv_am = inv[n : 2 * n]
        inv_bp = inv[2 * n : 3 * n]
        inv_bm = inv[3 * n : 4 * n]

        g = np.empty(3 * n)
        v_int = self.phi_int.T @ r_int
        g[:n] = (
            t
            - u_i * (inv_ap + inv_am)
            - u_d * (inv_bp + inv_bm)
            - inv[4 * n : 5 * n]
            + inv[5 * n : 6 * n]
        )
        g[n : 2 * n] = inv_ap - inv_am - (2.0 / s_int) * v_int
        g[2 * n :] = inv_bp - inv_bm
        if self.has_dep:
            v_dep = self.phi_dep.T @ r_dep
            g[2 * n :] -= (2.0 / s_dep) * v_dep

        inv2 = inv * inv
        inv2_ap = inv2[0:n]
        inv2_am = inv2[n : 2 * n]
        inv2_bp = inv2[2 * n : 3 * n]
        inv2_bm = inv2[3 * n : 4 * n]
        h_xx = (
            u_i**2 * (inv2_ap + inv2_am)
            + u_d**2 * (inv2_bp + inv2_bm)
            + inv2[4 * n : 5 * n]
            + inv2[5 * n : 6 * n]
        )
        h_xa = u_i * (inv2_am - inv2_ap)
        h_xb = u_d * (inv2_bm - inv2_bp)

        H = self._hbuf
        H.fill(0.0)
        idx = self._idx
        H[idx, idx] = h_xx
        H[idx, n + idx] = h_xa
        H[n + idx, idx] = h_xa
        H[idx, 2 * n + idx] = h_xb
        H[2 * n + idx, idx] = h_xb

        haa = H[n : 2 * n, n : 2 * n]
        np.multiply.outer(v_int, v_int, out=haa)
        haa *= 4.0 / s_int**2
        haa += (2.0 / s_int) * self.gram_int
        haa[idx, idx] += inv2_ap + inv2_am

        hbb = H[2 * n :, 2 * n :]
        if self.has_dep:
            np.multiply.outer(v_dep, v_dep, out=hbb)
            hbb *= 4.0 / s_dep**2
            hbb += (2.0 / s_dep) * self.gram_dep
        hbb[idx, idx] += inv2_bp + inv2_bm
        return g, H


def _newton_direction(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    scale = float(np.max(np.abs(np.diag(H)))) or 1.0
    ridge = 0.0
    for _ in range(8):
        try:
            cf = scipy.linalg.cho_factor(
                H if ridge == 0.0 else H + ridge * np.eye(H.shape[0]),
                lower=True,
                check_finite=False,
            )
            return -scipy.linalg.cho_solve(cf, g, check_finite=False)
        except np.linalg.LinAlgError:
            ridge = max(ridge * 100.0, 1e-14 * scale)
    return -np.linalg.lstsq(H, g, rcond=None)[0]


def _center(z, t, data: _BarrierData, opts: SolverOptions):
    """Newton centering at barrier parameter t; keeps iterates strictly feasible."""
    steps = 0
    fz = data.value(z, t)
    for _ in range(opts.max_newton):
        g, H = data.grad_hess(z, t)
        dz = _newton_direction(H, g)
        lam2 = float(-g @ dz)
        if not np.isfinite(lam2) or lam2 <= 0.0:
            break
        if 0.5 * lam2 <= opts.newton_tol:
            break
        gd = float(g @ dz)
        step = 1.0
        accepted = False
        for _ in range(100):
            zn = z + step * dz
            fn = data.value(zn, t)
            if fn <= fz + 0.01 * step * gd:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        z = zn
        fz = fn
        steps += 1
    return z, steps


def solve(problem: JbpProblem, opts: SolverOptions | None = None) -> JbpSolution:
    """Solve one instance with the log-barrier method.

    Returns an ``Optimal`` solution once the duality-gap certificate m/t
    drops below ``gap_tol``; an ``Infeasible`` status when phase I proves
    the residual balls unreachable; or ``MaxIter`` with the best iterate
    when the iteration budgets run out.
    """
    if opts is None:
        opts = SolverOptions()
    n = problem.n_atoms
    try:
        x0, a0, b0 = phase1_start(problem)
    except Infeasible as exc:
        code = JointCode(
            a=np.zeros(n), b=np.zeros(n), x=np.zeros(n),
            u_int=problem.u_int, u_dep=problem.u_dep,
        )
        return JbpSolution(
            code=code, objective=math.inf, gap=math.inf,
            newton_steps=0, status="Infeasible", min_slack=exc.min_slack,
        )

    data = _BarrierData(problem)
    z = np.concatenate([x0, a0, b0])
    t = opts.initial_t
    total_steps = 0
    status = "MaxIter"
    for _ in range(opts.max_outer):
        z, steps = _center(z, t, data, opts)
        total_steps += steps
        if data.m / t <= opts.gap_tol:
            status = "Optimal"
            break
        t *= opts.barrier_mu

    x, a, b = data.split(z)
    code = JointCode(a=a.copy(), b=b.copy(), x=x.copy(),
                     u_int=problem.u_int, u_dep=problem.u_dep)
    if status == "Optimal" and not check_feasibility(problem, code, opts.feas_tol).feasible:
        status = "MaxIter"
    return JbpSolution(
        code=code,
        objective=float(np.sum(x)),
        gap=data.m / t,
        newton_steps=total_steps,
        status=status,
    )
