"""Reproducible experiment pipelines with CSV outputs.

Three pipelines: coefficient recovery versus the group-lasso baseline
and the theoretical bound, dictionary recovery from planted dictionaries,
and depth inpainting on the synthetic scene. Every pipeline is a pure
function of its configuration: all randomness is derived from the master
seed, trial results are combined in index order, and CSV files carry the
config hash and seed, so reruns are byte-identical regardless of worker
count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .baselines import GlOptions, TvOptions, solve_gl_batch, tv_inpaint
from .errors import MissingDictionary, ParseError
from .fileio import config_hash, read_matrix, write_csv, write_pgm
from .learning import LearnConfig, SignalPool, learn, match_atoms
from .model import (
    DictionaryPair,
    block_dict,
    delta_estimate,
    normalize_pair,
    random_dictionary_pair,
    synthesize,
)
from .rng import derive_seed, substream
from .scenes import piecewise_planar_scene, planted_patch_dictionary
from .solver import JbpProblem, SolverOptions, solve
from .theory import BoundInputs, recovery_bound

RECOVERY_SCHEMA = {
    "experiment": ("str", "recovery"),
    "seed": ("int", 0),
    "n_rows": ("int", 64),
    "n_atoms": ("int", 128),
    "sparsity": ("int", 10),
    "gamma": ("float", 0.25),
    "snr_db": ("float_list", [10.0, 15.0, 20.0, 25.0, 30.0]),
    "trials": ("int", 50),
    "eta": ("float", 0.1),
    "m_list": ("int_list", [25, 64]),
    "calibration_trials": ("int", 12),
    "workers": ("int", 1),
}

DICT_RECOVERY_SCHEMA = {
    "experiment": ("str", "dict-recovery"),
    "seed": ("int", 0),
    "n_rows": ("int", 16),
    "n_atoms": ("int", 32),
    "sparsity_list": ("int_list", [2, 3, 4]),
    "samples": ("int", 2000),
    "gamma": ("float", 0.25),
    "snr_db": ("float", 30.0),
    "eta": ("float", 0.1),
    "batch_size": ("int", 250),
    "n_iterations": ("int", 15),
    "gl_lambda": ("float", 0.12),
    "rho": ("float", 1e-4),
    "threshold": ("float", 0.05),
    "inject_truth": ("bool", False),
}

INPAINT_SCHEMA = {
    "experiment": ("str", "inpaint"),
    "seed": ("int", 0),
    "scene_size": ("int", 96),
    "keep_fraction": ("float", 0.04),
    "patch_size": ("int", 12),
    "stride": ("int", 0),  # 0 means patch_size // 2
    "eta": ("float", 0.12),
    "u_bound": ("float", 3.0),
    "gl_lambda": ("float", 0.0),  # 0 means residual-matched calibration
    "tv_weight": ("float", 1.0),
    "tv_max_iter": ("int", 3000),
    "tv_tol": ("float", 1e-9),
    "dict_mode": ("str", "planted"),
    "dict_int": ("str", ""),
    "dict_dep": ("str", ""),
}


def resolve_config(schema: dict, overrides: dict) -> dict:
    """Merge typed overrides into schema defaults; unknown keys rejected."""
    for key in overrides:
        if key not in schema:
            raise ParseError(f"unknown key {key!r}")
    out = {}
    for key, (_, default) in schema.items():
        if key in overrides:
            out[key] = overrides[key]
        elif default is None:
            raise ParseError(f"missing required key {key!r}")
        else:
            out[key] = default
    return out


def mask_random(image: np.ndarray, keep_fraction: float, seed: int) -> np.ndarray:
    """Boolean mask keeping exactly round(keep_fraction * pixels) entries."""
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must be in (0, 1]")
    image = np.asarray(image)
    n = image.size
    k = int(round(keep_fraction * n))
    rng = substream(seed, "mask")
    idx = rng.choice(n, size=k, replace=False)
    mask = np.zeros(n, dtype=bool)
    mask[idx] = True
    return mask.reshape(image.shape)


def _relative_error(sol_a, sol_b, a0, b0) -> float:
    return float(
        np.sum((sol_a - a0) ** 2) / np.sum(a0**2)
        + np.sum((sol_b - b0) ** 2) / np.sum(b0**2)
    )


def _recovery_trial(dicts, cfg, snr_db, trial_seed):
    pair, truth = synthesize(dicts, cfg["sparsity"], cfg["gamma"], snr_db, trial_seed)
    npair, s_int, s_dep = normalize_pair(pair)
    ntruth = truth.rescaled(s_int, s_dep)
    problem = JbpProblem(
        y_int=npair.y_int, y_dep=npair.y_dep,
        phi_int=dicts.phi_int, phi_dep=dicts.phi_dep,
        eps_int=cfg["eta"], eps_dep=cfg["eta"], u_int=1.0, u_dep=1.0,
    )
    sol = solve(problem)
    if sol.status != "Optimal":
        raise RuntimeError(f"solver returned {sol.status} on trial seed {trial_seed}")
    err = _relative_error(sol.code.a, sol.code.b, ntruth.a0, ntruth.b0)
    res_int = float(np.linalg.norm(npair.y_int - dicts.phi_int @ sol.code.a))
    res_dep = float(np.linalg.norm(npair.y_dep - dicts.phi_dep @ sol.code.b))
    return npair, ntruth, err, 0.5 * (res_int + res_dep)


def _gl_mean_residual(y_int_cols, y_dep_cols, dicts, lam):
    opts = GlOptions(lam=lam, max_iter=4000, rel_tol=1e-9)
    a, b, _, _, _ = solve_gl_batch(y_int_cols, y_dep_cols, dicts, opts)
    res_i = np.linalg.norm(y_int_cols - dicts.phi_int @ a, axis=0)
    res_d = np.linalg.norm(y_dep_cols - dicts.phi_dep @ b, axis=0)
    return float(np.mean(0.5 * (res_i + res_d))), a, b


def _calibrate_gl_lambda(y_int_cols, y_dep_cols, dicts, target, rel_tol=0.05):
    """Bisect the group-lasso weight until the mean residual matches target."""
    lo, hi = 1e-6, 8.0
    lam = hi
    for _ in range(60):
        lam = np.sqrt(lo * hi)  # bisection in log space
        res, _, _ = _gl_mean_residual(y_int_cols, y_dep_cols, dicts, lam)
        if abs(res - target) <= rel_tol * target:
            return lam
        if res > target:
            hi = lam
        else:
            lo = lam
    return lam


def run_recovery_experiment(overrides: dict, out_dir) -> Path:
    """Coefficient recovery versus SNR: solver, calibrated group lasso, bound.

    Writes ``recovery.csv`` with columns snr, jbp_err, gl_err and one
    bound column per configured isometry block size; returns its path.
    """
    cfg = resolve_config(RECOVERY_SCHEMA, overrides)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    master = cfg["seed"]
    dicts = random_dictionary_pair(
        cfg["n_rows"], cfg["n_rows"], cfg["n_atoms"], derive_seed(master, "recovery-dict")
    )

    # average-case isometry level: mean absolute inner product of the
    # block dictionary, plugged directly as delta for every set size
    delta_bar = delta_estimate(block_dict(dicts), 2, "mean").delta
    bounds = {}
    for m in cfg["m_list"]:
        bounds[m] = recovery_bound(
            BoundInputs(
                eta=cfg["eta"], gamma=cfg["gamma"], t0=cfg["sparsity"],
                m=m, delta_m=delta_bar, delta_m_t0=delta_bar, f0=1.0,
            )
        )

    hashed = {k: v for k, v in cfg.items() if k != "workers"}
    rows = []
    gl_lambdas = []
    for snr_idx, snr_db in enumerate(cfg["snr_db"]):
        seeds = [
            derive_seed(master, "recovery-trial", snr_idx * cfg["trials"] + t)
            for t in range(cfg["trials"])
        ]

        def one(seed):
            return _recovery_trial(dicts, cfg, snr_db, seed)

        if cfg["workers"] > 1:
            with ThreadPoolExecutor(max_workers=cfg["workers"]) as pool:
                results = list(pool.map(one, seeds))
        else:
            results = [one(seed) for seed in seeds]

        jbp_err = float(np.mean([r[2] for r in results]))
        n_cal = min(cfg["calibration_trials"], len(results))
        target = float(np.mean([r[3] for r in results[:n_cal]]))
        y_int_cal = np.column_stack([r[0].y_int for r in results[:n_cal]])
        y_dep_cal = np.column_stack([r[0].y_dep for r in results[:n_cal]])
        lam = _calibrate_gl_lambda(y_int_cal, y_dep_cal, dicts, target)
        gl_lambdas.append(lam)

        y_int_all = np.column_stack([r[0].y_int for r in results])
        y_dep_all = np.column_stack([r[0].y_dep for r in results])
        _, a_gl, b_gl = _gl_mean_residual(y_int_all, y_dep_all, dicts, lam)
        gl_errs = [
            _relative_error(a_gl[:, i], b_gl[:, i], r[1].a0, r[1].b0)
            for i, r in enumerate(results)
        ]
        gl_err = float(np.mean(gl_errs))
        rows.append((snr_db, jbp_err, gl_err) + tuple(bounds[m] for m in cfg["m_list"]))

    header = ["snr", "jbp_err", "gl_err"] + [f"bound_M{m}" for m in cfg["m_list"]]
    meta = {
        "config": config_hash(hashed),
        "seed": master,
        "delta_mean": delta_bar,
        "gl_lambda": ",".join(f"{v:.6g}" for v in gl_lambdas),
    }
    path = out_dir / "recovery.csv"
    write_csv(path, header, rows, meta)
    return path


def run_dict_recovery_experiment(overrides: dict, out_dir) -> Path:
    """Dictionary recovery per sparsity level, solver-based vs GL-based.

    Writes ``dict_recovery.csv`` with per-sparsity mean matched-atom
    error and recovered percentage for both inference methods.
    """
    cfg = resolve_config(DICT_RECOVERY_SCHEMA, overrides)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    master = cfg["seed"]
    if any(s < 1 for s in cfg["sparsity_list"]):
        raise ParseError("sparsity_list entries must be >= 1")

    rows = []
    for sparsity in cfg["sparsity_list"]:
        truth = random_dictionary_pair(
            cfg["n_rows"], cfg["n_rows"], cfg["n_atoms"],
            derive_seed(master, "dict-truth", sparsity),
        )
        cols_int, cols_dep = [], []
        for j in range(cfg["samples"]):
            pair, _ = synthesize(
                truth, sparsity, cfg["gamma"], cfg["snr_db"],
                derive_seed(master, "dict-sample", sparsity * cfg["samples"] + j),
            )
            npair, _, _ = normalize_pair(pair)
            cols_int.append(npair.y_int)
            cols_dep.append(npair.y_dep)
        pool = SignalPool(np.column_stack(cols_int), np.column_stack(cols_dep))

        per_method = {}
        for method in ("jbp", "gl"):
            if cfg["inject_truth"]:
                learned = truth
            else:
                lc = LearnConfig(
                    n_atoms=cfg["n_atoms"],
                    patch_size=cfg["n_rows"],
                    batch_size=cfg["batch_size"],
                    n_iterations=cfg["n_iterations"],
                    eta=cfg["eta"],
                    rho=cfg["rho"],
                    inference=method,
                    gl_lambda=cfg["gl_lambda"],
                    seed=derive_seed(master, f"learn-{method}", sparsity),
                )
                learned, _ = learn(pool, lc)
            match = match_atoms(learned, truth, cfg["threshold"])
            per_method[method] = (
                float(np.mean(match.mse)),
                100.0 * match.recovered / cfg["n_atoms"],
            )
        rows.append(
            (
                sparsity,
                per_method["jbp"][0],
                per_method["jbp"][1],
                per_method["gl"][0],
                per_method["gl"][1],
            )
        )

    header = ["sparsity", "jbp_mse", "jbp_recovered_pct", "gl_mse", "gl_recovered_pct"]
    meta = {"config": config_hash(cfg), "seed": master}
    path = out_dir / "dict_recovery.csv"
    write_csv(path, header, rows, meta)
    return path


def _tile_origins(extent: int, patch: int, stride: int) -> list[int]:
    origins = list(range(0, extent - patch + 1, stride))
    if origins[-1] != extent - patch:
        origins.append(extent - patch)
    return origins


class _Tile:
    """One patch position with scaled signals (scale = intensity norm)."""

    __slots__ = ("r", "c", "y_int", "y_dep", "mask", "scale")

    def __init__(self, r, c, y_int, y_dep, mask, scale):
        self.r, self.c = r, c
        self.y_int, self.y_dep, self.mask, self.scale = y_int, y_dep, mask, scale


def _extract_tiles(intensity, depth_observed, mask, patch_size, stride):
    """Tiles with at least one observed depth pixel, in row-major order."""
    tiles = []
    h, w = depth_observed.shape
    for r in _tile_origins(h, patch_size, stride):
        for c in _tile_origins(w, patch_size, stride):
            sl = (slice(r, r + patch_size), slice(c, c + patch_size))
            y_i = intensity[sl].ravel()
            m = mask[sl].ravel()
            scale = float(np.linalg.norm(y_i))
            if scale == 0.0 or not m.any():
                continue  # depth side unconstrained; nothing to contribute
            y_d = np.where(m, depth_observed[sl].ravel(), 0.0)
            tiles.append(_Tile(r, c, y_i / scale, y_d / scale, m, scale))
    return tiles


def _tile_residual(tile, dicts, a, b):
    res_i = float(np.linalg.norm(tile.y_int - dicts.phi_int @ a))
    res_d = float(np.linalg.norm((tile.y_dep - dicts.phi_dep @ b)[tile.mask]))
    return 0.5 * (res_i + res_d)


def _solve_tiles_jbp(tiles, dicts, eta, u_bound):
    """Per-tile coupled solves; ball radii relax by factors of two when a
    textured boundary patch is infeasible at the nominal radii."""
    codes = []
    residuals = []
    for tile in tiles:
        b = None
        eps_int = eta
        eps_dep = max(eta * float(np.linalg.norm(tile.y_dep)), 1e-3)
        for _ in range(4):
            problem = JbpProblem(
                y_int=tile.y_int, y_dep=tile.y_dep,
                phi_int=dicts.phi_int, phi_dep=dicts.phi_dep,
                eps_int=eps_int, eps_dep=eps_dep,
                u_int=u_bound, u_dep=u_bound,
                mask_dep=tile.mask if not tile.mask.all() else None,
            )
            sol = solve(problem, SolverOptions(gap_tol=1e-6))
            if sol.status != "Infeasible":
                a, b = sol.code.a, sol.code.b
                break
            eps_int *= 2.0
            eps_dep *= 2.0
        codes.append(b)
        if b is not None:
            residuals.append(_tile_residual(tile, dicts, a, b))
    return codes, float(np.mean(residuals)) if residuals else 0.0


def _solve_tiles_gl(tiles, dicts, lam):
    y_int = np.column_stack([t.y_int for t in tiles])
    y_dep = np.column_stack([t.y_dep for t in tiles])
    masks = np.column_stack([t.mask for t in tiles])
    opts = GlOptions(lam=lam, max_iter=4000, rel_tol=1e-9)
    a, b, _, _, _ = solve_gl_batch(y_int, y_dep, dicts, opts, mask_dep=masks)
    return a, b


def _gl_tiles_residual(tiles, dicts, a, b):
    return float(
        np.mean([_tile_residual(t, dicts, a[:, i], b[:, i]) for i, t in enumerate(tiles)])
    )


def _calibrate_inpaint_gl(tiles, dicts, target, rel_tol=0.05):
    """Match the group-lasso mean tile residual to the coupled solver's."""
    lo, hi = 1e-5, 8.0
    lam = hi
    for _ in range(40):
        lam = np.sqrt(lo * hi)
        a, b = _solve_tiles_gl(tiles, dicts, lam)
        res = _gl_tiles_residual(tiles, dicts, a, b)
        if abs(res - target) <= rel_tol * max(target, 1e-9):
            return lam, a, b
        if res > target:
            hi = lam
        else:
            lo = lam
    a, b = _solve_tiles_gl(tiles, dicts, lam)
    return lam, a, b


def _assemble_tiles(shape, tiles, codes, dicts, patch_size, mask, depth_observed):
    """Uniform-weight average of tile reconstructions; observed pixels
    re-imposed exactly; uncovered pixels fall back to the observed mean."""
    acc = np.zeros(shape)
    weight = np.zeros(shape)
    for tile, b in zip(tiles, codes):
        if b is None:
            continue
        sl = (slice(tile.r, tile.r + patch_size), slice(tile.c, tile.c + patch_size))
        recon = (dicts.phi_dep @ b) * tile.scale
        acc[sl] += recon.reshape(patch_size, patch_size)
        weight[sl] += 1.0
    fallback = float(depth_observed[mask].mean()) if mask.any() else 0.0
    out = np.where(weight > 0, acc / np.maximum(weight, 1.0), fallback)
    out[mask] = depth_observed[mask]
    return out


def patchwise_inpaint(
    intensity: np.ndarray,
    depth_observed: np.ndarray,
    mask: np.ndarray,
    dicts: DictionaryPair,
    method: str,
    patch_size: int,
    stride: int,
    eta: float,
    u_bound: float,
    gl_lambda: float,
) -> np.ndarray:
    """Reconstruct depth tile by tile from full intensity and sparse depth.

    Overlapping tiles are averaged with uniform weights; each tile is
    scaled by its intensity-patch norm and the depth ball radius scales
    with the observed depth energy. ``method`` is ``"jbp"`` or ``"gl"``
    (the latter with the fixed ``gl_lambda``).
    """
    tiles = _extract_tiles(intensity, depth_observed, mask, patch_size, stride)
    if method == "jbp":
        codes, _ = _solve_tiles_jbp(tiles, dicts, eta, u_bound)
    elif method == "gl":
        _, b = _solve_tiles_gl(tiles, dicts, gl_lambda)
        codes = [b[:, i] for i in range(len(tiles))]
    else:
        raise ValueError(f"unknown method {method!r}")
    return _assemble_tiles(
        depth_observed.shape, tiles, codes, dicts, patch_size, mask, depth_observed
    )


def run_inpaint_experiment(overrides: dict, out_dir) -> Path:
    """Depth inpainting on the synthetic scene, three methods compared.

    Reconstructs the masked depth with the coupled solver, group lasso,
    and TV; writes per-method MSE rows to ``inpaint.csv`` plus the
    reconstructed images as 16-bit PGM files. Returns the CSV path.
    """
    cfg = resolve_config(INPAINT_SCHEMA, overrides)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    master = cfg["seed"]
    stride = cfg["stride"] or cfg["patch_size"] // 2

    intensity, depth = piecewise_planar_scene(cfg["scene_size"], derive_seed(master, "scene"))
    mask = mask_random(depth, cfg["keep_fraction"], derive_seed(master, "mask"))
    depth_observed = np.where(mask, depth, 0.0)

    if cfg["dict_mode"] == "planted":
        dicts = planted_patch_dictionary(cfg["patch_size"])
    elif cfg["dict_mode"] == "files":
        if not cfg["dict_int"] or not cfg["dict_dep"]:
            raise MissingDictionary("dict_int and dict_dep paths are required")
        dicts = DictionaryPair(read_matrix(cfg["dict_int"]), read_matrix(cfg["dict_dep"]))
        if dicts.phi_int.shape[0] != cfg["patch_size"] ** 2:
            raise MissingDictionary("dictionary row count does not match patch size")
    else:
        raise ParseError(f"unknown dict_mode {cfg['dict_mode']!r}")

    tiles = _extract_tiles(intensity, depth_observed, mask, cfg["patch_size"], stride)
    shape = depth_observed.shape
    recon = {}
    jbp_codes, jbp_residual = _solve_tiles_jbp(tiles, dicts, cfg["eta"], cfg["u_bound"])
    recon["jbp"] = _assemble_tiles(
        shape, tiles, jbp_codes, dicts, cfg["patch_size"], mask, depth_observed
    )
    if cfg["gl_lambda"] > 0.0:
        lam = cfg["gl_lambda"]
        _, b_gl = _solve_tiles_gl(tiles, dicts, lam)
    else:
        lam, _, b_gl = _calibrate_inpaint_gl(tiles, dicts, jbp_residual)
    recon["gl"] = _assemble_tiles(
        shape, tiles, [b_gl[:, i] for i in range(len(tiles))],
        dicts, cfg["patch_size"], mask, depth_observed,
    )
    recon["tv"] = tv_inpaint(
        depth_observed, mask,
        TvOptions(weight=cfg["tv_weight"], max_iter=cfg["tv_max_iter"], tol=cfg["tv_tol"]),
    )

    rows = []
    for method in ("jbp", "gl", "tv"):
        mse = float(np.mean((recon[method] - depth) ** 2))
        rows.append((method, mse))
        img = np.clip(recon[method], 0.0, 1.0)
        write_pgm(out_dir / f"recon_{method}.pgm", np.rint(img * 65535), maxval=65535)
    write_pgm(out_dir / "depth_truth.pgm", np.rint(depth * 65535), maxval=65535)
    write_pgm(out_dir / "depth_masked.pgm", np.rint(np.where(mask, depth, 0.0) * 65535), maxval=65535)
    write_pgm(out_dir / "intensity.pgm", np.rint(intensity * 65535), maxval=65535)

    meta = {
        "config": config_hash(cfg),
        "seed": master,
        "gl_lambda": f"{lam:.6g}",
        "jbp_residual": f"{jbp_residual:.6g}",
        "tiling": f"patch={cfg['patch_size']} stride={stride} uniform-average",
    }
    path = out_dir / "inpaint.csv"
    write_csv(path, ["method", "mse"], rows, meta)
    return path
