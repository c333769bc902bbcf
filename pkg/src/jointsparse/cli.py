"""Command-line harness.

One executable with subcommands for synthetic data generation, single
solves, inpainting, learning, the three experiment pipelines, and the
recovery bound. All subcommands accept ``--config`` (key = value file),
``--seed`` (overrides the config seed), and ``--out`` (output
directory). Exit codes: 0 success, 2 configuration error, 3 solver
infeasibility.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .baselines import GlOptions, TvOptions, solve_gl, tv_inpaint
from .errors import Infeasible, JointSparseError, ParseError
from .experiments import (
    DICT_RECOVERY_SCHEMA,
    INPAINT_SCHEMA,
    RECOVERY_SCHEMA,
    run_dict_recovery_experiment,
    run_inpaint_experiment,
    run_recovery_experiment,
)
from .fileio import (
    apply_schema,
    read_config,
    read_matrix,
    read_pgm,
    write_matrix,
    write_pgm,
)
from .learning import ImagePatchSource, LearnConfig, SignalPool, learn, whiten
from .model import (
    DictionaryPair,
    normalize_pair,
    random_dictionary_pair,
    synthesize,
)
from .rng import derive_seed
from .solver import JbpProblem, solve
from .theory import BoundInputs, bound_constant, recovery_bound

SYNTH_SCHEMA = {
    "seed": ("int", 0),
    "n_rows": ("int", 64),
    "n_atoms": ("int", 128),
    "sparsity": ("int", 10),
    "gamma": ("float", 0.25),
    "snr_db": ("float", 20.0),
    "normalize": ("bool", True),
}

SOLVE_JBP_SCHEMA = {
    "seed": ("int", 0),
    "y_int": ("str", None),
    "y_dep": ("str", None),
    "phi_int": ("str", None),
    "phi_dep": ("str", None),
    "eps_int": ("float", 0.1),
    "eps_dep": ("float", 0.1),
    "u_int": ("float", 1.0),
    "u_dep": ("float", 1.0),
    "mask_dep": ("str", ""),
}

SOLVE_GL_SCHEMA = {
    "seed": ("int", 0),
    "y_int": ("str", None),
    "y_dep": ("str", None),
    "phi_int": ("str", None),
    "phi_dep": ("str", None),
    "lam": ("float", 0.3),
    "max_iter": ("int", 10000),
    "rel_tol": ("float", 1e-8),
    "mask_dep": ("str", ""),
}

INPAINT_TV_SCHEMA = {
    "seed": ("int", 0),
    "image": ("str", None),
    "mask": ("str", None),
    "weight": ("float", 1.0),
    "max_iter": ("int", 500),
    "tol": ("float", 1e-6),
}

LEARN_SCHEMA = {
    "seed": ("int", 0),
    "mode": ("str", "synthetic"),
    # synthetic-pool keys
    "n_rows": ("int", 16),
    "truth_atoms": ("int", 32),
    "sparsity": ("int", 3),
    "gamma": ("float", 0.25),
    "snr_db": ("float", 30.0),
    "samples": ("int", 2000),
    # image-mode keys (comma-separated PGM paths)
    "intensity_pgms": ("str", ""),
    "depth_pgms": ("str", ""),
    "mask_pgms": ("str", ""),
    "whiten": ("bool", True),
    # learning parameters
    "n_atoms": ("int", 32),
    "patch_size": ("int", 12),
    "batch_size": ("int", 200),
    "n_iterations": ("int", 15),
    "eta": ("float", 0.1),
    "rho": ("float", 1e-4),
    "inference": ("str", "jbp"),
    "gl_lambda": ("float", 0.12),
}

BOUND_SCHEMA = {
    "seed": ("int", 0),
    "eta": ("float", 0.1),
    "gamma": ("float", 0.25),
    "t0": ("int", 10),
    "m": ("int", 64),
    "delta_m": ("float", 0.0),
    "delta_m_t0": ("float", 0.0),
    "f0": ("float", 1.0),
}


def _load_config(args, schema):
    raw = read_config(args.config) if args.config else {}
    cfg = apply_schema(raw, schema)
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_vector(path, v):
    write_matrix(path, np.asarray(v, dtype=float).reshape(-1, 1))


def _read_vector(path):
    return read_matrix(path).ravel()


def _write_keyvalues(path, values: dict):
    Path(path).write_text("".join(f"{k} = {v}\n" for k, v in values.items()))


def _cmd_synth(args) -> int:
    cfg = _load_config(args, SYNTH_SCHEMA)
    out = _out_dir(args)
    dicts = random_dictionary_pair(
        cfg["n_rows"], cfg["n_rows"], cfg["n_atoms"], derive_seed(cfg["seed"], "synth-dict")
    )
    pair, truth = synthesize(
        dicts, cfg["sparsity"], cfg["gamma"], cfg["snr_db"], derive_seed(cfg["seed"], "synth-signal")
    )
    if cfg["normalize"]:
        pair, s_int, s_dep = normalize_pair(pair)
        truth = truth.rescaled(s_int, s_dep)
    write_matrix(out / "phi_int.mat", dicts.phi_int)
    write_matrix(out / "phi_dep.mat", dicts.phi_dep)
    _write_vector(out / "y_int.mat", pair.y_int)
    _write_vector(out / "y_dep.mat", pair.y_dep)
    _write_vector(out / "a0.mat", truth.a0)
    _write_vector(out / "b0.mat", truth.b0)
    _write_keyvalues(
        out / "ground_truth.cfg",
        {
            "support": ",".join(str(i) for i in truth.support),
            "gamma": f"{truth.gamma:.17g}",
            "seed": cfg["seed"],
        },
    )
    print(f"wrote instance to {out}")
    return 0


def _cmd_solve_jbp(args) -> int:
    cfg = _load_config(args, SOLVE_JBP_SCHEMA)
    out = _out_dir(args)
    mask = None
    if cfg["mask_dep"]:
        mask = read_matrix(cfg["mask_dep"]).ravel().astype(bool)
    problem = JbpProblem(
        y_int=_read_vector(cfg["y_int"]),
        y_dep=_read_vector(cfg["y_dep"]),
        phi_int=read_matrix(cfg["phi_int"]),
        phi_dep=read_matrix(cfg["phi_dep"]),
        eps_int=cfg["eps_int"],
        eps_dep=cfg["eps_dep"],
        u_int=cfg["u_int"],
        u_dep=cfg["u_dep"],
        mask_dep=mask,
    )
    sol = solve(problem)
    _write_keyvalues(
        out / "solution.cfg",
        {
            "status": sol.status,
            "objective": f"{sol.objective:.17g}",
            "gap": f"{sol.gap:.17g}",
            "newton_steps": sol.newton_steps,
        },
    )
    if sol.status == "Infeasible":
        print(f"infeasible (minimal slack {sol.min_slack:.3e})", file=sys.stderr)
        return 3
    _write_vector(out / "a.mat", sol.code.a)
    _write_vector(out / "b.mat", sol.code.b)
    _write_vector(out / "x.mat", sol.code.x)
    print(f"{sol.status}: objective {sol.objective:.8g}, gap {sol.gap:.2e}")
    return 0


def _cmd_solve_gl(args) -> int:
    cfg = _load_config(args, SOLVE_GL_SCHEMA)
    out = _out_dir(args)
    dicts = DictionaryPair(read_matrix(cfg["phi_int"]), read_matrix(cfg["phi_dep"]))
    mask = None
    if cfg["mask_dep"]:
        mask = read_matrix(cfg["mask_dep"]).ravel().astype(bool)
    result = solve_gl(
        _read_vector(cfg["y_int"]),
        _read_vector(cfg["y_dep"]),
        dicts,
        GlOptions(lam=cfg["lam"], max_iter=cfg["max_iter"], rel_tol=cfg["rel_tol"]),
        mask_dep=mask,
    )
    _write_vector(out / "a.mat", result.a)
    _write_vector(out / "b.mat", result.b)
    _write_keyvalues(
        out / "solution.cfg",
        {
            "objective": f"{result.objective:.17g}",
            "iterations": result.iterations,
            "converged": result.converged,
        },
    )
    print(f"objective {result.objective:.8g} in {result.iterations} iterations")
    return 0


def _cmd_inpaint_tv(args) -> int:
    cfg = _load_config(args, INPAINT_TV_SCHEMA)
    out = _out_dir(args)
    image, maxval = read_pgm(cfg["image"])
    mask_img, _ = read_pgm(cfg["mask"])
    mask = mask_img > 0
    result = tv_inpaint(
        image, mask, TvOptions(weight=cfg["weight"], max_iter=cfg["max_iter"], tol=cfg["tol"])
    )
    write_pgm(out / "inpainted.pgm", np.clip(np.rint(result), 0, maxval), maxval=maxval)
    print(f"wrote {out / 'inpainted.pgm'}")
    return 0


def _cmd_learn(args) -> int:
    cfg = _load_config(args, LEARN_SCHEMA)
    out = _out_dir(args)
    if cfg["mode"] == "synthetic":
        truth = random_dictionary_pair(
            cfg["n_rows"], cfg["n_rows"], cfg["truth_atoms"], derive_seed(cfg["seed"], "learn-truth")
        )
        cols_int, cols_dep = [], []
        for j in range(cfg["samples"]):
            pair, _ = synthesize(
                truth, cfg["sparsity"], cfg["gamma"], cfg["snr_db"],
                derive_seed(cfg["seed"], "learn-sample", j),
            )
            npair, _, _ = normalize_pair(pair)
            cols_int.append(npair.y_int)
            cols_dep.append(npair.y_dep)
        dataset = SignalPool(np.column_stack(cols_int), np.column_stack(cols_dep))
        write_matrix(out / "truth_int.mat", truth.phi_int)
        write_matrix(out / "truth_dep.mat", truth.phi_dep)
    elif cfg["mode"] == "images":
        if not cfg["intensity_pgms"] or not cfg["depth_pgms"]:
            raise ParseError("image mode requires intensity_pgms and depth_pgms")
        intensity = [read_pgm(p.strip())[0] for p in cfg["intensity_pgms"].split(",")]
        depth = [read_pgm(p.strip())[0] for p in cfg["depth_pgms"].split(",")]
        masks = None
        if cfg["mask_pgms"]:
            masks = [read_pgm(p.strip())[0] > 0 for p in cfg["mask_pgms"].split(",")]
        if cfg["whiten"]:
            intensity, _ = whiten(intensity)
        dataset = ImagePatchSource(intensity, depth, masks, patch_size=cfg["patch_size"])
    else:
        raise ParseError(f"unknown mode {cfg['mode']!r}")

    learn_cfg = LearnConfig(
        n_atoms=cfg["n_atoms"],
        patch_size=cfg["patch_size"],
        batch_size=cfg["batch_size"],
        n_iterations=cfg["n_iterations"],
        eta=cfg["eta"],
        rho=cfg["rho"],
        inference=cfg["inference"],
        gl_lambda=cfg["gl_lambda"],
        seed=cfg["seed"],
    )
    dicts, history = learn(dataset, learn_cfg)
    write_matrix(out / "dict_int.mat", dicts.phi_int)
    write_matrix(out / "dict_dep.mat", dicts.phi_dep)
    _write_keyvalues(
        out / "dict_meta.cfg",
        {
            "patch_size": cfg["patch_size"],
            "eta": cfg["eta"],
            "n_iterations": history.iterations,
            "seed": cfg["seed"],
        },
    )
    if history.iterations:
        print(
            f"learned {cfg['n_atoms']} atoms in {history.iterations} iterations; "
            f"final mean residuals {history.mean_residual_int[-1]:.4f}/"
            f"{history.mean_residual_dep[-1]:.4f}"
        )
    else:
        print(f"wrote seeded initial dictionaries ({cfg['n_atoms']} atoms)")
    return 0


def _cmd_bound(args) -> int:
    cfg = _load_config(args, BOUND_SCHEMA)
    inputs = BoundInputs(
        eta=cfg["eta"], gamma=cfg["gamma"], t0=cfg["t0"], m=cfg["m"],
        delta_m=cfg["delta_m"], delta_m_t0=cfg["delta_m_t0"], f0=cfg["f0"],
    )
    c = bound_constant(inputs)
    bound = recovery_bound(inputs)
    print(f"C = {c:.10g}")
    print(f"bound = {bound:.10g}")
    return 0


def _experiment_cmd(schema, runner):
    def cmd(args) -> int:
        raw = read_config(args.config) if args.config else {}
        overrides = apply_schema(raw, schema)
        if args.seed is not None:
            overrides["seed"] = args.seed
        path = runner(overrides, _out_dir(args))
        print(f"wrote {path}")
        return 0

    return cmd


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jointsparse",
        description="Joint intensity-depth sparse coding toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "synth": (_cmd_synth, "generate a synthetic planted instance"),
        "solve-jbp": (_cmd_solve_jbp, "solve one coupled sparse-coding instance"),
        "solve-gl": (_cmd_solve_gl, "solve one group-lasso instance"),
        "inpaint-tv": (_cmd_inpaint_tv, "TV-inpaint a masked image"),
        "learn": (_cmd_learn, "run two-step dictionary learning"),
        "exp-recovery": (
            _experiment_cmd(RECOVERY_SCHEMA, run_recovery_experiment),
            "coefficient-recovery experiment",
        ),
        "exp-dict": (
            _experiment_cmd(DICT_RECOVERY_SCHEMA, run_dict_recovery_experiment),
            "dictionary-recovery experiment",
        ),
        "exp-inpaint": (
            _experiment_cmd(INPAINT_SCHEMA, run_inpaint_experiment),
            "depth-inpainting experiment",
        ),
        "bound": (_cmd_bound, "evaluate the recovery bound"),
    }
    for name, (func, help_text) in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory (default: cwd)")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Infeasible as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (JointSparseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
