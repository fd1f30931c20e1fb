"""Command-line front end: ``stochkap <subcommand> [options]``.

Subcommands
-----------
kl           KL spectra and retained modes of both random fields.
sample       Random field realizations and their coupled solutions.
mc           Monte Carlo reference run; saves ``mc_store.npz``.
pce          PC-based Gauss-Seidel solver; saves ``pce_store.npz``.
sensitivity  Variance decomposition from a saved PC store.
convergence  Per-iteration MC-vs-PC distances from a saved PC store.
compare      MC-vs-PC distances from saved MC and PC stores.

Exit status: 0 success, 2 configuration error, 3 numerical failure,
4 I/O error.
"""

import argparse
import dataclasses
import logging
import os
import sys

import numpy as np

from .config import config_hash, emit_document, model_hash, parse_config
from .driver import (
    convergence_study,
    cross_compare,
    draw_inputs,
    run_monte_carlo,
    run_pc_solver,
    variance_decomposition,
)
from .errors import ConfigurationError, NumericalError, UsageError
from .output import (
    MC_STORE,
    PC_STORE,
    OutputDir,
    load_mc_store,
    load_pc_store,
    save_mc_store,
    save_pc_store,
)
from .reactor import ReactorModel

__all__ = ["main", "build_parser"]

logger = logging.getLogger("stochkap")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4
DEFAULT_OUT = "stochkap_out"
SUBCOMMANDS = ("kl", "sample", "mc", "pce", "sensitivity", "convergence", "compare")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file (defaults: reference problem)")
    common.add_argument("--out", help="output directory (fallback: $STOCHKAP_OUT, then ./stochkap_out)")
    common.add_argument("--seed", type=int, help="override solver.rng_seed")
    common.add_argument("--threads", type=int, help="worker threads; never changes results")
    common.add_argument("--eps1", type=float, help="override solver.eps1")
    common.add_argument("--eps2", type=float, help="override solver.eps2")
    common.add_argument("--degree-p", type=int, help="override solver.p")
    common.add_argument("--mc-samples", type=int, help="override solver.mc_samples")
    common.add_argument(
        "--strict-paper", action="store_true",
        help="restart the flux degree search from 0 without the warm cap",
    )
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(
        prog="stochkap",
        description="Stochastic coupled heat/neutronics with reduced polynomial chaos.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")
    helps = {
        "kl": "KL eigenvalues and eigenfunctions of both fields",
        "sample": "random field realizations and coupled solutions",
        "mc": "Monte Carlo reference run",
        "pce": "PC-based Gauss-Seidel solver with dimension reduction",
        "sensitivity": "variance decomposition table (needs a pce run)",
        "convergence": "per-iteration MC-vs-PC distances (needs a pce run)",
        "compare": "MC-vs-PC distances (needs mc and pce runs)",
    }
    parsers = {
        name: sub.add_parser(name, parents=[common], help=helps[name], description=helps[name])
        for name in SUBCOMMANDS
    }
    parsers["sample"].add_argument("--xi", help="explicit comma-separated xi vector (m values)")
    parsers["sample"].add_argument("--zeta", help="explicit comma-separated zeta vector (n values)")
    return parser


def _apply_overrides(cfg, args):
    solver = {}
    for flag, key in (
        ("seed", "rng_seed"),
        ("threads", "threads"),
        ("eps1", "eps1"),
        ("eps2", "eps2"),
        ("degree_p", "p"),
        ("mc_samples", "mc_samples"),
    ):
        value = getattr(args, flag)
        if value is not None:
            solver[key] = value
    if args.strict_paper:
        solver["warm_cap"] = False
    if not solver:
        return cfg
    try:
        return dataclasses.replace(cfg, solver=dataclasses.replace(cfg.solver, **solver))
    except ConfigurationError as exc:
        raise ConfigurationError(f"solver: {exc}") from exc


def _out_dir(cfg, args):
    return args.out or cfg.output.directory or os.environ.get("STOCHKAP_OUT") or DEFAULT_OUT


def _x(model):
    return model.mesh.nodes


def cmd_kl(cfg, model, out, args=None):
    kh, ks = model.kl_h, model.kl_sigma
    rows = [
        (i + 1, kh.all_eigenvalues[i], ks.all_eigenvalues[i])
        for i in range(max(len(kh.all_eigenvalues), len(ks.all_eigenvalues)))
    ]
    out.csv("kl_eigenvalues.csv", ["index", "lambda_h", "lambda_sigma"], rows)
    for tag, kl in (("h", kh), ("sigma", ks)):
        header = ["x_cm"] + [f"mode_{j + 1}" for j in range(kl.n_terms)]
        out.csv(
            f"kl_eigenfunctions_{tag}.csv", header,
            np.column_stack([_x(model), kl.eigenfunctions]).tolist(),
        )
    out.json(
        "kl_summary.json",
        {
            tag: {
                "trace": float(np.sum(kl.all_eigenvalues)),
                "retained": kl.n_terms,
                "captured_fraction": kl.captured_fraction,
                "eigenfunction_norm": kl.eigenfunction_norm,
            }
            for tag, kl in (("h", kh), ("sigma", ks))
        },
    )


def _parse_vector(text, size, name):
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise ConfigurationError(f"--{name}: expected comma-separated numbers") from exc
    if len(values) != size:
        raise ConfigurationError(f"--{name}: expected {size} values, got {len(values)}")
    return np.array([values])


def cmd_sample(cfg, model, out, args=None):
    m, n = cfg.reactor.m, cfg.reactor.n
    xi_text = getattr(args, "xi", None)
    zeta_text = getattr(args, "zeta", None)
    if (xi_text is None) != (zeta_text is None):
        raise ConfigurationError("--xi and --zeta must be given together")
    if xi_text is not None:
        xi, zeta = _parse_vector(xi_text, m, "xi"), _parse_vector(zeta_text, n, "zeta")
    else:
        xi, zeta = draw_inputs(cfg.solver.rng_seed, cfg.output.field_samples, m, n)
    h = model.h_field(xi)
    sigma = model.sigma_field(zeta)
    sol = model.solve_coupled(xi, zeta, cfg.solver.max_outer_iters)
    x = _x(model)
    out.csv(
        "sample_inputs.csv",
        ["sample"] + [f"xi_{j + 1}" for j in range(m)] + [f"zeta_{j + 1}" for j in range(n)],
        [(k + 1, *xi[k], *zeta[k]) for k in range(xi.shape[0])],
    )
    out.csv(
        "sample_solutions.csv",
        ["sample", "x_cm", "h_J_per_K_cm2_s", "sigma_a_per_cm", "T_K", "Phi_per_cm2_s"],
        [
            (k + 1, x[i], h[k, i], sigma[k, i], sol.T[k, i], sol.Phi[k, i])
            for k in range(h.shape[0])
            for i in range(x.shape[0])
        ],
    )


def _field_stats_rows(x, t_mean, t_var, p_mean, p_var):
    return np.column_stack([x, t_mean, t_var, p_mean, p_var]).tolist()


_STATS_HEADER = ["x_cm", "T_mean_K", "T_var_K2", "Phi_mean_per_cm2_s", "Phi_var_per_cm4_s2"]


def cmd_mc(cfg, model, out, args=None):
    s = cfg.solver
    mc = run_monte_carlo(model, s.mc_samples, s.max_outer_iters, s.rng_seed, s.threads)
    t_mean, p_mean = mc.mean()
    t_var, p_var = mc.var() if mc.ok.sum() > 1 else (np.zeros_like(t_mean), np.zeros_like(p_mean))
    out.csv("mc_statistics.csv", _STATS_HEADER, _field_stats_rows(_x(model), t_mean, t_var, p_mean, p_var))
    ok = mc.ok
    rows = [
        (i + 1, np.median(mc.T_updates[ok, i]), np.median(mc.Phi_updates[ok, i]))
        for i in range(mc.T_updates.shape[1])
    ] if ok.any() else []
    out.csv("mc_updates.csv", ["iteration", "T_update_median", "Phi_update_median"], rows)
    out.json("mc_summary.json", {"samples": int(mc.T.shape[0]), "failed": int(mc.failed.sum())})
    save_mc_store(out.track(MC_STORE), mc, model_hash(cfg), config_hash(cfg))


def _eta_histogram(result, cfg, rng_key=1):
    red = result.reduced
    if red.d == 0:
        return None
    o = cfg.output
    rng = np.random.default_rng([cfg.solver.rng_seed, rng_key])
    xi = rng.uniform(-1.0, 1.0, (o.histogram_samples, red.xi_dim))
    eta = np.vstack([red.eta(xi[i : i + 8192]) for i in range(0, len(xi), 8192)])
    dims = min(red.d, 2)
    counts, edges = np.histogramdd(eta[:, :dims], bins=o.histogram_bins, density=True)
    centers = [0.5 * (e[1:] + e[:-1]) for e in edges]
    grid = np.meshgrid(*centers, indexing="ij")
    cols = [g.ravel() for g in grid] + [counts.ravel()]
    header = [f"eta_{j + 1}" for j in range(dims)] + ["density"]
    return header, np.column_stack(cols).tolist()


def cmd_pce(cfg, model, out, args=None):
    def progress(rec):
        logger.info(
            "iteration %d: d=%d q=%d T_update=%.3e Phi_update=%.3e (%.1fs)",
            rec.ell, rec.d, rec.q, rec.T_update, rec.Phi_update, rec.seconds,
        )

    result = run_pc_solver(model, cfg.solver, progress)
    W = model.W
    out.csv(
        "pce_iterations.csv",
        ["iteration", "d", "q", "T_update", "Phi_update", "heat_nodes", "mixed_nodes"],
        [(r.ell, r.d, r.q, r.T_update, r.Phi_update, r.heat_nodes, r.mixed_nodes) for r in result.records],
    )
    out.csv(
        "pce_eigenvalues.csv",
        ["iteration", "index", "eigenvalue"],
        [(r.ell, j + 1, v) for r in result.records for j, v in enumerate(r.eigenvalues)],
    )
    T, phi, red = result.T, result.Phi, result.reduced
    t_coef, p_coef = T.coefficients, phi.coefficients
    out.csv(
        "pce_statistics.csv", _STATS_HEADER,
        _field_stats_rows(
            _x(model), t_coef[0], np.sum(t_coef[1:] ** 2, axis=0),
            p_coef[0], np.sum(p_coef[1:] ** 2, axis=0),
        ),
    )
    for name, expansion, coef in (("T", T, t_coef), ("Phi", phi, p_coef)):
        norms = np.sqrt(np.einsum("ki,ij,kj->k", coef, W, coef))
        out.csv(
            f"pce_{name}_coefficient_norms.csv",
            ["index", "multi_index", "total_degree", "w_norm"],
            [
                (k, "-".join(map(str, idx)), int(sum(idx)), norms[k])
                for k, idx in enumerate(expansion.basis.indices.tolist())
            ],
        )
    xi_idx = red.xi_basis.indices.tolist()
    out.csv(
        "pce_eta_coefficients.csv",
        ["alpha_index", "multi_index"] + [f"eta_{j + 1}" for j in range(red.d)],
        [(k, "-".join(map(str, xi_idx[k])), *red.reduced_coeffs[:, k]) for k in range(len(xi_idx))],
    )
    z_idx = red.zeta_basis.indices.tolist()
    x = _x(model)
    out.csv(
        "pce_reduced_modes.csv",
        ["mode", "beta_index", "multi_index", "x_cm", "value"],
        [
            (j + 1, b, "-".join(map(str, z_idx[b])), x[i], red.basis_vectors[j, b, i])
            for j in range(red.d)
            for b in range(red.basis_vectors.shape[1])
            for i in range(x.shape[0])
        ],
    )
    phi.family.to_csv(out.track("pce_gamma_family.csv"))
    for level, embedded in sorted(result.eta_rules.items()):
        embedded.rule.to_csv(out.track(f"pce_embedded_rule_level{level}.csv"))
    result.mixed_rule.to_csv(out.track("pce_mixed_rule.csv"))
    hist = _eta_histogram(result, cfg)
    if hist is not None:
        out.csv("pce_eta_histogram.csv", *hist)
    out.json(
        "pce_summary.json",
        {
            "records": [r.to_dict() for r in result.records],
            "final": {"d": red.d, "q": phi.degree, "iterations": len(result.records)},
        },
    )
    save_pc_store(out.track(PC_STORE), result, model_hash(cfg), config_hash(cfg))


def _load_pc(cfg, out):
    result, meta = load_pc_store(out.path(PC_STORE))
    if meta["model_hash"] != model_hash(cfg):
        raise UsageError(
            f"{out.path(PC_STORE)} was produced with a different model configuration; "
            "rerun `stochkap pce` with this config"
        )
    return result


def cmd_sensitivity(cfg, model, out, args=None):
    result = _load_pc(cfg, out)
    frac = variance_decomposition(result.T, result.Phi, model.W)
    rows = [
        ("T", "xi", frac["T"][0]), ("T", "zeta", frac["T"][1]), ("T", "xi_zeta", frac["T"][2]),
        ("Phi", "eta", frac["Phi"][0]), ("Phi", "zeta", frac["Phi"][1]), ("Phi", "eta_zeta", frac["Phi"][2]),
    ]
    out.csv("sensitivity.csv", ["quantity", "source", "fraction"], rows)


def cmd_convergence(cfg, model, out, args=None):
    result = _load_pc(cfg, out)
    s = cfg.solver
    rows = convergence_study(model, result, cfg.output.compare_samples, s.rng_seed, s.threads)
    out.csv(
        "convergence.csv",
        ["iteration", "T_distance", "Phi_distance", "T_update", "Phi_update"],
        [(r["ell"], r["T_distance"], r["Phi_distance"], r["T_update"], r["Phi_update"]) for r in rows],
    )


def cmd_compare(cfg, model, out, args=None):
    missing = [name for name in (PC_STORE, MC_STORE) if not out.path(name).exists()]
    if missing:
        raise FileNotFoundError(
            f"compare needs {' and '.join(missing)} in {out.root}; run "
            + " and ".join(f"`stochkap {'pce' if m == PC_STORE else 'mc'}`" for m in missing)
            + " with the same --out first"
        )
    result = _load_pc(cfg, out)
    mc, meta = load_mc_store(out.path(MC_STORE))
    if meta["model_hash"] != model_hash(cfg):
        raise UsageError(
            f"{out.path(MC_STORE)} was produced with a different model configuration; "
            "rerun `stochkap mc` with this config"
        )
    dist = cross_compare(mc, result, cfg.output.compare_samples, model.W)
    out.json("compare.json", dist)
    out.csv("compare.csv", ["quantity", "relative_w_distance", "samples"],
            [("T", dist["T"], dist["samples"]), ("Phi", dist["Phi"], dist["samples"])])


COMMANDS = {
    "kl": cmd_kl,
    "sample": cmd_sample,
    "mc": cmd_mc,
    "pce": cmd_pce,
    "sensitivity": cmd_sensitivity,
    "convergence": cmd_convergence,
    "compare": cmd_compare,
}


def run(args):
    cfg = _apply_overrides(parse_config(args.config), args)
    out = OutputDir(_out_dir(cfg, args))
    out.json(f"config_{args.command}.json", emit_document(cfg))
    COMMANDS[args.command](cfg, ReactorModel(cfg.reactor), out, args)
    out.finalize(args.command, config_hash(cfg))
    return out


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        out = run(args)
    except (ConfigurationError, UsageError) as exc:
        print(f"stochkap: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"stochkap: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"stochkap: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"stochkap {args.command}: wrote {len(out.written)} file(s) to {out.root}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
