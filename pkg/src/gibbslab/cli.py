"""Experiment runner.

Subcommands: spectrum, sample-gaussian, classical-gibbs, quantum-gibbs,
hartree, study-1d, study-2d-classical.  Exit codes: 0 success, 2 config
error, 3 numerical failure (nonconvergence or unsafe cutoffs under
--strict).  Result documents are deterministic; wall-clock metadata goes to
a separate meta.json.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import classical_gibbs as cg
from . import fock_quantum as fq
from . import formats, hartree, studies
from .config import ConfigError, RunConfig, load_config, validate
from .gaussian import sample_gaussian
from .interaction import build_pair_tensor
from .spectral import schatten_trace, shift_potential

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gibbslab",
                                description="Gibbs states of trapped Bose gases")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("spectrum", "sample-gaussian", "classical-gibbs", "quantum-gibbs",
                 "hartree", "study-1d", "study-2d-classical"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, default=None,
                        help="INI config file; defaults apply when omitted")
        sp.add_argument("--seed", type=int, default=None, help="override classical.seed")
        sp.add_argument("--out", type=Path, default=None, help="override output.directory")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--format", choices=("json", "csv"), default=None)
        sp.add_argument("--strict", action="store_true",
                        help="exit 3 on nonconvergence or unsafe cutoffs")
    return p


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.config is None:
        validate(cfg)
    if args.seed is not None:
        cfg.classical.seed = args.seed
    if args.out is not None:
        cfg.output.directory = str(args.out)
    if args.format is not None:
        cfg.output.format = args.format
    return cfg


def _outdir(cfg: RunConfig) -> Path:
    d = Path(cfg.output.directory)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _emit(cfg: RunConfig, out: Path, name: str, results: dict,
          rows: list[dict] | None = None) -> list[Path]:
    written = []
    if cfg.output.format == "json" or rows is None:
        path = out / f"{name}.json"
        formats.write_json(path, name, results, config_echo=cfg.echo())
        written.append(path)
    if rows is not None and cfg.output.format == "csv":
        path = out / f"{name}.csv"
        formats.write_csv(path, rows)
        written.append(path)
    meta = out / "meta.json"
    meta.write_text(json.dumps({"written_at": time.time(),
                                "gibbslab_version": __version__}) + "\n",
                    encoding="utf-8")
    return written


def _rowdicts(objs) -> list[dict]:
    return [dataclasses.asdict(o) for o in objs]


def cmd_spectrum(cfg: RunConfig, out: Path, args) -> int:
    op = studies.build_model_operator(cfg)
    if cfg.model.nu:
        op = shift_potential(op, cfg.model.nu)
    tr1 = schatten_trace(op, 1.0)
    tr2 = schatten_trace(op, 2.0)
    results = {
        "eigenvalues": op.eigenvalues,
        "growth_exponent": tr1.growth_exponent,
        "trace_class": not tr1.likely_divergent,
        "hilbert_schmidt": not tr2.likely_divergent,
        "partial_trace_p1": tr1.partial_sum,
        "partial_trace_p2": tr2.partial_sum,
    }
    rows = [{"index": j + 1, "eigenvalue": float(v)}
            for j, v in enumerate(op.eigenvalues)]
    _emit(cfg, out, "spectrum", results, rows)
    formats.write_matrix(out / "eigenvectors.gflm", op.eigenvectors)
    return EXIT_OK


def cmd_sample(cfg: RunConfig, out: Path, args) -> int:
    op = studies.build_model_operator(cfg)
    if cfg.model.nu:
        op = shift_potential(op, cfg.model.nu)
    ens = sample_gaussian(op, cfg.model.modes, cfg.classical.samples,
                          cfg.classical.seed)
    formats.write_ensemble(out / "ensemble.gfl1", ens)
    emp = (np.abs(ens.coefficients) ** 2).mean(axis=0)
    results = {
        "modes": ens.cutoff, "samples": ens.size, "seed": ens.seed,
        "operator_hash": ens.operator_hash,
        "empirical_mode_variance": emp,
        "target_mode_variance": 1.0 / op.eigenvalues[:ens.cutoff],
    }
    _emit(cfg, out, "sample-gaussian", results)
    return EXIT_OK


def cmd_classical(cfg: RunConfig, out: Path, args) -> int:
    op = studies.build_model_operator(cfg)
    if cfg.model.nu:
        op = shift_potential(op, cfg.model.nu)
    K = cfg.model.modes
    w = studies.bind_potential(cfg, op.grid)
    ens = sample_gaussian(op, K, cfg.classical.samples, cfg.classical.seed)
    kind = "renormalized" if cfg.interaction.renormalized else "bare"
    weighted = cg.reweight(ens, kind, op, w, K)
    zr = cg.estimate_log_zr(weighted)
    m1 = cg.reduced_moment(weighted, 1)
    m2 = cg.reduced_moment(weighted, 2) if K <= 12 else None
    results = {
        "log_zr": -zr.neg_log_zr, "neg_log_zr": zr.neg_log_zr,
        "stderr": zr.stderr, "ess": zr.ess,
        "low_confidence": zr.low_confidence,
        "moments": {"k1": m1.matrix, "k1_stderr": m1.stderr},
    }
    if m2 is not None:
        results["moments"]["k2"] = m2.matrix
        results["moments"]["k2_stderr"] = m2.stderr
    _emit(cfg, out, "classical-gibbs", results)
    formats.write_matrix(out / "moment_k1.gflm", m1.matrix)
    if m2 is not None:
        formats.write_matrix(out / "moment_k2.gflm", m2.matrix)
    if args.strict and zr.low_confidence:
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_quantum(cfg: RunConfig, out: Path, args) -> int:
    op = studies.build_model_operator(cfg)
    K, n_max = cfg.model.modes, cfg.quantum.n_max
    basis = fq.build_fock(K, n_max)
    H1 = fq.second_quantize_one_body(basis, op.unshifted_eigenvalues[:K])
    c = cfg.quantum.coupling_c
    w = studies.bind_potential(cfg, op.grid)
    Hpair = None
    if c != 0.0:
        Hpair = fq.second_quantize_pair(basis, build_pair_tensor(op, w, K))
    rows = []
    unsafe = False
    last = None
    for T in cfg.quantum.t_schedule:
        lam = c / T
        H = H1 if Hpair is None else H1 + Hpair.scaled(lam)
        res = fq.gibbs_state(H, T, cfg.model.nu, basis)
        unsafe = unsafe or not res.cutoff_safe
        rows.append({"T": float(T), "lambda": lam,
                     "free_energy": res.free_energy,
                     "log_partition": res.log_partition,
                     "mean_particles": res.mean_particles,
                     "top_sector_weight": res.top_sector_weight,
                     "cutoff_safe": res.cutoff_safe})
        last = res
    rdm1 = fq.reduced_density(last.state, basis, 1)
    rdm2 = fq.reduced_density(last.state, basis, 2)
    results = {"schedule": rows,
               "final_rdm1_eigenvalues": np.linalg.eigvalsh(rdm1.matrix)}
    _emit(cfg, out, "quantum-gibbs", results, rows)
    formats.write_matrix(out / "rdm_k1.gflm", rdm1.matrix)
    formats.write_matrix(out / "rdm_k2.gflm", rdm2.matrix)
    if args.strict and unsafe:
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_hartree(cfg: RunConfig, out: Path, args) -> int:
    from .spectral import GridSpec, potential_values
    hgrid = GridSpec(dimension=cfg.model.dimension,
                     half_width=cfg.model.half_width, points=cfg.hartree.points)
    V = potential_values(hgrid, cfg.model.potential,
                         s=cfg.model.s if cfg.model.potential == "power" else None)
    w = studies.bind_potential(cfg, hgrid)
    stab = hartree.counterterm_stabilization(
        hgrid, V, w, list(cfg.hartree.t_schedule), cfg.hartree.kappa,
        coupling_c=cfg.hartree.coupling_c, damping=cfg.hartree.damping,
        tol=cfg.hartree.tol, max_iter=cfg.hartree.max_iter,
        shared_modes=cfg.hartree.shared_modes,
        measure=cfg.hartree.momentum_measure)
    rows = [{"T": r.T, "lambda": r.lam, "nu": r.nu, "iterations": r.iterations,
             "residual": r.residual, "F_rH": r.free_energy,
             "E0": r.reference_energy, "delta_inf": r.delta_inf,
             "schatten_p_dist": r.schatten_p_dist} for r in stab.rows]
    results = {"rows": rows, "p": stab.p, "shared_modes": stab.shared_modes,
               "sandwich_ok": stab.sandwich_ok,
               "sandwich_margin": stab.sandwich_margin,
               "delta_decreasing": stab.delta_decreasing,
               "schatten_decreasing": stab.schatten_decreasing}
    _emit(cfg, out, "hartree", results)
    formats.write_csv(out / "hartree.csv", rows)
    nonconverged = any(r.iterations >= cfg.hartree.max_iter for r in stab.rows)
    if args.strict and nonconverged:
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_study_1d(cfg: RunConfig, out: Path, args) -> int:
    rep = studies.run_study_1d(cfg, threads=args.threads)
    rows = [{"T": p.T, "lambda": p.lam,
             "F_lambda": p.free_energy_interacting, "F_0": p.free_energy_free,
             "diff_over_T": p.diff_over_T, "neg_log_zr": rep.neg_log_zr,
             "zr_stderr": rep.zr_stderr, "discrepancy": p.discrepancy,
             "delta_1": p.delta_1, "delta_2": p.delta_2,
             "mean_particles": p.mean_particles,
             "top_sector_weight": p.top_sector_weight,
             "cutoff_safe": p.cutoff_safe, "audit_delta_F": p.audit_delta_F}
            for p in rep.points]
    results = {"points": rows, "neg_log_zr": rep.neg_log_zr,
               "zr_stderr": rep.zr_stderr, "ess": rep.ess,
               "discrepancy_decreasing": rep.discrepancy_decreasing,
               "delta_1_decreasing": rep.delta_1_decreasing,
               "delta_2_decreasing": rep.delta_2_decreasing,
               "final_discrepancy": rep.final_discrepancy,
               "final_threshold": rep.final_threshold,
               "trace_class_exponent": rep.trace_class_exponent}
    _emit(cfg, out, "study-1d", results, rows)
    if args.strict and any(not p.cutoff_safe for p in rep.points):
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_study_2d(cfg: RunConfig, out: Path, args) -> int:
    rep = studies.run_study_2d_classical(cfg, threads=args.threads)
    uv_rows = _rowdicts(rep.uv_points)
    results = {
        "uv": uv_rows,
        "cauchy": _rowdicts(rep.cauchy_points),
        "direct_growing": rep.direct_growing,
        "exchange_increments_shrinking": rep.exchange_increments_shrinking,
        "cauchy_decreasing": rep.cauchy_decreasing,
        "stabilization": {
            "rows": [{"T": r.T, "lambda": r.lam, "nu": r.nu,
                      "iterations": r.iterations, "residual": r.residual,
                      "F_rH": r.free_energy, "E0": r.reference_energy,
                      "delta_inf": r.delta_inf,
                      "schatten_p_dist": r.schatten_p_dist}
                     for r in rep.stabilization.rows],
            "sandwich_ok": rep.stabilization.sandwich_ok,
            "sandwich_margin": rep.stabilization.sandwich_margin,
            "delta_decreasing": rep.stabilization.delta_decreasing,
            "schatten_decreasing": rep.stabilization.schatten_decreasing,
        },
        "relative_moment_trace_norm": rep.relative_moment_trace_norm,
        "integrability_w_hat": rep.integrability_w_hat,
        "integrability_w_trap": rep.integrability_w_trap,
        "integrability_ok": rep.integrability_ok,
    }
    _emit(cfg, out, "study-2d-classical", results, uv_rows)
    return EXIT_OK


_COMMANDS = {
    "spectrum": cmd_spectrum,
    "sample-gaussian": cmd_sample,
    "classical-gibbs": cmd_classical,
    "quantum-gibbs": cmd_quantum,
    "hartree": cmd_hartree,
    "study-1d": cmd_study_1d,
    "study-2d-classical": cmd_study_2d,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _load(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = _outdir(cfg)
    try:
        return _COMMANDS[args.command](cfg, out, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (hartree.GapClosedError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
