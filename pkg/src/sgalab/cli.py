"""Command-line front end: predict, simulate, compare, tune, experiment.

Commands read one configuration file (see :mod:`sgalab.config` for the
grammar) and write artifacts into an output directory.  Artifacts embed the
configuration hash so downstream commands can refuse mismatched inputs.

Exit codes: 0 success; 1 usage or configuration problem; 2 scaling-regime
violation (including unreachable tuning targets); 3 no stationary law
(drift not Hurwitz); 4 artifact mismatch; 5 divergence.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__, artifacts, diagnostics, engine, theory
from .config import Setup, parse_config, recommend_kwargs, resolve_setup
from .engine import RecordingPlan, dataset_hash
from .errors import (
    ArtifactMismatchError,
    ConfigError,
    DataError,
    DivergenceError,
    RecommendationError,
    RegimeError,
    SgaLabError,
    StabilityError,
)
from .experiments import experiment_trees

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_REGIME = 2
EXIT_STABILITY = 3
EXIT_MISMATCH = 4
EXIT_DIVERGED = 5

MAX_ACF_FILES = 3
ACF_MAX_LAG = 2000


def _out_dir(tree: dict, flag: str | None) -> str:
    out = flag or tree.get("output", {}).get("dir", "out")
    os.makedirs(out, exist_ok=True)
    return out


def _apply_overrides(tree: dict, args) -> dict:
    """Fold command-line overrides into the tree before hashing."""
    execution = tree.setdefault("execution", {})
    if getattr(args, "seed", None) is not None:
        execution["seed"] = args.seed
    if getattr(args, "replicates", None) is not None:
        execution["replicates"] = args.replicates
    return tree


def _command_manifest(setup: Setup) -> dict:
    return {
        "config": setup.tree,
        "config_hash": setup.hash,
        "data_hash": dataset_hash(setup.data.records),
        "seed": setup.cfg.seed,
        "n": setup.n,
        "dim": setup.model.dim,
        "replicates": setup.replicates,
        "version": __version__,
    }


def _fmt_matrix(m: np.ndarray) -> str:
    return np.array2string(np.asarray(m), precision=4, suppress_small=True)


def _prediction_report(setup: Setup) -> theory.PredictionReport:
    info = setup.prediction_info
    return theory.predict(
        setup.cfg,
        info.j_mat,
        info.i_mat,
        setup.n,
        m_values=setup.m_values,
        t_grid=setup.t_grid,
    )


# ---------------------------------------------------------------- predict


def cmd_predict(tree: dict, out_flag: str | None = None, quiet: bool = False) -> int:
    setup = resolve_setup(tree)
    out = _out_dir(tree, out_flag)
    report = _prediction_report(setup)
    if setup.m_values and not report.averages:
        # every requested average landed outside the stated regime
        raise RegimeError(next(iter(report.average_errors.values())))
    payload = {
        "config_hash": setup.hash,
        "data_hash": dataset_hash(setup.data.records),
        "report": report.to_json_dict(),
    }
    artifacts.write_json(os.path.join(out, "predictions.json"), payload)
    artifacts.write_json(os.path.join(out, "manifest.json"), _command_manifest(setup))
    if not quiet:
        law = report.law
        print(f"predict: n={setup.n} dim={setup.model.dim} variant={setup.cfg.variant}")
        print(
            f"  exponents: step={law.frak_h} batch={law.frak_b}"
            f" temperature={law.frak_t} local={law.local_exponent:.4g}"
            f" slowdown={law.slowdown:.4g}"
        )
        print(
            f"  noise terms active: minibatch={law.minibatch_active}"
            f" gaussian={law.gaussian_active}"
        )
        print(f"  stationary covariance (rescaled):\n{_fmt_matrix(report.q_inf)}")
        print(
            f"  mixing: {report.mixing.epochs_iact:.4g} epochs (autocorrelation"
            f" convention), {report.mixing.epochs_gap:.4g} epochs (gap convention)"
        )
        for m, avg in sorted(report.averages.items()):
            print(f"  iterate-average covariance at m={m:g} epochs:\n{_fmt_matrix(avg.matrix)}")
        for m, msg in sorted(report.average_errors.items()):
            print(f"  iterate average at m={m:g}: unavailable ({msg})")
        print(f"  wrote {out}/predictions.json")
    return EXIT_OK


# --------------------------------------------------------------- simulate


def _resolve_init(setup: Setup):
    token = setup.init_token
    if token == "mle":
        return None
    if token == "zero":
        return np.zeros(setup.model.dim)
    if token == "stationary":
        info = setup.prediction_info
        ou = theory.ou_params(setup.cfg, info.j_mat, info.i_mat)
        q_inf = theory.stationary_cov(ou)
        return ("stationary", q_inf[: setup.model.dim, : setup.model.dim])
    scale = float(token.split(":", 1)[1])
    return ("overdispersed", scale)


def _run_replicate(setup: Setup, replicate: int) -> engine.RunRecord:
    cfg = setup.cfg.with_seed(setup.cfg.seed + replicate)
    avg_start = (
        setup.cfg.epochs_to_steps(setup.n, setup.average_start_epochs)
        if setup.average_start_epochs > 0
        else 0
    )
    plan = RecordingPlan(thin=setup.thin, average_start=avg_start)
    try:
        return engine.run(
            setup.model,
            setup.data,
            cfg,
            n_steps=setup.n_steps,
            theta_hat=setup.mle_theta,
            init=_resolve_init(setup),
            recording=plan,
        )
    except DivergenceError as exc:
        return exc.partial_record


def _simulate_chunk(payload: str) -> list[tuple[int, int | None]]:
    """Worker entry point: run a block of replicates and persist them."""
    job = json.loads(payload)
    setup = resolve_setup(job["tree"])
    out = []
    for r in job["indices"]:
        record = _run_replicate(setup, r)
        artifacts.save_run(job["out"], r, record, setup.hash)
        out.append((r, record.diverged_at))
    return out


def cmd_simulate(
    tree: dict,
    out_flag: str | None = None,
    threads: int | None = None,
    quiet: bool = False,
) -> int:
    setup = resolve_setup(tree)
    out = _out_dir(tree, out_flag)
    artifacts.write_json(os.path.join(out, "manifest.json"), _command_manifest(setup))
    replicates = setup.replicates
    workers = threads if threads else min(os.cpu_count() or 1, replicates)
    t0 = time.perf_counter()
    results: list[tuple[int, int | None]] = []
    if workers <= 1 or replicates == 1:
        for r in range(replicates):
            record = _run_replicate(setup, r)
            artifacts.save_run(out, r, record, setup.hash)
            results.append((r, record.diverged_at))
    else:
        chunks = [list(range(replicates))[i::workers] for i in range(workers)]
        chunks = [c for c in chunks if c]
        jobs = [
            json.dumps({"tree": setup.tree, "indices": chunk, "out": out})
            for chunk in chunks
        ]
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            for part in pool.map(_simulate_chunk, jobs):
                results.extend(part)
    elapsed = time.perf_counter() - t0
    artifacts.write_json(
        os.path.join(out, "timings.json"),
        {"simulate_seconds": elapsed, "replicates": replicates},
    )
    diverged = sorted(r for r, at in results if at is not None)
    if not quiet:
        print(
            f"simulate: {replicates} replicate(s), {setup.n_steps} steps each,"
            f" {elapsed:.1f} s -> {out}/trace_*.csv"
        )
        for r, at in sorted(results):
            if at is not None:
                print(f"  replicate {r}: DIVERGED at step {at} (partial trace kept)")
    if diverged:
        return EXIT_DIVERGED
    return EXIT_OK


# ---------------------------------------------------------------- compare


def _usable_runs(out: str, setup: Setup) -> tuple[list, list[int]]:
    indices = artifacts.list_runs(out)
    if not indices:
        raise ArtifactMismatchError(
            f"no trace files in {out}; run the simulate command first"
        )
    data_hash = dataset_hash(setup.data.records)
    records = []
    for idx in indices:
        record, run_hash = artifacts.load_run(out, idx)
        if run_hash != setup.hash:
            raise ArtifactMismatchError(
                f"trace {idx} was produced under config hash {run_hash[:12]}..,"
                f" current config hashes to {setup.hash[:12]}.."
            )
        if record.manifest["data_hash"] != data_hash:
            raise ArtifactMismatchError(
                f"trace {idx} was produced from different data"
            )
        records.append(record)
    alive = [r for r in records if r.diverged_at is None]
    dead = [r.manifest["diverged_at"] for r in records if r.diverged_at is not None]
    return (alive, dead) if alive else (records, dead)


def cmd_compare(tree: dict, out_flag: str | None = None, quiet: bool = False) -> int:
    setup = resolve_setup(tree)
    out = _out_dir(tree, out_flag)
    pred_payload = artifacts.read_json(os.path.join(out, "predictions.json"))
    if pred_payload["config_hash"] != setup.hash:
        raise ArtifactMismatchError(
            f"predictions.json carries config hash"
            f" {pred_payload['config_hash'][:12]}.., current config hashes to"
            f" {setup.hash[:12]}.."
        )
    alive, diverged_steps = _usable_runs(out, setup)
    if not any(r.diverged_at is None for r in alive):
        raise DivergenceError(
            "all replicates diverged; nothing to compare",
            step=diverged_steps[0] if diverged_steps else 0,
            last_iterate=alive[0].final_state,
        )

    report = _prediction_report(setup)
    d = setup.model.dim
    q_theta = report.q_inf[:d, :d]

    # stationary law: per-run covariances averaged over replicates; short
    # traces cannot support a covariance, which is reported rather than fatal
    stationary = None
    emp_cov = None
    mix = None
    trace_note = None
    try:
        covs = [diagnostics.empirical_cov(r, setup.burnin_fraction) for r in alive]
        emp_cov = np.mean(covs, axis=0)
        stationary = diagnostics.compare(emp_cov, q_theta)
        mix = diagnostics.mixing_summary(alive[0], report.ou)
    except DataError as exc:
        trace_note = str(exc)

    # iterate averages: across-replicate covariance when enough replicates
    averages_block = {}
    if len(alive) >= 30 and alive[0].avg_state is not None:
        emp_avg_cov, avg_mean = diagnostics.replicate_avg_cov(alive)
        win_lo, win_hi = alive[0].avg_window
        window_steps = win_hi - win_lo
        m_epochs = window_steps / setup.cfg.steps_per_epoch(setup.n)
        try:
            predicted_avg = theory.avg_cov_rescaled(report.ou, m_epochs)
            avg_cmp = diagnostics.compare(emp_avg_cov, predicted_avg.matrix)
            averages_block[f"{m_epochs:g}"] = {
                "window_epochs": m_epochs,
                "replicates": len(alive),
                "mean_rescaled_average": avg_mean,
                "comparison": avg_cmp.to_json_dict(),
                "predicted": predicted_avg.matrix,
            }
        except RegimeError as exc:
            averages_block[f"{m_epochs:g}"] = {
                "window_epochs": m_epochs,
                "error": str(exc),
            }

    payload = {
        "config_hash": setup.hash,
        "data_hash": dataset_hash(setup.data.records),
        "replicates_used": len(alive),
        "diverged_replicates": len(diverged_steps),
        "stationary": None if stationary is None else stationary.to_json_dict(),
        "empirical_cov": emp_cov,
        "predicted_cov": q_theta,
        "mixing": None if mix is None else {
            "empirical_epochs_per_coordinate": mix.epochs_per_coordinate,
            "empirical_worst_epochs": mix.worst_epochs,
            "rotated_basis": mix.rotated,
            "predicted_epochs_iact": report.mixing.epochs_iact,
            "predicted_epochs_gap": report.mixing.epochs_gap,
        },
        "trace_note": trace_note,
        "averages": averages_block,
    }
    artifacts.write_json(os.path.join(out, "comparison.json"), payload)

    for k, record in enumerate(alive[:MAX_ACF_FILES]):
        states = record.rescaled_states()
        if states.shape[0] < 2:
            continue
        max_lag = min(states.shape[0] - 1, ACF_MAX_LAG)
        rhos = np.column_stack(
            [
                diagnostics.autocorrelation(states[:, j], max_lag)
                for j in range(states.shape[1])
            ]
        )
        artifacts.save_acf(out, k, rhos)

    if not quiet:
        print(f"compare: {len(alive)} replicate(s) against predictions in {out}")
        print("  quantity                     empirical    predicted    rel.error")
        if stationary is not None:
            print(
                "  stationary cov (Frobenius)   "
                f"{np.linalg.norm(emp_cov):<12.4g} {np.linalg.norm(q_theta):<12.4g}"
                f" {stationary.rel_frobenius_error:.3f}"
            )
            print(
                "  mixing time (epochs)         "
                f"{mix.worst_epochs:<12.3g} {report.mixing.epochs_iact:<12.3g}"
                f" {abs(mix.worst_epochs - report.mixing.epochs_iact) / max(report.mixing.epochs_iact, 1e-300):.3f}"
            )
        else:
            print(f"  stationary block skipped: {trace_note}")
        for key, block in sorted(averages_block.items()):
            if "comparison" in block:
                cmp = block["comparison"]
                print(
                    f"  iterate-average cov (m={key})   "
                    f"{np.linalg.norm(np.asarray(block['mean_rescaled_average'])):<12.4g}"
                    f" {'-':<12}"
                    f" {cmp['rel_frobenius_error']:.3f}"
                )
            else:
                print(f"  iterate-average cov (m={key}): {block['error']}")
        if diverged_steps:
            print(f"  note: {len(diverged_steps)} replicate(s) diverged and were excluded")
        print(f"  wrote {out}/comparison.json")
    return EXIT_OK


# ------------------------------------------------------------------- tune


def cmd_tune(tree: dict, out_flag: str | None = None, quiet: bool = False) -> int:
    setup = resolve_setup(tree)
    out = _out_dir(tree, out_flag)
    kwargs = recommend_kwargs(tree)
    rec = theory.recommend_tuning(info=setup.info, **kwargs)
    payload = {
        "config_hash": setup.hash,
        "target": rec.target,
        "recommended_config": rec.cfg.to_dict(),
        "step_size": rec.cfg.step_size(setup.n),
        "batch_size": rec.cfg.batch_size(setup.n),
        "inverse_temperature": (
            "inf"
            if math.isinf(rec.cfg.inverse_temperature(setup.n))
            else rec.cfg.inverse_temperature(setup.n)
        ),
        "target_cov": rec.target_cov,
        "achieved_cov": rec.achieved_cov,
        "closure_residual": rec.closure_residual,
        "mixing_epochs": rec.mixing_epochs,
        "notes": rec.notes,
    }
    artifacts.write_json(os.path.join(out, "recommendation.json"), payload)
    if not quiet:
        cfg = rec.cfg
        print(f"tune: target = {rec.target} (n = {setup.n})")
        print(
            f"  exponents: step={cfg.frak_h} batch={cfg.frak_b}"
            f" temperature={cfg.frak_t}"
        )
        print(
            f"  constants: c_h={cfg.c_h:.6g} c_b={cfg.c_b:.6g} c_beta={cfg.c_beta:.6g}"
            f" variant={cfg.variant}"
        )
        print(
            f"  at this n: step size {payload['step_size']:.6g},"
            f" batch size {payload['batch_size']},"
            f" inverse temperature {payload['inverse_temperature']}"
        )
        print(f"  closure residual: {rec.closure_residual:.3e}")
        print(f"  predicted mixing: {rec.mixing_epochs:.4g} epochs")
        for note in rec.notes:
            print(f"  note: {note}")
        print(f"  wrote {out}/recommendation.json")
    return EXIT_OK


# ------------------------------------------------------------- experiment


def cmd_experiment(
    name: str,
    out_flag: str | None = None,
    scale: float = 1.0,
    seed: int = 0,
    threads: int | None = None,
    epochs_override: float | None = None,
    quiet: bool = False,
) -> int:
    trees = experiment_trees(name, scale=scale, seed=seed, epochs_override=epochs_override)
    root = out_flag or name.replace("-", "_") + "_out"
    os.makedirs(root, exist_ok=True)
    summary: dict = {"experiment": name, "scale": scale, "seed": seed, "variants": {}}
    worst_exit = EXIT_OK
    for variant, tree in trees:
        out = os.path.join(root, variant)
        os.makedirs(out, exist_ok=True)
        artifacts.write_json(os.path.join(out, "config.json"), tree)
        if not quiet:
            print(f"=== {name} / {variant} ===")
        entry: dict = {"out": out}
        try:
            cmd_predict(tree, out, quiet=quiet)
            code = cmd_simulate(tree, out, threads=threads, quiet=quiet)
            if code == EXIT_DIVERGED:
                entry["diverged"] = True
                # divergence is a finding here, not a failure of the harness
                indices = artifacts.list_runs(out)
                steps = []
                for idx in indices:
                    record, _ = artifacts.load_run(out, idx)
                    if record.diverged_at is not None:
                        steps.append(record.diverged_at)
                entry["diverged_at_steps"] = steps
                if not quiet:
                    print(f"  {variant}: diverged (recorded), continuing")
            else:
                entry["diverged"] = False
                cmd_compare(tree, out, quiet=quiet)
                comparison = artifacts.read_json(os.path.join(out, "comparison.json"))
                stationary = comparison.get("stationary")
                mixing = comparison.get("mixing")
                if stationary is not None:
                    entry["stationary_rel_error"] = stationary["rel_frobenius_error"]
                if mixing is not None:
                    entry["mixing_empirical"] = mixing["empirical_worst_epochs"]
                    entry["mixing_predicted"] = mixing["predicted_epochs_iact"]
                entry["averages"] = {
                    key: (
                        block["comparison"]["rel_frobenius_error"]
                        if "comparison" in block
                        else block.get("error")
                    )
                    for key, block in comparison.get("averages", {}).items()
                }
        except SgaLabError as exc:
            entry["error"] = f"{type(exc).__name__}: {exc}"
            worst_exit = max(worst_exit, EXIT_USAGE)
            if not quiet:
                print(f"  {variant}: failed ({entry['error']})")
        summary["variants"][variant] = entry
    artifacts.write_json(os.path.join(root, "summary.json"), summary)
    if not quiet:
        print(f"=== {name}: mixing times (epochs) ===")
        print(f"  {'variant':<22} {'Emp.':>8} {'Pred.':>8} {'cov.err':>8}")
        for variant, entry in summary["variants"].items():
            if entry.get("diverged"):
                print(f"  {variant:<22} {'diverged':>8} {'-':>8} {'-':>8}")
            elif "error" in entry or "mixing_empirical" not in entry:
                tag = "error" if "error" in entry else "short"
                print(f"  {variant:<22} {tag:>8} {'-':>8} {'-':>8}")
            else:
                print(
                    f"  {variant:<22} {entry['mixing_empirical']:>8.2f}"
                    f" {entry['mixing_predicted']:>8.2f}"
                    f" {entry.get('stationary_rel_error', float('nan')):>8.3f}"
                )
        print(f"wrote {root}/summary.json")
    return worst_exit


# ------------------------------------------------------------------- main


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="sgalab",
        description=(
            "Simulate fixed-step stochastic-gradient algorithms and compare"
            " them with their large-sample diffusion predictions."
        ),
    )
    parser.add_argument("--version", action="version", version=f"sgalab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument(
            "--config", required=config_required, help="configuration file (INI or JSON)"
        )
        p.add_argument("--out", help="output directory (default: [output] dir)")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")

    p = sub.add_parser("predict", help="write large-sample predictions")
    common(p)

    p = sub.add_parser("simulate", help="run seeded replicates and persist traces")
    common(p)
    p.add_argument("--seed", type=int, help="override [execution] seed")
    p.add_argument("--replicates", type=int, help="override [execution] replicates")
    p.add_argument("--threads", type=int, help="worker processes (default: cores)")

    p = sub.add_parser("compare", help="compare persisted traces with predictions")
    common(p)

    p = sub.add_parser("tune", help="recommend a tuning for a covariance target")
    common(p)

    p = sub.add_parser("experiment", help="run a full named experiment")
    p.add_argument("name", choices=["exp1", "exp2-synthetic", "exp3-synthetic"])
    p.add_argument("--out", help="output directory root")
    p.add_argument("--scale", type=float, default=1.0,
                   help="multiply n and divide epochs by this factor")
    p.add_argument("--seed", type=int, default=0, help="base run seed")
    p.add_argument("--threads", type=int, help="worker processes")
    p.add_argument("--epochs", type=float, default=None,
                   help="override epochs per variant (smoke runs)")
    p.add_argument("--quiet", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "experiment":
            return cmd_experiment(
                args.name,
                out_flag=args.out,
                scale=args.scale,
                seed=args.seed,
                threads=args.threads,
                epochs_override=args.epochs,
                quiet=args.quiet,
            )
        tree = _apply_overrides(parse_config(args.config), args)
        if args.command == "predict":
            return cmd_predict(tree, args.out, quiet=args.quiet)
        if args.command == "simulate":
            return cmd_simulate(tree, args.out, threads=args.threads, quiet=args.quiet)
        if args.command == "compare":
            return cmd_compare(tree, args.out, quiet=args.quiet)
        if args.command == "tune":
            return cmd_tune(tree, args.out, quiet=args.quiet)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RegimeError, RecommendationError) as exc:
        print(f"regime error: {exc}", file=sys.stderr)
        return EXIT_REGIME
    except StabilityError as exc:
        print(f"stability error: {exc}", file=sys.stderr)
        return EXIT_STABILITY
    except ArtifactMismatchError as exc:
        print(f"artifact mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
