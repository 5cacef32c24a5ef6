"""Command-line interface.

Five subcommands form a pipeline over one output directory:

  simulate   draw deliberation trajectories        -> trajectories.json
  fit        recover parameters from trajectories  -> fits.json
  analyze    agent/system metric tables            -> agents.csv, system.csv,
                                                      analyze_summary.json
  verify     self-contained numerical checks       -> verify_report.txt/.json
  compare    aggregation strategies by pool        -> compare.csv, compare.json

Global flags (before the subcommand): --config FILE, --seed N (overrides
every section seed), --output-dir DIR, --quiet.  Subcommand flags override
the matching config keys.  Exit codes: 0 success, 1 invalid input or
configuration, 2 numerical failure (including failed verify checks).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace

import numpy as np
import scipy.stats

from . import io as fio
from .config import RunConfig, load_config
from .dynamics import aggregate_pi, influence_weights, settle, simulate
from .errors import (
    ConfigError,
    EmptyInput,
    MissingLabels,
    MissingParams,
    NotContractive,
    NumericalError,
    ParseError,
    ShapeMismatch,
    TooFewPoints,
    ValidationError,
)
from .estimation import FitConfig, fit_global, fit_sample, parameter_variability
from .metrics import AgentMetricRow, confidence_metrics, spearman, trajectory_metrics
from .model import DeliberationTrajectory, FJParameters
from .scenarios import (
    ExclusiveScenario,
    ImperfectScenario,
    gen_exclusive,
    gen_imperfect,
)
from .verify import run_all_checks

__all__ = ["build_parser", "run", "main"]


class _Parser(argparse.ArgumentParser):
    """Raises instead of exiting so run() controls the exit code."""

    def error(self, message):
        raise ConfigError(message)


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _override(section, args, names):
    """Apply non-None CLI flags on top of a config section."""
    updates = {}
    for name in names:
        value = getattr(args, name, None)
        if value is not None:
            updates[name] = value
    return replace(section, **updates) if updates else section


def mean_ci(values, confidence: float = 0.95) -> "tuple[float, float | None]":
    """Sample mean and Student-t CI half-width (None when n < 2)."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise EmptyInput("no values to aggregate")
    mean = float(arr.mean())
    if arr.size < 2:
        return mean, None
    sd = float(arr.std(ddof=1))
    quantile = float(scipy.stats.t.ppf(0.5 + confidence / 2.0, arr.size - 1))
    return mean, quantile * sd / math.sqrt(arr.size)


def _ci_entry(values) -> dict:
    mean, half = mean_ci(values)
    return {"mean": mean, "ci95": half, "n": len(values)}


def _group_by(trajs, key: str) -> "dict[str, list[DeliberationTrajectory]]":
    groups: dict[str, list[DeliberationTrajectory]] = {}
    for traj in trajs:
        groups.setdefault(traj.metadata.get(key, "0"), []).append(traj)
    return groups


def _shared_n(trajs) -> int:
    counts = {t.n for t in trajs}
    if len(counts) != 1:
        raise ShapeMismatch(
            f"samples mix agent counts {sorted(counts)}; analyze one batch at a time"
        )
    return counts.pop()


# -- simulate ---------------------------------------------------------------


def _draw_pool_params(rng: np.random.Generator, sim) -> FJParameters:
    n = sim.agents
    gamma = rng.uniform(sim.gamma_min, sim.gamma_max, size=n)
    alpha = rng.uniform(sim.alpha_min, sim.alpha_max, size=n)
    # entries bounded away from 0 keep every row comfortably stochastic
    w = rng.uniform(0.1, 1.0, size=(n, n))
    np.fill_diagonal(w, 0.0)
    w /= w.sum(axis=1, keepdims=True)
    return FJParameters(
        gamma=gamma, alpha=alpha, w=w, mask=FJParameters.complete_mask(n)
    )


def _scenario_snapshots(sim):
    total = sim.pools * sim.samples
    if sim.scenario == "exclusive":
        sc = ExclusiveScenario(n=sim.agents, d=sim.labels, epsilon=sim.epsilon)
        return gen_exclusive(sc, total, sim.seed)
    if sim.scenario == "imperfect":
        c = None if sim.labels == 2 else sim.c
        sc = ImperfectScenario(n=sim.agents, d=sim.labels, p=sim.p, u=sim.u, c=c)
        return gen_imperfect(sc, total, sim.seed)
    raise ConfigError(f"unknown scenario {sim.scenario!r}")


def _load_params_file(sim):
    if not sim.params_file:
        raise ConfigError("simulate mode 'params' requires params_file")
    try:
        with open(sim.params_file, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read {sim.params_file!r}: {exc}") from exc
    if not isinstance(raw, dict) or "innate" not in raw:
        raise ParseError("params file must be a JSON object with an 'innate' snapshot")
    params = fio.params_from_dict(raw)
    innate = np.asarray(raw["innate"], dtype=np.float64)
    label = raw.get("correct_label")
    if label is not None and (isinstance(label, bool) or not isinstance(label, int)):
        raise ParseError(f"correct_label must be an integer, got {label!r}")
    return params, innate, label


def cmd_simulate(args, cfg: RunConfig) -> int:
    sim = _override(
        cfg.simulate,
        args,
        (
            "mode",
            "samples",
            "pools",
            "agents",
            "labels",
            "rounds",
            "params_file",
            "scenario",
            "epsilon",
            "p",
            "u",
            "c",
            "gamma_mode",
        ),
    )
    if sim.samples < 1 or sim.pools < 1:
        raise ConfigError("samples and pools must be positive")
    if sim.rounds < 0:
        raise ConfigError("rounds must be >= 0")
    if sim.gamma_mode not in ("random", "confidence"):
        raise ConfigError(f"unknown gamma_mode {sim.gamma_mode!r}")
    rng = np.random.default_rng(sim.seed)
    trajs: list[DeliberationTrajectory] = []
    if sim.mode == "random":
        for pool in range(sim.pools):
            params = _draw_pool_params(rng, sim)
            for _ in range(sim.samples):
                innate = rng.dirichlet(np.ones(sim.labels), size=sim.agents)
                label = int(rng.integers(sim.labels))
                trajs.append(
                    simulate(
                        params,
                        innate,
                        sim.rounds,
                        sample_id=f"sample-{len(trajs):04d}",
                        correct_label=label,
                        metadata={"pool": str(pool)},
                    )
                )
    elif sim.mode == "scenario":
        sset = _scenario_snapshots(sim)
        index = 0
        for pool in range(sim.pools):
            pool_params = _draw_pool_params(rng, sim)
            for _ in range(sim.samples):
                innate = sset.beliefs[index]
                label = int(sset.labels[index])
                if sim.gamma_mode == "confidence":
                    conf, _ = confidence_metrics(innate)
                    params = replace(
                        pool_params,
                        gamma=np.clip(conf, sim.gamma_min, sim.gamma_max),
                    )
                else:
                    params = pool_params
                trajs.append(
                    simulate(
                        params,
                        innate,
                        sim.rounds,
                        sample_id=f"sample-{index:04d}",
                        correct_label=label,
                        metadata={"pool": str(pool), "scenario": sim.scenario},
                    )
                )
                index += 1
    elif sim.mode == "params":
        params, innate, label = _load_params_file(sim)
        trajs.append(
            simulate(
                params,
                innate,
                sim.rounds,
                sample_id="sample-0000",
                correct_label=label,
                metadata={"pool": "0"},
            )
        )
    else:
        raise ConfigError(f"unknown simulate mode {sim.mode!r}")
    out_path = os.path.join(args.output_dir, "trajectories.json")
    fio.save_trajectories(out_path, trajs)
    _say(args, f"wrote {out_path} ({len(trajs)} samples, {sim.rounds} rounds)")
    return 0


# -- fit --------------------------------------------------------------------


def cmd_fit(args, cfg: RunConfig) -> int:
    sec = _override(
        cfg.fit,
        args,
        ("objective", "max_iters", "tol", "reg_lambda", "restarts", "global_fit"),
    )
    in_path = args.input or os.path.join(args.output_dir, "trajectories.json")
    trajs = fio.load_trajectories(in_path)
    if not trajs:
        raise EmptyInput(f"{in_path!r} holds no samples")
    fit_config = FitConfig(
        objective=sec.objective,
        max_iters=sec.max_iters,
        tol=sec.tol,
        reg_lambda=sec.reg_lambda,
        restarts=sec.restarts,
        seed=sec.seed,
    )
    per_sample = []
    reports = []
    for traj in trajs:
        report = fit_sample(traj, fit_config)
        reports.append(report)
        per_sample.append(
            {
                "sample_id": traj.sample_id,
                "pool": traj.metadata.get("pool", "0"),
                "kl": report.kl,
                "mse": report.mse,
                "restart_index": report.restart_index,
                "iterations": len(report.objective_curve) - 1,
                "flat": report.flat,
                "params": fio.params_to_dict(report.params),
            }
        )
        _say(args, f"fit {traj.sample_id}: kl={report.kl:.6e} mse={report.mse:.6e}")
    document = {
        "schema_version": fio.SCHEMA_VERSION,
        "objective": sec.objective,
        "per_sample": per_sample,
    }
    if sec.global_fit:
        pooled = []
        groups = _group_by(trajs, "pool")
        for pool in sorted(groups):
            report = fit_global(groups[pool], fit_config)
            pooled.append(
                {
                    "pool": pool,
                    "n_samples": len(groups[pool]),
                    "kl": report.kl,
                    "mse": report.mse,
                    "restart_index": report.restart_index,
                    "flat": report.flat,
                    "params": fio.params_to_dict(report.params),
                }
            )
            _say(
                args,
                f"fit pool {pool} ({len(groups[pool])} samples): "
                f"kl={report.kl:.6e} mse={report.mse:.6e}",
            )
        document["global"] = pooled
    if len(reports) >= 2 and len({r.params.n for r in reports}) == 1:
        spread = parameter_variability(reports)
        document["variability"] = {
            "n_reports": spread.n_reports,
            "per_parameter": {
                name: {"mean": triple[0], "std": triple[1], "iqr": triple[2]}
                for name, triple in spread.per_parameter.items()
            },
        }
    document["aggregate"] = {
        "kl": _ci_entry([r.kl for r in reports]),
        "mse": _ci_entry([r.mse for r in reports]),
    }
    out_path = os.path.join(args.output_dir, "fits.json")
    fio.atomic_write_json(out_path, document)
    _say(args, f"wrote {out_path} ({len(reports)} fits)")
    return 0


# -- analyze ----------------------------------------------------------------


def _load_fits(path: str) -> dict:
    if not os.path.exists(path):
        raise MissingParams(f"{path!r} not found; run 'fjlab fit' first")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read {path!r}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ParseError(f"{path!r} must hold a JSON object")
    return raw


def _safe_spearman(x, y) -> "float | None":
    try:
        return spearman(x, y)
    except TooFewPoints:
        return None


def cmd_analyze(args, cfg: RunConfig) -> int:
    sec = _override(
        cfg.analyze, args, ("eta", "normalization", "consensus_threshold")
    )
    in_path = args.input or os.path.join(args.output_dir, "trajectories.json")
    fits_path = args.fits or (
        sec.fits
        if os.path.isabs(sec.fits)
        else os.path.join(args.output_dir, sec.fits)
    )
    trajs = fio.load_trajectories(in_path)
    if not trajs:
        raise EmptyInput(f"{in_path!r} holds no samples")
    fits = _load_fits(fits_path)
    by_sample = {}
    for entry in fits.get("per_sample", []):
        by_sample[entry["sample_id"]] = fio.params_from_dict(entry["params"])
    n = _shared_n(trajs)
    eta = sec.eta_vector(n)
    agent_rows = []
    system_rows = []
    confidences: list[float] = []
    influences: list[float] = []
    competences: list[float] = []
    consensus_flags = []
    disagreements = []
    mean_confidences = []
    for traj in trajs:
        params = by_sample.get(traj.sample_id)
        if params is None:
            raise MissingParams(f"no fitted parameters for sample {traj.sample_id!r}")
        rows, system = trajectory_metrics(
            traj,
            params,
            eta=eta,
            normalization=sec.normalization,
            consensus_threshold=sec.consensus_threshold,
        )
        for row in rows:
            agent_rows.append(
                [traj.sample_id] + [getattr(row, f) for f in AgentMetricRow.FIELDS]
            )
            if row.competence is not None:
                confidences.append(row.confidence)
                influences.append(row.influence)
                competences.append(row.competence)
        system_rows.append(
            [
                system.sample_id,
                system.disagreement,
                system.mean_confidence,
                system.consensus_reached,
            ]
            + [float(v) for v in system.pi.pi]
        )
        consensus_flags.append(system.consensus_reached)
        disagreements.append(system.disagreement)
        mean_confidences.append(system.mean_confidence)
    agents_path = os.path.join(args.output_dir, "agents.csv")
    system_path = os.path.join(args.output_dir, "system.csv")
    fio.write_csv(agents_path, ["sample_id", *AgentMetricRow.FIELDS], agent_rows)
    fio.write_csv(
        system_path,
        ["sample_id", "disagreement", "mean_confidence", "consensus_reached"]
        + [f"pi_{j}" for j in range(n)],
        system_rows,
    )
    summary = {
        "schema_version": fio.SCHEMA_VERSION,
        "n_samples": len(trajs),
        "n_agents": n,
        "consensus_rate": float(np.mean(consensus_flags)),
        "mean_disagreement": float(np.mean(disagreements)),
        "mean_confidence": float(np.mean(mean_confidences)),
        "spearman_confidence_competence": (
            _safe_spearman(confidences, competences) if competences else None
        ),
        "spearman_influence_competence": (
            _safe_spearman(influences, competences) if competences else None
        ),
    }
    summary_path = os.path.join(args.output_dir, "analyze_summary.json")
    fio.atomic_write_json(summary_path, summary)
    _say(
        args,
        f"wrote {agents_path}, {system_path}, {summary_path} "
        f"({len(trajs)} samples, {len(agent_rows)} agent rows)",
    )
    return 0


# -- verify -----------------------------------------------------------------


def cmd_verify(args, cfg: RunConfig) -> int:
    sec = _override(
        cfg.verify,
        args,
        (
            "checks",
            "prop_draws",
            "identity_draws",
            "scenario_samples",
            "consistency_samples",
        ),
    )
    results = run_all_checks(
        checks=sec.check_names(),
        prop_draws=sec.prop_draws,
        identity_draws=sec.identity_draws,
        scenario_samples=sec.scenario_samples,
        consistency_samples=sec.consistency_samples,
        seed=sec.seed,
    )
    lines = []
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        parts = [f"[{status}] {res.name}"]
        if res.measured:
            parts.append(" ".join(f"{k}={v!r}" for k, v in sorted(res.measured.items())))
        if res.detail:
            parts.append(f"| {res.detail}")
        line = " ".join(parts)
        lines.append(line)
        _say(args, line)
    passed = sum(1 for r in results if r.passed)
    lines.append(f"{passed}/{len(results)} checks passed")
    _say(args, lines[-1])
    txt_path = os.path.join(args.output_dir, "verify_report.txt")
    json_path = os.path.join(args.output_dir, "verify_report.json")
    fio.atomic_write_text(txt_path, "\n".join(lines) + "\n")
    fio.atomic_write_json(
        json_path,
        {
            "schema_version": fio.SCHEMA_VERSION,
            "all_passed": passed == len(results),
            "checks": [
                {
                    "name": r.name,
                    "passed": r.passed,
                    "measured": r.measured,
                    "detail": r.detail,
                }
                for r in results
            ],
        },
    )
    return 0 if passed == len(results) else 2


# -- compare ----------------------------------------------------------------


def cmd_compare(args, cfg: RunConfig) -> int:
    sec = _override(cfg.compare, args, ("group_key", "eta", "fallback_rounds"))
    in_path = args.input or os.path.join(args.output_dir, "trajectories.json")
    fits_path = args.fits or os.path.join(args.output_dir, "fits.json")
    trajs = fio.load_trajectories(in_path)
    if not trajs:
        raise EmptyInput(f"{in_path!r} holds no samples")
    fits = _load_fits(fits_path)
    pooled = {
        entry["pool"]: fio.params_from_dict(entry["params"])
        for entry in fits.get("global", [])
    }
    if not pooled:
        raise MissingParams(
            f"{fits_path!r} holds no pooled fits; rerun 'fjlab fit --global'"
        )
    n = _shared_n(trajs)
    eta = sec.eta_vector(n)
    eta_arr = np.full(n, 1.0 / n) if eta is None else eta
    groups = _group_by(trajs, sec.group_key)
    rows = []
    group_entries = []
    for pool in sorted(groups):
        labeled = [t for t in groups[pool] if t.correct_label is not None]
        if not labeled:
            continue
        params = pooled.get(pool)
        if params is None:
            raise MissingParams(f"no pooled fit for group {pool!r}")
        labels = np.array([t.correct_label for t in labeled])
        innate_mix = np.stack([eta_arr @ t.innate for t in labeled])
        final_mix = np.stack([eta_arr @ t.final for t in labeled])
        try:
            pi = aggregate_pi(influence_weights(params), eta_arr).pi
            influence_mix = np.stack([pi @ t.innate for t in labeled])
        except NotContractive:
            influence_mix = np.stack(
                [eta_arr @ settle(params, t.innate, sec.fallback_rounds) for t in labeled]
            )
        accuracies = {
            "innate_mix": float(np.mean(np.argmax(innate_mix, axis=1) == labels)),
            "final_mix": float(np.mean(np.argmax(final_mix, axis=1) == labels)),
            "influence_mix": float(np.mean(np.argmax(influence_mix, axis=1) == labels)),
        }
        rows.append(
            [
                pool,
                len(labeled),
                accuracies["innate_mix"],
                accuracies["final_mix"],
                accuracies["influence_mix"],
            ]
        )
        group_entries.append({"group": pool, "n_samples": len(labeled), **accuracies})
    if not rows:
        raise MissingLabels("no labeled samples to score")
    csv_path = os.path.join(args.output_dir, "compare.csv")
    json_path = os.path.join(args.output_dir, "compare.json")
    fio.write_csv(
        csv_path,
        [
            sec.group_key,
            "samples",
            "acc_innate_mix",
            "acc_final_mix",
            "acc_influence_mix",
        ],
        rows,
    )
    fio.atomic_write_json(
        json_path,
        {
            "schema_version": fio.SCHEMA_VERSION,
            "group_key": sec.group_key,
            "groups": group_entries,
            "aggregate": {
                method: _ci_entry([g[method] for g in group_entries])
                for method in ("innate_mix", "final_mix", "influence_mix")
            },
        },
    )
    _say(args, f"wrote {csv_path}, {json_path} ({len(rows)} groups)")
    return 0


# -- parser and entry point ---------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="fjlab",
        description="deliberation dynamics laboratory: simulate, fit, analyze",
    )
    parser.add_argument("--config", default=None, help="INI run configuration")
    parser.add_argument(
        "--seed", type=int, default=None, help="override every section seed"
    )
    parser.add_argument(
        "--output-dir", dest="output_dir", default=".", help="artifact directory"
    )
    parser.add_argument("--quiet", action="store_true", help="suppress progress lines")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("simulate", help="draw deliberation trajectories")
    p.add_argument("--mode", choices=("random", "scenario", "params"), default=None)
    p.add_argument("--samples", type=int, default=None, help="samples per pool")
    p.add_argument("--pools", type=int, default=None, help="independent agent pools")
    p.add_argument("--agents", type=int, default=None)
    p.add_argument("--labels", type=int, default=None, help="belief dimension")
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--params-file", dest="params_file", default=None)
    p.add_argument("--scenario", choices=("exclusive", "imperfect"), default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--p", type=float, default=None, help="competent mass on the label")
    p.add_argument("--u", type=float, default=None, help="non-competent mass on it")
    p.add_argument("--c", type=float, default=None, help="shared wrong-label mass")
    p.add_argument("--gamma-mode", dest="gamma_mode", choices=("random", "confidence"), default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="recover parameters from trajectories")
    p.add_argument("--input", default=None, help="trajectories file")
    p.add_argument("--objective", choices=("kl", "mse"), default=None)
    p.add_argument("--max-iters", dest="max_iters", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--reg-lambda", dest="reg_lambda", type=float, default=None)
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument(
        "--global",
        dest="global_fit",
        action="store_true",
        default=None,
        help="also fit one parameter set per pool",
    )
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("analyze", help="metric tables from trajectories and fits")
    p.add_argument("--input", default=None, help="trajectories file")
    p.add_argument("--fits", default=None, help="fits file")
    p.add_argument("--eta", default=None, help="'uniform' or comma-separated weights")
    p.add_argument(
        "--normalization", choices=("max", "second_largest"), default=None
    )
    p.add_argument(
        "--consensus-threshold", dest="consensus_threshold", type=float, default=None
    )
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("verify", help="run the numerical self-checks")
    p.add_argument("--checks", default=None, help="'all' or comma-separated names")
    p.add_argument("--prop-draws", dest="prop_draws", type=int, default=None)
    p.add_argument("--identity-draws", dest="identity_draws", type=int, default=None)
    p.add_argument(
        "--scenario-samples", dest="scenario_samples", type=int, default=None
    )
    p.add_argument(
        "--consistency-samples", dest="consistency_samples", type=int, default=None
    )
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("compare", help="score aggregation strategies by pool")
    p.add_argument("--input", default=None, help="trajectories file")
    p.add_argument("--fits", default=None, help="fits file with pooled fits")
    p.add_argument("--group-key", dest="group_key", default=None)
    p.add_argument("--eta", default=None, help="'uniform' or comma-separated weights")
    p.add_argument(
        "--fallback-rounds", dest="fallback_rounds", type=int, default=None
    )
    p.set_defaults(func=cmd_compare)
    return parser


def run(argv: "list[str] | None" = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        os.makedirs(args.output_dir, exist_ok=True)
        return args.func(args, cfg)
    except NumericalError as exc:
        print(f"fjlab: numerical error: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"fjlab: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
