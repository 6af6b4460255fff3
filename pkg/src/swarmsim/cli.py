"""Command-line operator surface.

Three subcommands: ``simulate`` runs a scenario file and writes the
population / frequency / departure / summary CSVs, ``sweep`` repeats a
scenario across one parameter's values, and ``oracle`` builds the exact
truncated chain and writes its audit, stationary and drift CSVs.

Scenario files are JSON documents with exactly these keys (unknown keys
are rejected, naming the offending path)::

    {
      "m": 5, "lambda": 2.0, "mu": 1.0, "u": 1.0,
      "policy": {"kind": "mode-suppression", "T": 1, "alpha": 0.1,
                 "sample_peers": 1, "cc_variant": "downloader"},
      "initial": {"kind": "empty", "n": 500},
      "horizon": 500.0, "max_population": 10000, "rng_seed": 42,
      "warmup_departures": 2000, "sample_interval": 1.0,
      "replications": 10
    }

``policy.T``, ``policy.alpha``, ``policy.sample_peers``,
``policy.cc_variant``, ``max_population``, ``warmup_departures``,
``sample_interval`` and ``replications`` are optional with the defaults
shown by ``Scenario``/``PolicyConfig``.  Exit codes: 0 success, 2 usage or
configuration error, 3 I/O failure, 4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .engine import (
    EventTrace,
    InitialCondition,
    Scenario,
    derive_seed,
    run,
    run_replications,
)
from .metrics import sojourn_stats, stabilization_time
from .model import InvalidTransitionError, ModelParams
from .oracle import (
    LyapunovParams,
    ReducibleChainError,
    TruncationSpec,
    build_generator_ms,
    drift_report,
    stationary_distribution,
    verify_lemmas,
)
from .policies import PolicyConfig, PolicyKind

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_INTERNAL = 4

DEFAULT_EPSILON_GAP = 0.05  # stabilization frequency gap
OUT_DIR_ENV = "SWARMSIM_OUT"


class ConfigError(ValueError):
    """Configuration problem, carrying the offending field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _require(d: Dict, key: str, kind, path: str):
    if key not in d:
        raise ConfigError(f"{path}{key}", "missing required key")
    value = d[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool):
        raise ConfigError(f"{path}{key}", f"expected {kind.__name__}")
    return value


def _optional(d: Dict, key: str, kind, default, path: str):
    if key not in d:
        return default
    return _require(d, key, kind, path)


def _reject_unknown(d: Dict, known: Iterable[str], path: str) -> None:
    for key in d:
        if key not in known:
            raise ConfigError(f"{path}{key}", "unknown key")


def parse_policy(d: Dict, path: str = "policy.") -> PolicyConfig:
    _reject_unknown(d, ("kind", "T", "alpha", "sample_peers", "cc_variant"), path)
    kind_name = _require(d, "kind", str, path)
    try:
        kind = PolicyKind(kind_name)
    except ValueError:
        names = ", ".join(k.value for k in PolicyKind)
        raise ConfigError(f"{path}kind", f"must be one of: {names}")
    try:
        return PolicyConfig(
            kind=kind,
            threshold=_optional(d, "T", int, 1, path),
            alpha=_optional(d, "alpha", float, 0.1, path),
            sample_peers=_optional(d, "sample_peers", int, 1, path),
            cc_variant=_optional(d, "cc_variant", str, "downloader", path),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}*", str(exc))


def parse_scenario_dict(doc: Dict) -> Tuple[Scenario, int]:
    """Validate a scenario document; returns (scenario, replications)."""
    known = (
        "m",
        "lambda",
        "mu",
        "u",
        "policy",
        "initial",
        "horizon",
        "max_population",
        "rng_seed",
        "warmup_departures",
        "sample_interval",
        "replications",
    )
    _reject_unknown(doc, known, "")
    try:
        params = ModelParams(
            m=_require(doc, "m", int, ""),
            arrival_rate=_require(doc, "lambda", float, ""),
            peer_contact_rate=_optional(doc, "mu", float, 1.0, ""),
            seed_contact_rate=_optional(doc, "u", float, 1.0, ""),
        )
    except ValueError as exc:
        raise ConfigError("m/lambda/mu/u", str(exc))
    policy = parse_policy(_require(doc, "policy", dict, ""))
    init_doc = _require(doc, "initial", dict, "")
    _reject_unknown(init_doc, ("kind", "n"), "initial.")
    try:
        initial = InitialCondition(
            kind=_require(init_doc, "kind", str, "initial."),
            n=_require(init_doc, "n", int, "initial."),
        )
    except ValueError as exc:
        raise ConfigError("initial.kind", str(exc))
    replications = _optional(doc, "replications", int, 1, "")
    if replications < 1:
        raise ConfigError("replications", "must be >= 1")
    try:
        scenario = Scenario(
            params=params,
            policy=policy,
            initial=initial,
            horizon=_require(doc, "horizon", float, ""),
            rng_seed=_require(doc, "rng_seed", int, ""),
            max_population=_optional(doc, "max_population", int, None, ""),
            warmup_departures=_optional(doc, "warmup_departures", int, 2000, ""),
            sample_interval=_optional(doc, "sample_interval", float, 1.0, ""),
        )
    except ValueError as exc:
        raise ConfigError("horizon/max_population/sample_interval", str(exc))
    return scenario, replications


def scenario_to_dict(scenario: Scenario, replications: int) -> Dict:
    """Inverse of :func:`parse_scenario_dict` (round-trips exactly)."""
    params = scenario.params
    policy = scenario.policy
    doc = {
        "m": params.m,
        "lambda": params.arrival_rate,
        "mu": params.peer_contact_rate,
        "u": params.seed_contact_rate,
        "policy": {
            "kind": policy.kind.value,
            "T": policy.threshold,
            "alpha": policy.alpha,
            "sample_peers": policy.sample_peers,
            "cc_variant": policy.cc_variant,
        },
        "initial": {"kind": scenario.initial.kind, "n": scenario.initial.n},
        "horizon": scenario.horizon,
        "rng_seed": scenario.rng_seed,
        "warmup_departures": scenario.warmup_departures,
        "sample_interval": scenario.sample_interval,
        "replications": replications,
    }
    if scenario.max_population is not None:
        doc["max_population"] = scenario.max_population
    return doc


def load_scenario_file(path: str | Path) -> Tuple[Scenario, int]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("(file)", f"cannot read {path}: {exc}")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("(file)", f"invalid JSON: {exc}")
    if not isinstance(doc, dict):
        raise ConfigError("(file)", "top level must be a JSON object")
    return parse_scenario_dict(doc)


# -- CSV output --


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write atomically (temp file + rename), full float precision."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _policy_label(policy: PolicyConfig) -> str:
    return policy.kind.value


def _policy_params_label(policy: PolicyConfig) -> str:
    return (
        f"T={policy.threshold};alpha={policy.alpha};"
        f"sample_peers={policy.sample_peers};cc_variant={policy.cc_variant}"
    )


def _summary_row(
    scenario: Scenario, rep: int, trace: EventTrace
) -> List:
    st = sojourn_stats(trace, scenario.warmup_departures)
    stab = stabilization_time(trace, DEFAULT_EPSILON_GAP)
    return [
        rep,
        _policy_label(scenario.policy),
        _policy_params_label(scenario.policy),
        st.mean,
        st.stddev,
        st.count,
        stab,
        trace.termination.value,
    ]


SUMMARY_HEADER = (
    "replication",
    "policy",
    "params",
    "mean_sojourn",
    "stddev_sojourn",
    "sojourn_count",
    "stabilization_time",
    "termination",
)


def write_simulation_outputs(
    out_dir: Path, scenario: Scenario, traces: Sequence[EventTrace]
) -> None:
    m = scenario.params.m
    pop_rows = []
    freq_rows = []
    dep_rows = []
    sum_rows = []
    for rep, trace in enumerate(traces):
        for t, pop in zip(trace.times, trace.populations):
            pop_rows.append([t, rep, pop])
        for t, freqs in zip(trace.times, trace.frequencies):
            freq_rows.append([t, rep, *freqs])
        for arr, dep in trace.departures:
            dep_rows.append([rep, arr, dep, dep - arr])
        sum_rows.append(_summary_row(scenario, rep, trace))
    write_csv(out_dir / "population.csv", ("time", "replication", "population"), pop_rows)
    write_csv(
        out_dir / "frequencies.csv",
        ("time", "replication", *(f"pi_{j}" for j in range(1, m + 1))),
        freq_rows,
    )
    write_csv(
        out_dir / "departures.csv",
        ("replication", "arrival_time", "departure_time", "sojourn"),
        dep_rows,
    )
    write_csv(out_dir / "summary.csv", SUMMARY_HEADER, sum_rows)


def cmd_simulate(
    config_path: str,
    out_dir: str,
    replications: Optional[int] = None,
    quiet: bool = False,
) -> int:
    try:
        scenario, reps = load_scenario_file(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if replications is not None:
        if replications < 1:
            print("config error: replications: must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
        reps = replications
    try:
        traces = run_replications(scenario, reps)
    except InvalidTransitionError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    try:
        write_simulation_outputs(Path(out_dir), scenario, traces)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    if not quiet:
        for rep, tr in enumerate(traces):
            print(
                f"replication {rep}: events={tr.events} departures={len(tr.departures)} "
                f"termination={tr.termination.value}"
            )
    return EXIT_OK


SWEEP_PARAMETERS = ("lambda", "m", "T", "policy.kind", "sample_peers")


def _apply_sweep_value(scenario: Scenario, parameter: str, raw: str) -> Scenario:
    from dataclasses import replace

    params = scenario.params
    policy = scenario.policy
    try:
        if parameter == "lambda":
            params = replace(params, arrival_rate=float(raw))
        elif parameter == "m":
            params = replace(params, m=int(raw))
        elif parameter == "T":
            policy = replace(policy, threshold=int(raw))
        elif parameter == "sample_peers":
            policy = replace(policy, sample_peers=int(raw))
        elif parameter == "policy.kind":
            policy = replace(policy, kind=PolicyKind(raw))
        else:
            raise ConfigError("parameter", f"must be one of {SWEEP_PARAMETERS}")
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"values({raw})", str(exc))
    return replace(scenario, params=params, policy=policy)


def cmd_sweep(
    config_path: str,
    parameter: str,
    values: Sequence[str],
    out_dir: str,
    replications: Optional[int] = None,
    quiet: bool = False,
) -> int:
    if parameter not in SWEEP_PARAMETERS:
        print(
            f"config error: parameter: must be one of {SWEEP_PARAMETERS}",
            file=sys.stderr,
        )
        return EXIT_CONFIG
    if not values:
        print("config error: values: empty value list", file=sys.stderr)
        return EXIT_CONFIG
    try:
        base, reps = load_scenario_file(config_path)
        if replications is not None:
            reps = replications
        if reps < 1:
            raise ConfigError("replications", "must be >= 1")
        cells = [
            (idx, raw, _apply_sweep_value(base, parameter, raw))
            for idx, raw in enumerate(values)
        ]
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rows = []
    try:
        for idx, raw, scenario in cells:
            for rep in range(reps):
                seed = derive_seed(scenario.rng_seed, idx, rep)
                trace = run(scenario, seed=seed)
                rows.append(
                    [parameter, raw, *_summary_row(scenario, rep, trace), seed]
                )
                if not quiet:
                    print(f"{parameter}={raw} replication {rep}: done")
    except InvalidTransitionError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    try:
        write_csv(
            Path(out_dir) / "sweep.csv",
            ("parameter", "value", *SUMMARY_HEADER, "seed"),
            rows,
        )
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def cmd_oracle(
    m: int,
    cap: int,
    arrival_rate: float,
    peer_contact_rate: float,
    seed_contact_rate: float,
    threshold: int,
    out_dir: str,
    epsilon: float = 0.5,
    m_const: Optional[float] = None,
    quiet: bool = False,
) -> int:
    if m not in (2, 3):
        print("config error: m: oracle supports m=2 or m=3", file=sys.stderr)
        return EXIT_CONFIG
    try:
        spec = TruncationSpec(m=m, cap=cap)
        params = ModelParams(
            m=m,
            arrival_rate=arrival_rate,
            peer_contact_rate=peer_contact_rate,
            seed_contact_rate=seed_contact_rate,
        )
        lp = LyapunovParams.compliant(
            params,
            threshold,
            m_const=max(2.0 * cap, 1.0) if m_const is None else m_const,
            epsilon=epsilon,
        )
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    gen = build_generator_ms(spec, params, threshold)
    report = verify_lemmas(spec, params, threshold, gen=gen)
    residuals = np.asarray(gen.matrix.sum(axis=1)).ravel()
    audit_rows = [
        [i, str(state), int(gen.populations[i]), repr(float(residuals[i]))]
        for i, state in enumerate(gen.states)
    ]
    audit_rows.append(
        ["lemma-checks", "", "", "pass" if report.ok else f"{report.total_violations()} violations"]
    )
    out = Path(out_dir)
    try:
        write_csv(
            out / "generator-audit.csv",
            ("state_id", "state", "population", "row_sum_residual"),
            audit_rows,
        )
        try:
            p = stationary_distribution(gen)
            stat_rows = [
                [i, str(state), int(gen.populations[i]), float(p[i])]
                for i, state in enumerate(gen.states)
            ]
        except ReducibleChainError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        write_csv(
            out / "stationary.csv",
            ("state_id", "state", "population", "probability"),
            stat_rows,
        )
        drift_rows = [
            [r.index, r.population, r.value, r.drift, r.boundary, r.region]
            for r in drift_report(gen, lp)
        ]
        write_csv(
            out / "drift.csv",
            ("state_id", "population", "V", "QV", "boundary", "region"),
            drift_rows,
        )
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    if not quiet:
        print(
            f"{gen.n_states} states; lemma checks "
            f"{'passed' if report.ok else 'FAILED'}"
        )
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarmsim",
        description="Chunk-level P2P swarm simulator and CTMC oracle",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    default_out = os.environ.get(OUT_DIR_ENV, ".")

    sim = sub.add_parser("simulate", help="run a scenario file")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", default=default_out)
    sim.add_argument("--replications", type=int, default=None)
    sim.add_argument("--quiet", action="store_true")

    sweep = sub.add_parser("sweep", help="repeat a scenario across parameter values")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--param", required=True)
    sweep.add_argument("--values", required=True, help="comma-separated values")
    sweep.add_argument("--out", default=default_out)
    sweep.add_argument("--replications", type=int, default=None)
    sweep.add_argument("--quiet", action="store_true")

    orc = sub.add_parser("oracle", help="exact truncated-chain analysis")
    orc.add_argument("--m", type=int, required=True)
    orc.add_argument("--cap", type=int, required=True)
    orc.add_argument("--lambda", dest="arrival_rate", type=float, required=True)
    orc.add_argument("--mu", dest="peer_contact_rate", type=float, default=1.0)
    orc.add_argument("--u", dest="seed_contact_rate", type=float, default=1.0)
    orc.add_argument("--T", dest="threshold", type=int, default=1)
    orc.add_argument("--epsilon", type=float, default=0.5)
    orc.add_argument("--m-const", type=float, default=None)
    orc.add_argument("--out", default=default_out)
    orc.add_argument("--quiet", action="store_true")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    if args.command == "simulate":
        return cmd_simulate(args.config, args.out, args.replications, args.quiet)
    if args.command == "sweep":
        values = [v for v in args.values.split(",") if v != ""]
        return cmd_sweep(
            args.config, args.param, values, args.out, args.replications, args.quiet
        )
    if args.command == "oracle":
        return cmd_oracle(
            m=args.m,
            cap=args.cap,
            arrival_rate=args.arrival_rate,
            peer_contact_rate=args.peer_contact_rate,
            seed_contact_rate=args.seed_contact_rate,
            threshold=args.threshold,
            out_dir=args.out,
            epsilon=args.epsilon,
            m_const=args.m_const,
            quiet=args.quiet,
        )
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
