#!/usr/bin/env python3
"""Chunk-frequency recovery from a one-club start (all peers missing only
chunk 1) under every policy, with per-policy stabilization times.

Writes frequencies_<policy>.csv per policy plus stabilization.csv.
"""

import argparse
from pathlib import Path

from swarmsim.cli import write_csv
from swarmsim.engine import InitialCondition, Scenario, run_replications
from swarmsim.metrics import stabilization_time
from swarmsim.model import ModelParams
from swarmsim.policies import PolicyConfig, PolicyKind

POLICIES = {
    "rarest-first": PolicyConfig(PolicyKind.RAREST_FIRST),
    "rare-chunk": PolicyConfig(PolicyKind.RARE_CHUNK),
    "common-chunk": PolicyConfig(PolicyKind.COMMON_CHUNK),
    "group-suppression": PolicyConfig(PolicyKind.GROUP_SUPPRESSION),
    "ms-t1": PolicyConfig(PolicyKind.MODE_SUPPRESSION, threshold=1),
    "dms": PolicyConfig(PolicyKind.DISTRIBUTED_MS),
    "ewma-ms": PolicyConfig(PolicyKind.EWMA_MS),
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/one-club")
    ap.add_argument("--m", type=int, default=5)
    ap.add_argument("--lambda", dest="lam", type=float, default=1.0)
    ap.add_argument("--peers", type=int, default=500)
    ap.add_argument("--horizon", type=float, default=2000.0)
    ap.add_argument("--replications", type=int, default=3)
    ap.add_argument("--epsilon", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=20240202)
    args = ap.parse_args()

    out = Path(args.out)
    stab_rows = []
    for name, policy in POLICIES.items():
        scenario = Scenario(
            params=ModelParams(m=args.m, arrival_rate=args.lam),
            policy=policy,
            initial=InitialCondition("one-club", args.peers),
            horizon=args.horizon,
            rng_seed=args.seed,
        )
        traces = run_replications(scenario, args.replications)
        rows = [
            [t, rep, *f]
            for rep, tr in enumerate(traces)
            for t, f in zip(tr.times, tr.frequencies)
        ]
        write_csv(
            out / f"frequencies_{name}.csv",
            ("time", "replication", *(f"pi_{j}" for j in range(1, args.m + 1))),
            rows,
        )
        times = [stabilization_time(tr, args.epsilon) for tr in traces]
        for rep, t in enumerate(times):
            stab_rows.append([name, rep, t])
        print(f"{name}: stabilization times {times}")
    write_csv(out / "stabilization.csv", ("policy", "replication", "time"), stab_rows)


if __name__ == "__main__":
    main()
