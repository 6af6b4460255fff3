#!/usr/bin/env python3
"""Population trajectories under random selection versus the suppression
policies, across arrival rates (the instability comparison experiment).

Writes one population.csv per (policy, lambda) cell under --out.
"""

import argparse
from pathlib import Path

from swarmsim.cli import write_csv
from swarmsim.engine import InitialCondition, Scenario, run_replications
from swarmsim.model import ModelParams
from swarmsim.policies import PolicyConfig, PolicyKind

POLICIES = {
    "random": PolicyConfig(PolicyKind.RANDOM),
    "ms-t1": PolicyConfig(PolicyKind.MODE_SUPPRESSION, threshold=1),
    "dms": PolicyConfig(PolicyKind.DISTRIBUTED_MS),
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/stability")
    ap.add_argument("--m", type=int, default=5)
    ap.add_argument("--lambdas", default="0.5,2,3,4")
    ap.add_argument("--horizon", type=float, default=500.0)
    ap.add_argument("--peers", type=int, default=500)
    ap.add_argument("--replications", type=int, default=3)
    ap.add_argument("--seed", type=int, default=20240101)
    args = ap.parse_args()

    out = Path(args.out)
    for name, policy in POLICIES.items():
        for lam in (float(x) for x in args.lambdas.split(",")):
            scenario = Scenario(
                params=ModelParams(m=args.m, arrival_rate=lam),
                policy=policy,
                initial=InitialCondition("empty", args.peers),
                horizon=args.horizon,
                rng_seed=args.seed,
            )
            traces = run_replications(scenario, args.replications)
            rows = [
                [t, rep, pop]
                for rep, tr in enumerate(traces)
                for t, pop in zip(tr.times, tr.populations)
            ]
            path = out / f"population_{name}_lambda{lam:g}.csv"
            write_csv(path, ("time", "replication", "population"), rows)
            ends = [tr.populations[-1] for tr in traces]
            print(f"{name} lambda={lam:g}: final populations {ends} -> {path}")


if __name__ == "__main__":
    main()
