#!/usr/bin/env python3
"""Stationary mean sojourn times of the stable policies across file sizes,
for the 1-peer and 3-peer download pools (the sojourn comparison), plus a
suppression-threshold sweep.

Writes sojourns.csv and threshold_sweep.csv under --out.
"""

import argparse
from pathlib import Path

from swarmsim.cli import write_csv
from swarmsim.engine import InitialCondition, Scenario, run_replications
from swarmsim.metrics import pooled_sojourn_stats
from swarmsim.model import ModelParams
from swarmsim.policies import PolicyConfig, PolicyKind


def policies_for(m: int, sample_peers: int):
    return {
        "rare-chunk": PolicyConfig(PolicyKind.RARE_CHUNK),
        "common-chunk": PolicyConfig(PolicyKind.COMMON_CHUNK),
        "group-suppression": PolicyConfig(PolicyKind.GROUP_SUPPRESSION,
                                          sample_peers=sample_peers),
        "ms-t1": PolicyConfig(PolicyKind.MODE_SUPPRESSION, threshold=1,
                              sample_peers=sample_peers),
        "ms-t2m": PolicyConfig(PolicyKind.MODE_SUPPRESSION, threshold=2 * m,
                               sample_peers=sample_peers),
        "dms": PolicyConfig(PolicyKind.DISTRIBUTED_MS, sample_peers=sample_peers),
        "ewma-ms": PolicyConfig(PolicyKind.EWMA_MS, sample_peers=sample_peers),
    }


def measure(m, lam, policy, seed, reps, warmup):
    scenario = Scenario(
        params=ModelParams(m=m, arrival_rate=lam),
        policy=policy,
        initial=InitialCondition("empty", 0),
        horizon=2.5 * warmup / lam + 190.0,
        rng_seed=seed,
    )
    traces = run_replications(scenario, reps)
    return pooled_sojourn_stats(traces, warmup)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/sojourn")
    ap.add_argument("--ms", default="5,10,20")
    ap.add_argument("--lambda", dest="lam", type=float, default=30.0)
    ap.add_argument("--replications", type=int, default=2)
    ap.add_argument("--warmup", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=20240303)
    args = ap.parse_args()

    out = Path(args.out)
    rows = []
    for m in (int(x) for x in args.ms.split(",")):
        for sample_peers in (1, 3):
            for name, policy in policies_for(m, sample_peers).items():
                st = measure(m, args.lam, policy, args.seed, args.replications,
                             args.warmup)
                rows.append([m, sample_peers, name, st.mean, st.stddev, st.count])
                print(f"m={m} pool={sample_peers} {name}: mean={st.mean:.2f} "
                      f"sd={st.stddev:.2f} n={st.count}")
    write_csv(
        out / "sojourns.csv",
        ("m", "sample_peers", "policy", "mean_sojourn", "stddev_sojourn", "count"),
        rows,
    )

    sweep_rows = []
    for m in (int(x) for x in args.ms.split(",")):
        for T in (1, m, 2 * m, 4 * m):
            policy = PolicyConfig(PolicyKind.MODE_SUPPRESSION, threshold=T,
                                  sample_peers=3)
            st = measure(m, args.lam, policy, args.seed, args.replications,
                         args.warmup)
            sweep_rows.append([m, T, st.mean, st.stddev, st.count])
            print(f"m={m} T={T}: mean={st.mean:.2f}")
    write_csv(
        out / "threshold_sweep.csv",
        ("m", "T", "mean_sojourn", "stddev_sojourn", "count"),
        sweep_rows,
    )


if __name__ == "__main__":
    main()
