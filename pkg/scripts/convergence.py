#!/usr/bin/env python3
"""Per-iteration error traces of the oracle engine.

Reports, for each iteration, the median and 95th percentile of RRE/RTE
over the suite next to the half grid step of that iteration, which is the
resolution limit of the discrete search.
"""

import argparse
from pathlib import Path

import numpy as np

from posevolume.bench import SuiteConfig, run_benchmark
from posevolume.cloudio import write_json
from posevolume.engine import EngineConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenes", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("convergence.json"))
    args = ap.parse_args()

    cfg = SuiteConfig(n_scenes=args.scenes, seed=args.seed, engine=EngineConfig())
    rep = run_benchmark(cfg)
    traces = np.array([r["trace_errors"] for r in rep.records if r.get("trace_errors")], dtype=float)
    sched = cfg.engine.schedule
    rows = []
    print("iter  half-step(deg, m)   RRE p50/p95        RTE p50/p95")
    for i in range(sched.iterations):
        space = sched.space_at(i)
        half_r = space.rot_range[0] / max(space.rot_counts[0] - 1, 1)
        half_t = space.trans_range[0] / max(space.trans_counts[0] - 1, 1)
        rre, rte = traces[:, i, 0], traces[:, i, 1]
        r = {"iteration": i + 1, "half_step_rot": half_r, "half_step_trans": half_t,
             "rre_p50": float(np.median(rre)), "rre_p95": float(np.percentile(rre, 95)),
             "rte_p50": float(np.median(rte)), "rte_p95": float(np.percentile(rte, 95))}
        rows.append(r)
        print(f"{i + 1:4d}  {half_r:7.3f} {half_t:6.3f}   {r['rre_p50']:7.3f} {r['rre_p95']:8.3f}   "
              f"{r['rte_p50']:7.3f} {r['rte_p95']:7.3f}")
    write_json(rows, args.out)


if __name__ == "__main__":
    main()
