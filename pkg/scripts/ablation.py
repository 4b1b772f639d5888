#!/usr/bin/env python3
"""Similarity-module and iteration-count ablations on synthetic suites.

Prints one row per configuration (RR, success-only RTE/RRE) and writes
the rows to ``--out`` as JSON.
"""

import argparse
import json
from pathlib import Path

from posevolume.bench import SuiteConfig, prefix_report, run_benchmark, with_engine
from posevolume.cloudio import write_json
from posevolume.features import OracleFeatureConfig
from posevolume.scenes import SceneConfig

VARIANTS = {
    "baseline": dict(zoif_enabled=False, use_w2d=False, use_w3d=False),
    "+zoif": dict(zoif_enabled=True, use_w2d=False, use_w3d=False),
    "+zoif+w2d": dict(zoif_enabled=True, use_w2d=True, use_w3d=False),
    "+zoif+w2d+w3d": dict(zoif_enabled=True, use_w2d=True, use_w3d=True),
}


def row(name, rep):
    return {"variant": name, "rr": rep.rr, "rte_mean": rep.rte_mean, "rre_mean": rep.rre_mean}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenes", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--corrupted", action="store_true", help="noise 0.1, flips 0.05, random outside features")
    ap.add_argument("--out", type=Path, default=Path("ablation.json"))
    args = ap.parse_args()

    feats = OracleFeatureConfig(noise_sigma=0.1, conf_flip_prob=0.05) if args.corrupted else OracleFeatureConfig()
    base = SuiteConfig(n_scenes=args.scenes, seed=args.seed, scene=SceneConfig(features=feats))
    rows = []
    for name, flags in VARIANTS.items():
        rep = run_benchmark(with_engine(base, **flags))
        rows.append(row(name, rep))
        print(json.dumps(rows[-1]))
        if name == "+zoif+w2d+w3d":
            # shorter schedules are prefixes of the full run
            for k in (1, 3, 5, 7):
                rows.append(row(f"{name} {k} iterations", prefix_report(rep, k)))
                print(json.dumps(rows[-1]))
    write_json(rows, args.out)


if __name__ == "__main__":
    main()
