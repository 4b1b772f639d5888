#!/usr/bin/env python3
"""Train the convolutional scorer on the toy set and compare it with the baseline.

The comparison suite uses held-out scenes with noisy features.
"""

import argparse
import json
from pathlib import Path

from posevolume.bench import SuiteConfig, run_benchmark, with_engine
from posevolume.convnet import save_params
from posevolume.engine import EngineConfig
from posevolume.training import TrainConfig, toy_scene_config, toy_schedule, train_scorer, write_loss_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--eval-scenes", type=int, default=50)
    ap.add_argument("--eval-seed", type=int, default=1000)
    ap.add_argument("--out", type=Path, default=Path("train_out"))
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    result = train_scorer(TrainConfig(steps=args.steps, seed=args.seed))
    save_params(args.out / "params.bin", result.params)
    write_loss_csv(result.losses, args.out / "loss.csv")
    print(f"eval loss {result.eval_initial:.4f} -> {result.eval_final:.4f}")

    noisy = toy_scene_config(noise_sigma=0.1, conf_flip_prob=0.05)
    suite = SuiteConfig(n_scenes=args.eval_scenes, seed=args.eval_seed, scene=noisy,
                        engine=EngineConfig(schedule=toy_schedule()))
    for name, cfg, params in [("baseline", suite, None),
                              ("conv", with_engine(suite, scorer="conv", params_path=str(args.out / "params.bin")),
                               result.params)]:
        rep = run_benchmark(cfg, params=params)
        print(json.dumps({"scorer": name, "rr": rep.rr, "rte_mean": rep.rte_mean, "rre_mean": rep.rre_mean}))


if __name__ == "__main__":
    main()
