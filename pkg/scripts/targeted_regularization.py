"""Test root-PEHE of tcnn/icnn as the tau-block penalty or dropout varies.

Each setting is fitted on the same replications, so rows are paired.

    python scripts/targeted_regularization.py --reps 3
"""
import argparse

import numpy as np

from causalnn import DgpConfig, default_config, fit, predict_cate, simulate
from causalnn.evaluation import pehe, split

SETTINGS = [
    {},
    {"l2_tau": 1e-3},
    {"l2_tau": 1e-2},
    {"l2_mu": 1e-3, "l2_tau": 1e-3},
    {"tau_dropout": 0.0},
    {"tau_dropout": 0.3},
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--kinds", nargs="+", default=["tcnn", "icnn"])
    args = ap.parse_args()

    data = []
    for rep in range(args.reps):
        ds = simulate(DgpConfig(n=2000, seed=rep + 1))
        data.append(split(ds, 0.7, np.random.default_rng(rep + 1)))
    for kind in args.kinds:
        for setting in SETTINGS:
            errs = []
            for rep, (train, test) in enumerate(data):
                model = fit(kind, train, default_config(kind, seed=rep + 1, **setting))
                errs.append(pehe(predict_cate(model, test.X), test.tau_true))
            label = ", ".join(f"{k}={v}" for k, v in setting.items()) or "defaults"
            print(f"{kind:<5} {label:<28} {np.mean(errs):.3f}  {np.round(errs, 3)}", flush=True)


if __name__ == "__main__":
    main()
