"""Train on the two-family synthetic dataset over a few seeds and print metrics.

    python scripts/run_synthetic.py --seeds 0 1 2 --set epochs=20
"""
import argparse

from mrgc.config import RunConfig
from mrgc.trainer import train
from mrgc.tudataset import two_family_spec


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--noise", type=float, default=0.1)
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args()
    for seed in args.seeds:
        cfg = RunConfig()
        cfg.dataset.synthetic = two_family_spec(seed=seed, noise_std=args.noise).to_dict()
        cfg.seed = seed
        for item in args.set:
            key, value = item.split("=", 1)
            cfg.set(key, value)
        res = train(cfg)
        r = res.report
        print(f"seed {seed}: acc {r.acc:.3f} nmi {r.nmi:.3f} ari {r.ari:.3f} f1 {r.f1:.3f} "
              f"({res.epochs_run} epochs, {res.wall_clock:.1f}s)")


if __name__ == "__main__":
    main()
