"""Ten-run BZR experiment with default settings.

Expects the TUDataset text files in ``<root>/BZR/`` (see prepare_tu.py).

    python scripts/run_bzr.py --root data --out results/bzr.json
"""
import argparse
import json
from pathlib import Path

from mrgc.config import RunConfig
from mrgc.trainer import run_experiment


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--root", default="data")
    ap.add_argument("--runs", type=int, default=10)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out")
    args = ap.parse_args()
    cfg = RunConfig()
    cfg.dataset.dir = str(Path(args.root) / "BZR")
    cfg.dataset.name = "BZR"
    cfg.workers = args.workers
    rep = run_experiment(cfg, runs=args.runs)
    for m in ("acc", "nmi", "ari", "f1"):
        print(f"{m}: {rep.mean[m]:.4f} +/- {rep.std[m]:.4f}")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(rep.to_dict(), indent=2, default=float))


if __name__ == "__main__":
    main()
