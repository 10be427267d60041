"""Unpack TUDataset zip archives and check they parse.

Download the archives by hand (e.g. BZR.zip, COX2.zip, Letter-low.zip from
the TUDataset collection) and point this script at them:

    python scripts/prepare_tu.py --out data downloads/BZR.zip downloads/COX2.zip

Afterwards ``MRGC_TU_ROOT=data pytest tests/test_acceptance.py`` also runs
the real-data criteria.
"""
import argparse
import zipfile
from pathlib import Path

from mrgc.tudataset import parse_tudataset


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("archives", nargs="+")
    ap.add_argument("--out", default="data")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for archive in map(Path, args.archives):
        name = archive.stem
        with zipfile.ZipFile(archive) as zf:
            zf.extractall(out)
        ds = parse_tudataset(out / name, name)
        print(f"{name}: {len(ds)} graphs, {ds.num_classes} classes")


if __name__ == "__main__":
    main()
