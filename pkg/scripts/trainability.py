"""Train the canonical network on synthetic speckle classes, then on shuffled labels.

    python scripts/trainability.py --workdir /tmp/speckle8 [--max-epochs N]
"""
import argparse
import logging
import tempfile
import time

from specklenet.experiments import make_synthetic_splits, train_and_test
from specklenet.trainer import TrainingConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--workdir", default=None)
    ap.add_argument("--classes", type=int, default=8)
    ap.add_argument("--resolution", type=int, default=128)
    ap.add_argument("--max-epochs", type=int, default=500)
    ap.add_argument("--patience", type=int, default=50)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--skip-permuted", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    workdir = args.workdir or tempfile.mkdtemp(prefix="speckle_")
    t0 = time.perf_counter()
    splits = make_synthetic_splits(workdir, args.classes, resolution=args.resolution, seed=args.seed)
    print(f"dataset in {workdir}: {len(splits.train)}/{len(splits.val)}/{len(splits.test)} "
          f"({time.perf_counter() - t0:.1f}s)")
    cfg = TrainingConfig(max_epochs=args.max_epochs, early_stop_patience=args.patience, seed=args.seed)
    runs = [("true labels", False)] + ([] if args.skip_permuted else [("permuted labels", True)])
    for name, permute in runs:
        t0 = time.perf_counter()
        res = train_and_test(splits, cfg, permute_labels=permute)
        h = res.history
        print(f"[{name}] epochs {len(h.records)} best epoch {h.best_epoch} "
              f"val {h.best_val_accuracy:.4f} test acc {res.test_accuracy:.4f} "
              f"macro F1 {res.test_report.macro_f1:.4f} ({time.perf_counter() - t0:.0f}s)")


if __name__ == "__main__":
    main()
