"""Report the canonical network's parameter count, weight-file size and single-image latency.

    python scripts/footprint.py [--size 512] [--count 20]
"""
import argparse

import numpy as np

from specklenet.metrics import benchmark
from specklenet.model import canonical_spec, init_model, layer_parameter_counts, parameter_count
from specklenet.weights import encode, header_size


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=512)
    ap.add_argument("--count", type=int, default=20)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    spec = canonical_spec()
    for idx, kind, n in layer_parameter_counts(spec):
        print(f"layer {idx:2d} {kind.name.lower():10s} {n:8d}")
    total = parameter_count(spec)
    blob = encode(init_model(spec, args.seed))
    head = header_size(spec)
    print(f"parameters: {total}")
    print(f"weight file: {len(blob)} bytes ({head} header + {len(blob) - head} payload, "
          f"{(len(blob) - head) / 2**20:.2f} MiB)")

    rng = np.random.default_rng(args.seed)
    images = [rng.random((args.size, args.size, 1), dtype=np.float32) for _ in range(args.count + 1)]
    res = benchmark(init_model(spec, args.seed), images)
    print(f"input {args.size}x{args.size}, seed {args.seed}")
    print("\n".join(res.lines()))


if __name__ == "__main__":
    main()
