"""Check the exact engine against brute-force enumeration on the random corpus."""
import argparse
import time

from snellstop import oracle


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--seed", type=int, default=oracle.CORPUS_SEED)
    args = ap.parse_args()
    start = time.perf_counter()
    failures = 0
    for k, (model, phi) in enumerate(oracle.corpus(args.n, args.seed)):
        rep = oracle.verify_theorems(model, phi)
        if not rep.passed:
            failures += 1
            print(f"instance {k}: " + "; ".join(rep.failures))
    print(f"{args.n - failures}/{args.n} instances pass in {time.perf_counter() - start:.1f}s")
    return 1 if failures else 0


if __name__ == "__main__":
    raise SystemExit(main())
