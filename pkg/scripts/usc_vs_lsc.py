"""Digital payoffs struck at the spot on refined CRR lattices: values and region sizes."""
import argparse

from snellstop import stopping
from snellstop.cli import region_comparison
from snellstop.model import build_crr, time_distribution


def mean_level(model, rule):
    return float(sum(t * m for t, m in time_distribution(model, rule).items())) / model.n_steps


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ladder", type=int, nargs="+", default=[10, 20, 40, 80, 160])
    ap.add_argument("--s0", type=float, default=100.0)
    ap.add_argument("--vol", type=float, default=0.2)
    args = ap.parse_args()
    print(f"{'N':>5} {'v_usc':>9} {'v_lsc':>9} {'E[th*]/T usc':>13} {'E[th*]/T lsc':>13} "
          f"{'|R_usc|':>8} {'|R_lsc|':>8} {'lsc-only':>9}")
    for n in args.ladder:
        model = build_crr(args.s0, args.vol, 0.0, 1.0, n)
        c = region_comparison(model, args.s0)
        tu = mean_level(model, stopping.minimal_optimal(c["usc"]))
        tl = mean_level(model, stopping.minimal_optimal(c["lsc"]))
        print(f"{n:>5} {c['usc'].value:>9.5f} {c['lsc'].value:>9.5f} {tu:>13.4f} {tl:>13.4f} "
              f"{len(c['region_usc']):>8} {len(c['region_lsc']):>8} {len(c['lsc_not_usc']):>9}")


if __name__ == "__main__":
    main()
