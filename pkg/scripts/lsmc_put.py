"""Regression policy for a Bermudan put versus the exact lattice value, over several seeds."""
import argparse

from snellstop import lsmc, reward
from snellstop.model import TimeGrid


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=100_000)
    ap.add_argument("--dates", type=int, default=50)
    ap.add_argument("--degree", type=int, default=3)
    ap.add_argument("--seeds", type=int, default=3)
    args = ap.parse_args()
    s0, k, r, vol, horizon = 36.0, 40.0, 0.06, 0.2, 1.0
    grid = TimeGrid.uniform(args.dates, horizon)
    f = reward.Discounted(reward.Payoff("put", k), r, grid.times)
    ref = lsmc.bermudan_lattice_value(s0, k, r, vol, horizon, args.dates, 10)
    print(f"lattice reference {ref:.5f}")
    for s in range(args.seeds):
        policy = lsmc.fit_policy(lsmc.simulate_gbm(s0, r, vol, grid, args.paths, 2 * s + 1), f,
                                 args.degree)
        est = lsmc.policy_value(lsmc.simulate_gbm(s0, r, vol, grid, args.paths, 2 * s + 2),
                                policy, f)
        cmp_ = lsmc.compare_to_lattice(est, ref)
        print(f"seed pair {2 * s + 1}/{2 * s + 2}: {est[0]:.5f} +/- {est[1]:.5f} "
              f"gap {cmp_.relative_gap:+.3%} {cmp_.verdict}")


if __name__ == "__main__":
    main()
