#!/usr/bin/env python3
"""Scaling sweep: wall-clock cost per client per round as the cohort grows.

Verification work is linear in the number of messages, so the per-client
cost should stay flat.  Key generation happens once at setup and is
reported separately from the steady-state round time.
"""

import argparse
import time

from attestfl import harness, protocol


def measure(n: int, args) -> tuple[float, float]:
    cfg = harness.parse_config(
        f"""
        clients = {n}
        rounds = {args.rounds}
        seed = {args.seed}
        crypto.key_bits = {args.key_bits}
        data.per_client = {args.per_client}
        train.epochs = 2
        """
    )
    t0 = time.perf_counter()
    sim = harness.build_simulation(cfg)
    setup = time.perf_counter() - t0

    times = []
    for _ in range(cfg.rounds):
        t0 = time.perf_counter()
        report = protocol.run_round(sim.server, sim.clients, plan=sim.plan, eval_data=sim.holdout)
        times.append(time.perf_counter() - t0)
        assert report.accepted_count == n
    return setup, min(times) / n


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", type=int, nargs="+", default=[10, 20, 40])
    parser.add_argument("--rounds", type=int, default=3)
    parser.add_argument("--seed", type=int, default=9)
    parser.add_argument("--per-client", type=int, default=50)
    parser.add_argument("--key-bits", type=int, default=1024, choices=(1024, 2048))
    args = parser.parse_args()

    print(f"{'clients':>8} {'setup s':>8} {'ms/client/round':>16}")
    per_client = {}
    for n in args.sizes:
        setup, per = measure(n, args)
        per_client[n] = per
        print(f"{n:>8} {setup:>8.2f} {per * 1000:>16.2f}")
    smallest, largest = min(args.sizes), max(args.sizes)
    ratio = per_client[largest] / per_client[smallest]
    print(f"\nper-client cost ratio N={largest} vs N={smallest}: {ratio:.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
