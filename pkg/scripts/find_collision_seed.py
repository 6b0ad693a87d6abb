"""Scan seeds for the hidden-node chain until A and C pick the same first RT slot.

    python3 scripts/find_collision_seed.py [scenarios/hidden_node_chain.toml] [--limit 200]

Prints every colliding seed with the slot, who reselected and the
convergence time, so the seed in the scenario file can be re-derived.
"""

import argparse

from wbwf.scenario import load_scenario
from wbwf.simulator import run


def first_choices(trace):
    out = {}
    for r in trace:
        if r["kind"] == "tsa_select":
            out.setdefault(r["node"], r["slot"])
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("scenario", nargs="?", default="scenarios/hidden_node_chain.toml")
    ap.add_argument("--limit", type=int, default=200)
    args = ap.parse_args()
    base = load_scenario(args.scenario)
    for seed in range(args.limit):
        res = run(base.with_seed(seed))
        picks = first_choices(res.trace)
        if picks.get("A") is not None and picks.get("A") == picks.get("C"):
            who = [r["node"] for r in res.trace if r["kind"] == "tsa_reselect"]
            conv = res.report.network["convergence_us"]
            print(f"seed {seed}: slot {picks['A']}, reselected by {who}, converged at {conv} us")


if __name__ == "__main__":
    main()
