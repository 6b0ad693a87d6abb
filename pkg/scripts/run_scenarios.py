"""Run every scenario in scenarios/ and write trace + metrics under out/.

    python3 scripts/run_scenarios.py [--out out]
"""

import argparse
from pathlib import Path

from wbwf.metrics import write_trace
from wbwf.scenario import load_scenario
from wbwf.simulator import run

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(ROOT / "out"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path in sorted((ROOT / "scenarios").glob("*.toml")):
        res = run(load_scenario(path))
        write_trace(res.trace, out / f"{path.stem}.trace.jsonl")
        (out / f"{path.stem}.metrics.csv").write_text(res.report.to_csv(), encoding="utf-8")
        net = res.report.network
        print(f"{path.stem:22s} sessions {net['sessions']}/{net['sessions_established']} "
              f"collisions {net['tsa_collisions']} convergence {net['convergence_us']} us "
              f"events {res.events_executed}")


if __name__ == "__main__":
    main()
