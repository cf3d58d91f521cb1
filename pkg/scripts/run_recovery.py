"""Recovery experiment over the synthetic presets.

    python scripts/run_recovery.py --replicates 50 --seed 606 --threads 4
"""

import argparse
import json
import time
from pathlib import Path

from specchange.simulator import preset, run_recovery_experiment

PRESETS = ("strong-B1", "strong-B2", "strong-B3", "weak-B2")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--presets", nargs="+", default=PRESETS)
    ap.add_argument("--replicates", type=int, default=50)
    ap.add_argument("--seed", type=int, default=606)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--output", type=Path, default=Path("out/recovery"))
    args = ap.parse_args()

    args.output.mkdir(parents=True, exist_ok=True)
    summary = {}
    for name in args.presets:
        tf = preset(name)
        t0 = time.perf_counter()
        rep = run_recovery_experiment(tf, args.replicates, args.seed, threads=args.threads)
        rmse = "n/a" if rep.rmse_pi is None else f"{rep.rmse_pi:.2f}"
        print(f"{name:10s} B={tf.B}  correct B {rep.percent_correct_B:5.1f}%  "
              f"RMSE(pi) {rmse}  failed {rep.n_failed}  ({time.perf_counter() - t0:.0f}s)")
        summary[name] = rep.to_dict()
    (args.output / "recovery.json").write_text(json.dumps(summary, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
