"""Smoke the aggregation ablations: every supported classifier mask and
every loss-weight setting gets a short training run on one shared corpus.

Prints a table of final training loss per variant. Short runs say nothing
about ranking; this script exists to show every variant trains from config
alone.
"""

import argparse
import os
import sys

from antispoof.config import load_config
from antispoof.train import Trainer

AGGREGATION_MASKS = [
    ["e1", "e4"],
    ["e2", "e4"],
    ["e3", "e4"],
    ["e1", "e3", "e4"],
    ["e2", "e3", "e4"],
    ["e1", "e2", "e3"],
]

WEIGHT_SETTINGS = [
    [1.0, 1.0, 1.0, 1.0, 6.0],
    [1.0, 1.0, 2.0, 3.0, 4.0],
    [1.0, 1.0, 1.0, 1.0, 1.0],
    [4.0, 3.0, 2.0, 1.0, 1.0],
    [6.0, 1.0, 1.0, 1.0, 1.0],
]


def run_variant(name: str, overrides: list[str], corpus_dir: str, out_root: str, steps: int) -> float:
    cfg = load_config(
        None,
        [
            f"data.train_manifest={corpus_dir}/train.tsv",
            f"data.cache_dir={corpus_dir}/cache",
            f"train.steps={steps}",
            f"train.eval_every={steps + 1}",
            f"train.checkpoint_every={steps}",
            f"io.run_dir={os.path.join(out_root, name)}",
        ]
        + overrides,
    )
    history = Trainer(cfg).run()
    return float(history["log_lines"][-1].split("\t")[-1])


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--corpus", required=True, help="directory holding train.tsv from the gen command")
    parser.add_argument("--out", default="runs/ablations")
    parser.add_argument("--steps", type=int, default=50)
    args = parser.parse_args(argv)

    rows = []
    for mask in AGGREGATION_MASKS:
        name = "mask_" + "".join(mask)
        yaml_list = "[" + ", ".join(mask) + "]"
        loss = run_variant(name, [f"mca.mask={yaml_list}"], args.corpus, args.out, args.steps)
        rows.append((name, loss))
    for weights in WEIGHT_SETTINGS:
        name = "weights_" + "_".join(str(int(w)) for w in weights)
        yaml_list = "[" + ", ".join(str(w) for w in weights) + "]"
        loss = run_variant(name, [f"mca.weights={yaml_list}"], args.corpus, args.out, args.steps)
        rows.append((name, loss))

    print(f"{'variant':<24}{'final_loss':>12}")
    for name, loss in rows:
        print(f"{name:<24}{loss:>12.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
