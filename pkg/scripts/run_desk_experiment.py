"""Generate a synthetic corpus and train the plain and hierarchical
models side by side, printing both eval EERs.

Everything is seeded; rerunning with the same arguments reproduces the
corpus, both runs, and the report byte for byte.
"""

import argparse
import os
import sys

from antispoof.config import load_config
from antispoof.experiment import run_side_by_side
from antispoof.synth import SynthSpec, build_corpus


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/desk_experiment", help="corpus and run output root")
    parser.add_argument("--n", type=int, default=2000, help="corpus size (even)")
    parser.add_argument("--duration", type=float, default=4.0)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--steps", type=int, default=400)
    parser.add_argument("--batch-size", type=int, default=32)
    args = parser.parse_args(argv)

    corpus_dir = os.path.join(args.out, "corpus")
    if not os.path.exists(os.path.join(corpus_dir, "train.tsv")):
        build_corpus(SynthSpec(n_utts=args.n, duration_s=args.duration, seed=args.seed), corpus_dir)

    cfg = load_config(
        None,
        [
            f"data.train_manifest={corpus_dir}/train.tsv",
            f"data.dev_manifest={corpus_dir}/dev.tsv",
            f"data.eval_manifest={corpus_dir}/eval.tsv",
            f"data.cache_dir={corpus_dir}/cache",
            f"train.steps={args.steps}",
            f"train.batch_size={args.batch_size}",
            f"train.eval_every={max(1, args.steps // 4)}",
            f"train.checkpoint_every={args.steps}",
        ],
    )
    run_side_by_side(cfg, args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
