"""Command-line entry point for the experiment runs.

Subcommands: train, pnml, random-labels, ood, adv, twice-universal.
Each takes --config PATH plus optional --seed/--out/--workers/--limit
overrides. Dataset files are looked up under PNML_DATA_DIR.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import ConfigError, ExperimentConfig
from .experiments import (load_data, run_adv_eval, run_ood_eval,
                          run_pnml_eval, run_random_labels,
                          run_twice_universal, train_erm)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="experiment config (JSON)")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")
    p.add_argument("--out", default=None, help="override the output directory")
    p.add_argument("--workers", type=int, default=1,
                   help="worker processes for per-sample fan-out")
    p.add_argument("--limit", type=int, default=None,
                   help="cap the number of evaluated test samples")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pnml",
        description="Per-label fine-tuning pNML experiments for MLP classifiers")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("train", "initial training only; writes the ERM checkpoint"),
        ("pnml", "ERM vs pNML vs genie evaluation on the test subset"),
        ("random-labels", "label-noise sweep"),
        ("ood", "noise-vs-test score separation"),
        ("adv", "FGSM black-box attack sweep"),
        ("twice-universal", "combine hypothesis classes per sample"),
    ]:
        _add_common(sub.add_parser(name, help=help_))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.from_file(args.config, seed_override=args.seed,
                                         out_override=args.out)
    except (ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    if args.command == "train":
        train, _ = load_data(cfg)
        train_erm(cfg, train)
        print(f"checkpoint written to {cfg.out_dir / 'erm.json'}")
        return 0

    runners = {
        "pnml": run_pnml_eval,
        "random-labels": run_random_labels,
        "ood": run_ood_eval,
        "adv": run_adv_eval,
        "twice-universal": run_twice_universal,
    }
    result = runners[args.command](cfg, workers=args.workers, limit=args.limit)
    print(json.dumps(result, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
