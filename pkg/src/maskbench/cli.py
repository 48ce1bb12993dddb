"""Command-line entry point.

Exit codes: 0 on success, 1 for usage problems, 2 for data problems
(missing or malformed inputs, stale workdirs, corpus errors).
"""

import argparse
import sys

from .config import load_config
from .pipeline import (
    run_coherence,
    run_eval,
    run_export_figs,
    run_features,
    run_mix,
    run_oracle,
    run_separate,
    run_train,
)

COMMANDS = {
    "mix": (run_mix, "build the manifest and render all mixtures"),
    "features": (run_features, "extract features and fit the scaler"),
    "train": (run_train, "train one model per target kind"),
    "separate": (run_separate, "run trained models on the test split"),
    "eval": (run_eval, "score separated outputs"),
    "oracle": (run_oracle, "score ideal-mask separation"),
    "coherence": (run_coherence, "per-noise speech-noise coherence table"),
    "export-figs": (run_export_figs, "spectrogram and mask images"),
}


class _Parser(argparse.ArgumentParser):
    # usage problems exit 1; code 2 is reserved for data errors
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser():
    parser = _Parser(
        prog="maskbench",
        description="mask-based speech separation bench: mix, train, score",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name, (_, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="experiment config file")
        sp.add_argument("--seed", type=int, default=None,
                        help="override [run] seed")
        sp.add_argument("--jobs", type=int, default=None,
                        help="override [run] jobs")
        sp.add_argument("--reference-mode", action="store_true",
                        help="force the sequential deterministic path")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    overrides = {"seed": args.seed, "jobs": args.jobs}
    if args.reference_mode:
        overrides["jobs"] = 1
    try:
        cfg = load_config(args.config, overrides)
        COMMANDS[args.command][0](cfg)
    except (ValueError, OSError) as exc:
        print(f"maskbench {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
