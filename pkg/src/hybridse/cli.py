"""Command-line entry point: ``hybridse <subcommand> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from hybridse import harness
from hybridse.audio import StftConfig
from hybridse.beamforming import build_bank, directivity_csv
from hybridse.corpus import synth_corpus
from hybridse.geometry import dump_geometry, generate_array_set, load_geometry, save_geometry
from hybridse.harness import ExperimentConfig


def _add_experiment_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config file")
    p.add_argument("--preset", choices=["experiment1", "experiment2"], help="start from a preset")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--scenes-per-array", type=int)
    p.add_argument("--variant", action="append", help="model variant (repeatable)")
    p.add_argument("--cutoff-hz", type=float)
    p.add_argument("--bands", help="comma-separated band edges in Hz, e.g. 0,500,1000,2000,4000,8000")
    p.add_argument("--save-audio", action="store_true", default=None, help="write WAVs and masks per scene")
    p.add_argument("--jobs", type=int, help="parallel scene workers")
    p.add_argument("--corpus", dest="corpus_dir", help="corpus directory ('synthetic' to generate one)")
    p.add_argument("--output", dest="output_dir", help="output root directory")
    p.add_argument("--arrays", help="comma-separated array names")


def config_from_args(args) -> ExperimentConfig:
    doc = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.preset:
        doc["preset"] = args.preset
    overrides = {
        "seed": args.seed,
        "scenes_per_array": args.scenes_per_array,
        "variants": args.variant,
        "cutoff_hz": args.cutoff_hz,
        "bands": [float(x) for x in args.bands.split(",")] if args.bands else None,
        "save_audio": args.save_audio,
        "jobs": args.jobs,
        "corpus_dir": args.corpus_dir,
        "output_dir": args.output_dir,
        "arrays": args.arrays.split(",") if args.arrays else None,
    }
    doc.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(doc)


def _print_summary(report) -> None:
    for group, by_variant in report.per_group.items():
        for variant, entry in by_variant.items():
            print(f"{group:8s} {variant:10s} n={entry['count']:4d}  SI-SDR {entry['si_sdr_db']:7.2f} dB")


def cmd_arrays(args) -> int:
    arrays = generate_array_set() if args.regenerate else load_geometry(args.geometry)
    if args.out:
        save_geometry(arrays, args.out)
    else:
        print(json.dumps(dump_geometry(arrays), indent=2))
    return 0


def cmd_beampattern(args) -> int:
    array = load_geometry(args.geometry)[args.array]
    bank = build_bank(array, StftConfig())
    direction = bank.directions[bank.index(args.beam)]
    freqs = [float(f) for f in args.freqs.split(",")]
    azimuths = np.arange(0.0, 360.0, args.step)
    text = directivity_csv(array, direction, freqs, azimuths)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.bank_out:
        Path(args.bank_out).write_text(bank.dumps())
    return 0


def cmd_gen(args) -> int:
    config = config_from_args(args)
    harness.generate(config)
    print(f"rendered {len(config.arrays) * config.scenes_per_array} scenes under {config.experiment_dir}")
    return 0


def cmd_enhance(args) -> int:
    config = config_from_args(args)
    records = harness.enhance(config, args.masks)
    failed = sum(r.status != "ok" for r in records)
    print(f"enhanced {len(records)} rows ({failed} failed) under {config.experiment_dir}")
    return 0


def cmd_eval(args) -> int:
    config = config_from_args(args)
    _print_summary(harness.evaluate(config))
    return 0


def cmd_run(args) -> int:
    config = config_from_args(args)
    _print_summary(harness.run_experiment(config, args.masks))
    print(f"reports written to {config.experiment_dir}")
    return 0


def cmd_synth_corpus(args) -> int:
    manifest = synth_corpus(args.out, args.count, seed=args.seed)
    print(f"wrote {len(manifest)} utterances to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybridse", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("arrays", help="dump the array geometry file")
    p.add_argument("--geometry", help="geometry file to read (default: packaged fixtures)")
    p.add_argument("--regenerate", action="store_true", help="rebuild fixtures from their seeds")
    p.add_argument("--out", help="write to this path instead of stdout")
    p.set_defaults(func=cmd_arrays)

    p = sub.add_parser("beampattern", help="directivity CSV for one beam of an array")
    p.add_argument("--array", default="0")
    p.add_argument("--beam", default="front", choices=["front", "back", "left", "right"])
    p.add_argument("--freqs", default="250,500,1000,2000,4000")
    p.add_argument("--step", type=float, default=1.0, help="azimuth step in degrees")
    p.add_argument("--geometry")
    p.add_argument("--out")
    p.add_argument("--bank-out", help="also export the bank weights as JSON")
    p.set_defaults(func=cmd_beampattern)

    for name, func, help_ in (
        ("gen", cmd_gen, "sample and render scenes"),
        ("enhance", cmd_enhance, "apply oracle or external masks to rendered scenes"),
        ("eval", cmd_eval, "aggregate per-scene metrics into reports"),
        ("run", cmd_run, "gen + enhance + eval in one pass"),
    ):
        p = sub.add_parser(name, help=help_)
        _add_experiment_args(p)
        if name in ("enhance", "run"):
            p.add_argument("--masks", default="oracle", help="'oracle' or a directory of .hbmk files")
        p.set_defaults(func=func)

    p = sub.add_parser("synth-corpus", help="write a synthetic speech-like corpus")
    p.add_argument("out")
    p.add_argument("--count", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth_corpus)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
