"""Command-line entry points.

    sdcc data sample   — length-filter a JSONL dataset and sample n records
    sdcc compress      — compress contexts into a binary latent container
    sdcc sweep         — run a scale sweep and write the report (+ figures)
    sdcc synth         — teacher-driven data synthesis, phase 1 or 2
    sdcc train-head    — fit the density head on a phase-2 dataset
    sdcc report        — re-render figures from an existing report file

Reports are delimited files first; unless --no-figures is given, the
sweep and report commands also render the Pareto and variance figures
next to the output file.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from sdcc import __version__
from sdcc.config import load_config
from sdcc.corpus import filter_and_sample, load_records, tokenize, write_records
from sdcc.density import RegressionHead, train_head
from sdcc.harness import (
    emit_report,
    fixed_text_answerer,
    parse_scale_grid,
    read_report,
    reference_echo_answerer,
    scale_sweep,
)
from sdcc.pipeline import CompressionPipeline, serialize_representation
from sdcc.synthesis import (
    FixtureTransport,
    TeacherClient,
    build_density_dataset,
    synthesize_tasks,
    write_density_dataset,
)

logger = logging.getLogger("sdcc")


def _add_config_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="TOML config file")


def _cmd_data_sample(args: argparse.Namespace) -> int:
    records = load_records(args.infile)
    sampled = filter_and_sample(records, args.max_tokens, args.n, args.seed)
    write_records(sampled, args.out)
    meta = {
        "input": str(args.infile),
        "tokenizer_id": "byte-v1",
        "max_tokens": args.max_tokens,
        "requested": args.n,
        "returned": len(sampled),
        "truncated": len(sampled) < args.n,
        "seed": args.seed,
    }
    Path(str(args.out) + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(sampled)} records to {args.out}")
    return 0


def _cmd_compress(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    pipeline = CompressionPipeline(config.pipeline_config(backbone=args.backbone, mode=args.mode))
    n = 0
    with Path(args.out).open("wb") as fh:
        with Path(args.infile).open("r", encoding="utf-8") as src:
            for line in src:
                if not line.strip():
                    continue
                context = json.loads(line)["context"]
                rep = pipeline.compress(tokenize(context), args.scale)
                fh.write(serialize_representation(rep))
                n += 1
    print(f"compressed {n} contexts to {args.out}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    eval_set = load_records(args.eval)
    scales = parse_scale_grid(args.scales or config.sweep_scales())
    pipeline = CompressionPipeline(config.pipeline_config(backbone=args.backbone))
    if args.answerer == "echo":
        answerer = reference_echo_answerer
    elif args.answerer.startswith("fixed:"):
        answerer = fixed_text_answerer(args.answerer.split(":", 1)[1])
    else:
        raise SystemExit(f"unknown answerer {args.answerer!r}")
    points = scale_sweep(
        eval_set, scales, pipeline, answerer, partial_path=str(args.report) + ".partial"
    )
    emit_report(points, args.format, args.report)
    print(f"wrote {len(points)} sweep points to {args.report}")
    if not args.no_figures:
        from sdcc.figures import render_sweep_figures

        for path in render_sweep_figures(points, args.report):
            print(f"rendered {path}")
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    endpoint = config.endpoint(args.endpoint)
    transport = FixtureTransport.from_jsonl(args.fixtures) if args.fixtures else None
    client = TeacherClient(endpoint, transport=transport)
    contexts = []
    with Path(args.infile).open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                contexts.append(json.loads(line)["context"])
    if args.phase == 1:
        from sdcc.corpus import QARecord

        records: list[QARecord] = []
        for context in contexts:
            records.extend(synthesize_tasks(context, args.kinds.split(","), client, args.language))
        write_records(records, args.out)
        print(f"wrote {len(records)} task records to {args.out}")
    else:
        density = build_density_dataset(
            contexts, client, args.language, skip_manifest_path=str(args.out) + ".skips.jsonl"
        )
        write_density_dataset(density, args.out)
        print(f"wrote {len(density)} density records to {args.out}")
    return 0


def _cmd_train_head(args: argparse.Namespace) -> int:
    from sdcc.synthesis import load_density_dataset

    config = load_config(args.config)
    records = load_density_dataset(args.data)
    head = train_head(
        records,
        config.encoder_config(),
        epochs=args.epochs,
        learning_rate=args.lr,
        seed=config.seed(),
        log_path=args.log,
    )
    out = {"weights": head.weights.tolist(), "bias": head.bias, "d": int(head.weights.shape[0])}
    Path(args.out).write_text(json.dumps(out, indent=2) + "\n", encoding="utf-8")
    print(f"trained head on {len(records)} records; wrote {args.out}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    from sdcc.figures import render_sweep_figures

    points = read_report(args.infile)
    for path in render_sweep_figures(points, args.infile):
        print(f"rendered {path}")
    return 0


def load_head(path: str | Path) -> RegressionHead:
    """Read a head written by ``sdcc train-head``."""
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return RegressionHead(np.asarray(obj["weights"], dtype=np.float64), float(obj["bias"]))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdcc", description=__doc__)
    parser.add_argument("--version", action="version", version=f"sdcc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    data = sub.add_parser("data", help="dataset utilities")
    data_sub = data.add_subparsers(dest="data_command", required=True)
    sample = data_sub.add_parser("sample", help="filter by token length and sample uniformly")
    sample.add_argument("--in", dest="infile", type=Path, required=True)
    sample.add_argument("--max-tokens", type=int, default=2048)
    sample.add_argument("--n", type=int, default=1000)
    sample.add_argument("--seed", type=int, default=0)
    sample.add_argument("--out", type=Path, required=True)
    sample.set_defaults(func=_cmd_data_sample)

    compress = sub.add_parser("compress", help="compress contexts to a latent container")
    compress.add_argument("--in", dest="infile", type=Path, required=True)
    compress.add_argument("--scale", type=float, default=0.0)
    compress.add_argument("--backbone", default="mean_pooling")
    compress.add_argument("--mode", default=None)
    compress.add_argument("--out", type=Path, required=True)
    _add_config_arg(compress)
    compress.set_defaults(func=_cmd_compress)

    sweep = sub.add_parser("sweep", help="accuracy/ratio sweep over scale biases")
    sweep.add_argument("--eval", type=Path, required=True)
    sweep.add_argument("--scales", default=None, help='e.g. "-2..4:0.5" or "0,1,2"')
    sweep.add_argument("--backbone", default=None)
    sweep.add_argument("--report", type=Path, required=True)
    sweep.add_argument("--format", choices=("csv", "json"), default="csv")
    sweep.add_argument("--answerer", default="echo", help='"echo" or "fixed:<text>"')
    sweep.add_argument("--no-figures", action="store_true")
    _add_config_arg(sweep)
    sweep.set_defaults(func=_cmd_sweep)

    synth = sub.add_parser("synth", help="teacher-driven data synthesis")
    synth.add_argument("--phase", type=int, choices=(1, 2), required=True)
    synth.add_argument("--in", dest="infile", type=Path, required=True)
    synth.add_argument("--endpoint", default="default", help="endpoint section name in the config")
    synth.add_argument("--kinds", default="summarization,single_doc_qa,multi_doc_qa,multi_hop")
    synth.add_argument("--language", choices=("en", "zh"), default="en")
    synth.add_argument("--fixtures", type=Path, default=None, help="offline fixture JSONL")
    synth.add_argument("--out", type=Path, required=True)
    _add_config_arg(synth)
    synth.set_defaults(func=_cmd_synth)

    train = sub.add_parser("train-head", help="fit the density head")
    train.add_argument("--data", type=Path, required=True)
    train.add_argument("--epochs", type=int, default=500)
    train.add_argument("--lr", type=float, default=0.05)
    train.add_argument("--out", type=Path, default=Path("head.json"))
    train.add_argument("--log", type=Path, default=None)
    _add_config_arg(train)
    train.set_defaults(func=_cmd_train_head)

    report = sub.add_parser("report", help="render figures from an existing report")
    report.add_argument("--in", dest="infile", type=Path, required=True)
    report.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
