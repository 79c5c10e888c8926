"""``cwnet`` command line: generate, train, eval, validate, gradcheck, inspect.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections import Counter
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .complex import ComplexError, CWComplex, build_complex, total_cells, validate
from .hodge import spectrum
from .layers import ComplexBatch
from .numerics import grad_check
from .synth import (
    Dataset,
    DatasetFormatError,
    GeneratorConfig,
    default_min_profile,
    generate_dataset,
    load_dataset,
    random_complex,
    save_dataset,
    split,
)
from .train import (
    MODELS,
    NonFiniteLossError,
    ParamsFormatError,
    build_model,
    default_optimizer,
    evaluate,
    load_params,
    save_history,
    save_params,
    train_model,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

DEFAULT_DROPOUT = 0.1


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _profile(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if any(v < 0 for v in values):
        raise argparse.ArgumentTypeError("profile entries must be non-negative")
    return values


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seeds are unsigned 64-bit integers")
    return value


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load(path: str) -> Dataset:
    try:
        return load_dataset(path)
    except FileNotFoundError:
        raise DataError(f"no such dataset file: {path}") from None
    except (DatasetFormatError, ComplexError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from None


def _split(args, dataset: Dataset) -> tuple[Dataset, Dataset]:
    seed = args.seed if args.data_seed is None else args.data_seed
    try:
        return split(dataset, args.split, seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# ------------------------------------------------------------- subcommands


def cmd_generate(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    dim = len(args.max_profile) - 1
    min_profile = args.min_profile or default_min_profile(dim)
    try:
        config = GeneratorConfig(args.n, args.max_profile, min_profile, args.seed).check()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    dataset = generate_dataset(config)
    out = Path(args.out)
    save_dataset(dataset, out)
    manifest = Path(args.manifest) if args.manifest else out.with_name(out.name + ".manifest.json")
    targets = np.asarray(dataset.targets)
    _write_json(
        manifest,
        {
            "command": "generate",
            "dataset": out.name,
            "items": len(dataset),
            "max_profile": list(config.max_profile),
            "min_profile": list(config.min_profile),
            "seed": config.seed,
        },
    )
    print(f"wrote {len(dataset)} complexes to {out}")
    print(f"target_mean={targets.mean():.6f}")
    print(f"target_std={targets.std():.6f}")
    print("size histogram (total cells: count)")
    for size, count in sorted(Counter(int(t) for t in targets).items()):
        print(f"  {size:3d}: {count}")
    return EXIT_OK


def cmd_train(args) -> int:
    dataset = _load(args.data)
    train, test = _split(args, dataset)
    init_seed = args.seed if args.init_seed is None else args.init_seed
    try:
        optimizer = default_optimizer(
            args.model,
            learning_rate=args.lr,
            momentum=args.momentum,
            weight_decay=args.weight_decay,
            steps=args.steps,
            seed=init_seed,
        )
        options = {}
        if args.model == "cwat":
            options["dropout"] = DEFAULT_DROPOUT if args.dropout is None else args.dropout
        elif args.dropout:
            raise UsageError("--dropout applies to cwat only")
        model = build_model(args.model, dataset.config.max_profile, **options)
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    echo = f"model={args.model} lr={optimizer.learning_rate} momentum={optimizer.momentum}"
    echo += f" weight_decay={optimizer.weight_decay} steps={optimizer.steps}"
    if args.model == "cwat":
        echo += f" dropout={model.config.dropout}"
    print(echo)

    def progress(step, loss):
        print(f"step {step} loss {loss!r}", file=sys.stderr)

    trained, history = train_model(
        model, train, optimizer, test,
        dropout_seed=args.dropout_seed, standardize=args.standardize, on_step=progress if args.verbose else None,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    params_path = out_dir / f"{args.model}.cwpm"
    history_path = out_dir / f"{args.model}_history.csv"
    save_params(trained, params_path)
    save_history(history, history_path)
    _write_json(
        out_dir / f"{args.model}_run.json",
        {
            "command": "train",
            "model": args.model,
            "dataset": Path(args.data).name,
            "split": args.split,
            "data_seed": args.seed if args.data_seed is None else args.data_seed,
            "init_seed": init_seed,
            "dropout_seed": args.dropout_seed,
            "standardize": args.standardize,
            "learning_rate": optimizer.learning_rate,
            "momentum": optimizer.momentum,
            "weight_decay": optimizer.weight_decay,
            "steps": optimizer.steps,
            "test_rmse": history.test_rmse,
            "parameters": history.parameters,
        },
    )
    print(f"train_loss_first={history.losses[0]!r}")
    print(f"train_loss_final={history.losses[-1]!r}")
    print(f"seconds_per_step={history.total_seconds / len(history):.4f}")
    print(f"test_rmse={history.test_rmse!r}")
    print(f"parameters={history.parameters}")
    return EXIT_OK


def cmd_eval(args) -> int:
    dataset = _load(args.data)
    try:
        trained = load_params(args.params)
    except FileNotFoundError:
        raise DataError(f"no such parameters file: {args.params}") from None
    except (ParamsFormatError, ValueError) as exc:
        raise DataError(f"{args.params}: {exc}") from None
    if tuple(trained.model.config.profile) != dataset.config.max_profile:
        raise DataError(
            f"model profile {trained.model.config.profile} does not match dataset {dataset.config.max_profile}"
        )
    if args.subset == "all":
        subset = dataset
    else:
        train, test = _split(args, dataset)
        subset = test if args.subset == "test" else train
    print(f"rmse={evaluate(trained, subset)!r}")
    print(f"items={len(subset)}")
    return EXIT_OK


def cmd_validate(args) -> int:
    dataset = _load(args.data)
    failures = 0
    for idx, (cx, target) in zip(dataset.indices, dataset):
        report = validate(cx)
        problems = [str(v) for v in report.violations]
        if target != total_cells(cx):
            problems.append(f"target {target!r} != total_cells {total_cells(cx)}")
        if problems:
            failures += 1
            print(f"item {idx}: FAIL")
            for p in problems:
                print(f"  {p}")
        elif args.verbose:
            print(f"item {idx}: ok")
    print(f"{len(dataset) - failures}/{len(dataset)} items valid")
    return EXIT_OK if failures == 0 else EXIT_DATA


def _pick(args) -> tuple[CWComplex, float | None]:
    if args.data is None:
        return None, None
    dataset = _load(args.data)
    if not 0 <= args.index < len(dataset):
        raise DataError(f"index {args.index} out of range 0..{len(dataset) - 1}")
    return dataset.complexes[args.index], dataset.targets[args.index]


def cmd_gradcheck(args) -> int:
    cx, _ = _pick(args)
    if cx is None:
        cx, _ = random_complex(args.max_profile, np.random.default_rng(args.seed), default_min_profile(len(args.max_profile) - 1))
    options = {"dropout": 0.0} if args.model == "cwat" else {}
    try:
        model = build_model(args.model, cx.skeleton_sizes, **options)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    params = model.init(np.random.default_rng(args.seed))
    batch = ComplexBatch(cx)
    report = grad_check(lambda: model.forward(batch, params), params, h=args.h, tol=args.tol)
    print(f"model={args.model} coordinates={report.coordinates}")
    print(f"max_rel_error={report.max_rel_error:.3e}")
    if report.worst is not None:
        print(f"worst={report.worst[0]}{list(report.worst[1])}")
    print("PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_NUMERIC


def triangle() -> CWComplex:
    """Filled triangle: 3 vertices, 3 edges, one 2-cell."""
    b1 = [[-1, 0, 1], [1, -1, 0], [0, 1, -1]]
    b2 = [[1], [1], [1]]
    return build_complex(2, [3, 3, 1], [b1, b2])


FIXTURES = {"triangle": triangle}


def _fmt_eig(x: float) -> str:
    x = round(float(x), 9)
    return f"{x + 0.0:g}"


def cmd_inspect(args) -> int:
    if args.fixture:
        cx, target = FIXTURES[args.fixture](), None
    elif args.data:
        cx, target = _pick(args)
    else:
        raise UsageError("inspect needs --data or --fixture")
    print(f"dimension={cx.dimension}")
    print(f"skeleton_sizes={list(cx.skeleton_sizes)}")
    print(f"real_sizes={list(cx.real_sizes)}")
    if target is not None:
        print(f"target={target!r}")
    for k in range(1, cx.dimension + 1):
        print(f"B_{k} ({cx.skeleton_sizes[k - 1]} x {cx.skeleton_sizes[k]}):")
        for row in cx.boundary(k):
            print("  " + " ".join(f"{int(v):2d}" for v in row))
    for k in range(cx.dimension + 1):
        eig = spectrum(cx, k)
        print(f"Delta_{k} spectrum: {{{', '.join(_fmt_eig(e) for e in eig)}}}")
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _training_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="CWDS dataset file")
    p.add_argument("--split", type=float, default=0.8, help="train fraction (default 0.8)")
    p.add_argument("--seed", type=_seed, default=0, help="default for every seed not given explicitly")
    p.add_argument("--data-seed", type=_seed, help="train/test split seed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cwnet", description="CW-complex neural networks")
    parser.add_argument("--version", action="version", version=f"cwnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic CWDS dataset")
    p.add_argument("--n", type=int, default=500, help="number of complexes")
    p.add_argument("--seed", type=_seed, default=42)
    p.add_argument("--out", required=True)
    p.add_argument("--max-profile", type=_profile, default=(8, 12, 6))
    p.add_argument("--min-profile", type=_profile)
    p.add_argument("--manifest", help="manifest path (default <out>.manifest.json)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("--model", required=True, help=f"one of: {', '.join(MODELS)}")
    _training_flags(p)
    p.add_argument("--init-seed", type=_seed)
    p.add_argument("--dropout-seed", type=_seed)
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--standardize", action="store_true", help="fit z-scored targets")
    p.add_argument("--out-dir", default=".")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="RMSE of saved parameters on a dataset split")
    p.add_argument("--params", required=True)
    _training_flags(p)
    p.add_argument("--subset", choices=("test", "train", "all"), default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("validate", help="check every complex of a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("gradcheck", help="finite-difference check of a model's gradients")
    p.add_argument("--model", default="cwcnn", help=f"one of: {', '.join(MODELS)}")
    p.add_argument("--data")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--max-profile", type=_profile, default=(8, 12, 6))
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("inspect", help="print one complex and its Hodge spectra")
    p.add_argument("--data")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--fixture", choices=sorted(FIXTURES))
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "model", None) is not None and args.model not in MODELS:
        print(f"cwnet: error: unknown model {args.model!r}; valid models: {', '.join(MODELS)}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"cwnet {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"cwnet {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NonFiniteLossError as exc:
        print(f"cwnet {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"cwnet {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
