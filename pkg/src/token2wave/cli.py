"""Command-line entry point: ``token2wave <subcommand> [options]``.

Artifacts go to ``--output-dir``, else ``$TOKEN2WAVE_OUTPUT_DIR``, else
``./token2wave-out``. Exit codes: 0 success, 1 runtime failure, 2 bad
configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import diagnostics
from .data import Vocabulary, generate_synthetic, load_agnews_csv
from .exceptions import ConfigError, Token2WaveError
from .model import MODES, RECOMBINE, load_params, save_params
from .training import TrainConfig, evaluate, read_metrics_csv, train, write_metrics_csv

OUTPUT_ENV = "TOKEN2WAVE_OUTPUT_DIR"
DEFAULT_OUTPUT = "token2wave-out"
OP_TOL = 1e-4
FULL_MODEL_TOL = 1e-3


def _output_dir(args):
    out = Path(args.output_dir or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, payload):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load_dataset(args, vocab=None):
    """Return ``(train, test, vocab)`` for ``--dataset synthetic`` or an AG News CSV path."""
    if args.dataset == "synthetic":
        if args.test_dataset:
            raise ConfigError("--test-dataset only applies to CSV datasets")
        ds = generate_synthetic(
            classes=args.classes, vocab_per_class=args.vocab_per_class,
            len_range=(args.text_len_min, args.text_len_max), n_samples=args.samples,
            overlap_fraction=args.overlap, rng=args.seed,
        )
        return (*ds.split(args.test_fraction, rng=args.seed), None)
    train_ds, vocab = load_agnews_csv(args.dataset, vocab=vocab, max_len=args.max_len)
    if args.test_dataset:
        test_ds, _ = load_agnews_csv(args.test_dataset, vocab=vocab, max_len=args.max_len)
        return train_ds, test_ds, vocab
    return (*train_ds.split(args.test_fraction, rng=args.seed), vocab)


def _add_data_flags(p):
    p.add_argument("--dataset", default="synthetic", help="'synthetic' or path to an AG News CSV")
    p.add_argument("--test-dataset", help="held-out AG News CSV (default: split off --test-fraction)")
    p.add_argument("--test-fraction", type=float, default=1 / 3)
    p.add_argument("--classes", type=int, default=4, help="synthetic: number of classes")
    p.add_argument("--vocab-per-class", type=int, default=10, help="synthetic: tokens per class block")
    p.add_argument("--text-len-min", type=int, default=24, help="synthetic: fewest tokens per text")
    p.add_argument("--text-len-max", type=int, default=48, help="synthetic: most tokens per text")
    p.add_argument("--samples", type=int, default=3000, help="synthetic: corpus size")
    p.add_argument("--overlap", type=float, default=0.3, help="synthetic: share of tokens from the shared block")
    p.add_argument("--max-len", type=int, default=64, help="truncate sequences ([CLS] included) to this length")
    p.add_argument("--mode", choices=MODES, default="modulation")
    p.add_argument("--recombine", choices=RECOMBINE, default="real",
                   help="how the wave returns to a real vector: its real part or its magnitude")
    p.add_argument("--seed", type=int, default=0)


def cmd_train(args):
    out = _output_dir(args)
    train_ds, test_ds, vocab = _load_dataset(args)
    if vocab is not None:
        _write_json(out / "vocab.json", vocab.token_to_id)
    config = TrainConfig(
        lr=args.lr, batch_size=args.batch_size, epochs=args.epochs, mode=args.mode, d=args.d,
        seed=args.seed, max_len=args.max_len, optimizer=args.optimizer, max_batches=args.batches,
        recombine=args.recombine, checkpoint_dir=str(out),
    )
    params, rows = train(config, train_ds, test_ds)
    write_metrics_csv(rows, out / "metrics.csv")
    save_params(params, out / "params.json")
    final = next((r.test_acc for r in reversed(rows) if r.test_acc is not None), None)
    if final is None:
        final = evaluate(params, test_ds, args.mode, max_len=args.max_len, recombine_rule=args.recombine)
    print(f"trained {len(rows)} batches ({args.mode}); final test_acc={final:.4f}; metrics -> {out / 'metrics.csv'}")
    return 0


def cmd_eval(args):
    if args.dataset != "synthetic" and not args.vocab:
        raise ConfigError("--vocab (the vocab.json written by 'train') is required for CSV datasets")
    params = load_params(args.checkpoint)
    if args.dataset == "synthetic":
        _, test_ds, _ = _load_dataset(args)
    else:
        vocab = Vocabulary(json.loads(Path(args.vocab).read_text()))
        test_ds, _ = load_agnews_csv(args.dataset, vocab=vocab, max_len=args.max_len)
    if test_ds.vocab_size > params.vocab_size:
        raise ConfigError(f"dataset vocabulary ({test_ds.vocab_size}) exceeds the checkpoint's ({params.vocab_size})")
    acc = evaluate(params, test_ds, args.mode, max_len=args.max_len, recombine_rule=args.recombine)
    print(f"accuracy={acc:.4f} on {len(test_ds)} samples")
    return 0


def _write_kde(curve, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "density"])
        for x, dens in zip(curve.grid, curve.density):
            w.writerow([repr(float(x)), repr(float(dens))])


def cmd_diagnose(args):
    out = _output_dir(args)
    rows = read_metrics_csv(args.metrics)
    columns = {
        "grad_cls": [r.grad_cls for r in rows],
        "grad_input": [r.grad_input for r in rows],
        "grad_clf": [r.grad_clf for r in rows],
        "eig_ratio": [r.eig_ratio for r in rows if r.eig_ratio is not None],
    }
    summary = {}
    for name, values in columns.items():
        if len(values) < 2 or np.ptp(values) == 0:
            continue
        curve = diagnostics.kde(values, grid_points=args.grid_points)
        _write_kde(curve, out / f"kde_{name}.csv")
        summary[name] = float(curve.grid[np.argmax(curve.density)])
    _write_json(out / "kde_summary.json", {"peak_location": summary})
    peaks = ", ".join(f"{k} peak at {v:.4g}" for k, v in summary.items())
    print(f"KDE over {len(rows)} batches: {peaks}")
    return 0


def cmd_gradcheck(args):
    out = _output_dir(args)
    report = {}
    ok = True
    for op in diagnostics.GRAD_CHECKS:
        tol = FULL_MODEL_TOL if op in diagnostics.FULL_MODEL_OPS else OP_TOL
        errors, rejected = [], 0
        rng = np.random.default_rng(args.seed)
        while len(errors) < args.trials:
            try:
                errors.append(diagnostics.grad_check(op, rng=rng))
            except diagnostics.PointRejectedError:
                rejected += 1
                if rejected > 10 * args.trials:
                    raise
        worst = max(errors)
        ok &= worst < tol
        report[op] = {"max_relative_error": worst, "tolerance": tol, "trials": len(errors), "rejected": rejected}
    _write_json(out / "gradcheck.json", report)
    worst_op = max(report, key=lambda k: report[k]["max_relative_error"] / report[k]["tolerance"])
    print(f"gradcheck {'passed' if ok else 'FAILED'}: max relative error {report[worst_op]['max_relative_error']:.3e} ({worst_op})")
    return 0 if ok else 1


def cmd_simulate_decay(args):
    out = _output_dir(args)
    errors = [float(e) for e in args.errors.split(",")]
    traj = diagnostics.decay_simulation(args.w0, args.eta, errors, args.iters_per_epoch)
    with open(out / "decay.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "value"])
        for t, v in enumerate(traj.values):
            w.writerow([t, repr(float(v))])
    msg = f"decay: {len(traj.values) - 1} iterations, final value {traj.values[-1]:.6g}"
    if args.target is not None:
        t = diagnostics.iterations_to_reach(args.target, args.w0, args.eta, errors[0])
        msg += f"; {t} iterations at error {errors[0]} to reach {args.target}"
    print(msg)
    return 0


def cmd_count_params(args):
    out = _output_dir(args)
    report = diagnostics.count_params(args.d)
    _write_json(out / "count_params.json", report)
    line = f"d={args.d}: formula (d^2 + d) * 4 = {report['formula_total']:,}; itemised layers = {report['architecture_total']:,}"
    if "published_total" in report:
        line += (f"; published total {report['published_total']:,} differs from the formula "
                 f"by {report['published_discrepancy']:,}")
    print(line)
    return 0


def cmd_complexity(args):
    out = _output_dir(args)
    report = diagnostics.complexity_report(args.n, args.d).as_dict()
    _write_json(out / "complexity.json", report)
    print(f"n={args.n}, d={args.d}: wave time O({report['wave']['time_big_o']}) total {report['wave']['time_total']:,}, "
          f"attention time O({report['attention']['time_big_o']}) total {report['attention']['time_total']:,}; "
          f"attention costs more from n={report['crossover_n']}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="token2wave", description="Wave-network token representation toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--output-dir", help=f"artifact directory (default: ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
        p.set_defaults(func=func)
        return p

    p = add("train", cmd_train,
            "Train the single-layer wave network classifier from random N(0,1) embeddings; reproduces the "
            "convergence run (test accuracy every 10 batches) and logs per-batch gradient norms of the [CLS] "
            "row, all input rows and the classifier, plus the [CLS] eigenvalue ratio.")
    _add_data_flags(p)
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--epochs", type=int, default=4)
    p.add_argument("--batches", type=int, help="stop after exactly this many batches")
    p.add_argument("--optimizer", choices=("sgd", "adam"), default="sgd")

    p = add("eval", cmd_eval, "Report test accuracy of a saved parameter checkpoint.")
    _add_data_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", help="vocab.json from 'train' (CSV datasets only); the whole CSV is evaluated")

    p = add("diagnose", cmd_diagnose,
            "Kernel density estimates (Gaussian kernel, Silverman bandwidth) of the gradient norms and "
            "[CLS] eigenvalue ratios in a metrics CSV; reproduces the gradient-distribution analysis.")
    p.add_argument("--metrics", required=True, help="metrics CSV written by 'train'")
    p.add_argument("--grid-points", type=int, default=512)

    p = add("gradcheck", cmd_gradcheck,
            "Central finite-difference checks of every hand-derived backward pass (wave conversion, "
            "interference, modulation, feed-forward, normalisation, classifier, full model).")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=20)

    p = add("simulate-decay", cmd_simulate_decay,
            "Simulate the exponential embedding decay w <- w (1 - 2 eta error) under per-epoch average losses.")
    p.add_argument("--w0", type=float, default=1.0)
    p.add_argument("--eta", type=float, default=1e-3)
    p.add_argument("--errors", default=",".join(map(str, diagnostics.PUBLISHED_EPOCH_LOSSES)))
    p.add_argument("--iters-per-epoch", type=int, default=1500)
    p.add_argument("--target", type=float, default=diagnostics.PUBLISHED_DECAY_VALUE,
                   help="report the iteration count needed to fall to this value")

    p = add("count-params", cmd_count_params,
            "Parameter estimate of the single-layer wave network: the (d^2 + d) * 4 formula, "
            "the itemised layer sizes, and the published d=768 figure.")
    p.add_argument("--d", type=int, default=768)

    p = add("complexity", cmd_complexity,
            "Time and memory complexity terms of the wave network next to self-attention, with the n > d crossover.")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--d", type=int, default=768)
    return parser


def run(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (Token2WaveError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
