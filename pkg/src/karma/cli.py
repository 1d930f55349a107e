"""Command-line front end: ``karma <subcommand> ...``.

Settings resolve as defaults < command-line flags < ``--config`` JSON file. The
resolved settings are written next to the primary output as
``<output>.config.json`` (or to stderr when the output goes to stdout).
Exit status: 0 on success, 2 on usage errors, 1 on runtime errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .datagen import (GeneratorConfig, csv_dim, format_float, generate, load_csv, load_ground_truth,
                      matrix_m_fixture, read_csv, save_csv, save_ground_truth)
from .evaluation import (RegretConfig, evaluate, holdout_select_gamma, regret_harness,
                         split_holdout)
from .kernel import gram
from .learner import KarmaConfig, TrainTrace, load_model, save_model, train_batch, train_online
from .regularity import check_regularity

log = logging.getLogger("karma")

_NOT_SETTINGS = {"func", "config", "verbose"}


class UsageError(Exception):
    pass


def _resolve(args: argparse.Namespace) -> dict:
    if args.config:
        with open(args.config) as f:
            overrides = json.load(f)
        for k, v in overrides.items():
            key = k.replace("-", "_")
            if key in _NOT_SETTINGS or key == "command" or not hasattr(args, key):
                raise UsageError(f"unknown setting {k!r} in {args.config}")
            setattr(args, key, v)
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_SETTINGS}


def _log_config(settings: dict, output: str | None):
    text = json.dumps({"format_version": 1, **settings}, indent=1)
    if output and output != "-":
        Path(output + ".config.json").write_text(text + "\n")
    else:
        print(text, file=sys.stderr)


def _write_json(obj: dict, output: str | None):
    text = json.dumps(obj, indent=1) + "\n"
    if output and output != "-":
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _open_out(output: str | None):
    if output and output != "-":
        return open(output, "w", newline="")
    return sys.stdout


def _gamma_grid(text: str) -> list[int]:
    try:
        return [int(g) for g in str(text).split(",") if g.strip()]
    except ValueError:
        raise UsageError(f"cannot parse gamma grid {text!r}") from None


def cmd_generate(args) -> int:
    settings = _resolve(args)
    if args.fixture:
        if args.fixture != "matrix-m":
            raise UsageError(f"unknown fixture {args.fixture!r}")
        examples = matrix_m_fixture(args.per_type)
        save_csv(examples, args.out, dim=4)
        _log_config(settings, args.out)
        log.info("wrote %d fixture rows to %s", len(examples), args.out)
        return 0
    if args.d is None or args.n is None:
        raise UsageError("generate needs --d and --n (or --fixture)")
    if not 1 <= args.rank <= args.d:
        raise UsageError(f"rank must satisfy 1 <= rank <= d (got rank={args.rank}, d={args.d})")
    cfg = GeneratorConfig(d=args.d, rank=args.rank, lambda0=args.lambda0, n=args.n,
                          keep_prob=args.keep_prob, margin=args.margin, seed=args.seed,
                          label_rule=args.label_rule, noise=args.noise)
    examples, truth = generate(cfg)
    truth_path = args.truth or str(Path(args.out).with_suffix(".truth.json"))
    save_csv(examples, args.out, dim=args.d)
    save_ground_truth(truth, truth_path)
    settings["truth"] = truth_path
    _log_config(settings, args.out)
    log.info("wrote %d rows to %s and ground truth to %s", len(examples), args.out, truth_path)
    return 0


def _write_trace(trace: TrainTrace, path: str):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["round", "prediction", "loss", "cumulative_loss"])
        for t, (p, l, c) in enumerate(zip(trace.predictions, trace.losses, trace.cumulative_loss), 1):
            w.writerow([t, format_float(p), format_float(l), format_float(c)])


def cmd_train(args) -> int:
    settings = _resolve(args)
    data = load_csv(args.data, rescale=args.rescale)
    if not data:
        raise ValueError(f"{args.data}: no rows to train on")
    cfg = KarmaConfig(gamma=args.gamma, rho=args.rho, loss=args.loss, lipschitz=args.lipschitz,
                      seed=args.seed)
    if args.gamma_grid:
        grid = _gamma_grid(args.gamma_grid)
        train, hold = split_holdout(data, args.holdout, args.seed)
        cfg.rounds = args.epochs * len(train) if args.epochs else args.rounds
        best, report = holdout_select_gamma(train, hold, grid, cfg)
        model = report.models[best]
        _write_json(report.to_dict(), args.model + ".report.json")
        print(f"selected gamma={best}", file=sys.stderr)
        for g, v in report.holdout_losses.items():
            print(f"  gamma={g}: holdout loss {v:.6g}", file=sys.stderr)
    else:
        cfg.rounds = args.epochs * len(data) if args.epochs else args.rounds
        trace = TrainTrace()
        if args.online:
            model, trace = train_online(data, cfg)
        else:
            model = train_batch(data, cfg, trace=trace)
        _write_trace(trace, args.model + ".trace.csv")
    save_model(model, args.model)
    _log_config(settings, args.model)
    return 0


def _check_width(path: str, model_dim: int):
    width = csv_dim(path)
    if width != model_dim:
        raise ValueError(f"{path} has {width} feature columns, model expects {model_dim}")


def cmd_predict(args) -> int:
    settings = _resolve(args)
    model = load_model(args.model)
    _check_width(args.data, model.dim)
    inputs, _ = read_csv(args.data, require_label=False)
    preds = model.predict_many(inputs)
    out = _open_out(args.out)
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["prediction"])
        for p in preds:
            w.writerow([format_float(p)])
    finally:
        if out is not sys.stdout:
            out.close()
    _log_config(settings, args.out)
    return 0


def cmd_evaluate(args) -> int:
    settings = _resolve(args)
    model = load_model(args.model)
    _check_width(args.data, model.dim)
    data = load_csv(args.data)
    metrics = evaluate(model, data, model.loss)
    _write_json({"format_version": 1, "loss": model.loss.kind, **metrics.to_dict()}, args.out)
    print(f"mean {model.loss.kind} loss {metrics.mean_loss:.6g}, 0/1 error {metrics.error_rate:.4f}, "
          f"n={metrics.n}", file=sys.stderr)
    _log_config(settings, args.out)
    return 0


def cmd_check_regularity(args) -> int:
    settings = _resolve(args)
    truth = load_ground_truth(args.truth)
    data = load_csv(args.data)
    xs = [e.input for e in data]
    full = truth.full_vectors if len(truth.full_vectors) == len(xs) else None
    report = check_regularity(xs, truth.subspace, tol=args.tol, full_vectors=full)
    _write_json(report.to_dict(), args.out)
    text = report.to_text()
    if args.text:
        Path(args.text).write_text(text)
    else:
        sys.stderr.write(text)
    _log_config(settings, args.out)
    return 0


def cmd_gram(args) -> int:
    settings = _resolve(args)
    inputs, _ = read_csv(args.data, require_label=False)
    G = gram(inputs, args.gamma, normalized=args.normalized)
    out = _open_out(args.out)
    try:
        w = csv.writer(out, lineterminator="\n")
        for row in G:
            w.writerow([format_float(v) for v in row])
    finally:
        if out is not sys.stdout:
            out.close()
    _log_config(settings, args.out)
    return 0


def cmd_regret(args) -> int:
    settings = _resolve(args)
    truth = load_ground_truth(args.truth)
    data = load_csv(args.data)
    cfg = RegretConfig(loss=args.loss, lipschitz=args.lipschitz, gamma=args.gamma,
                       rho=args.rho, B=args.B)
    rec = regret_harness(data, truth, cfg)
    with open(args.out_curve, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["round", "algorithm_loss", "comparator_loss", "regret"])
        for t, a, c, r in rec.curve:
            w.writerow([int(t), format_float(a), format_float(c), format_float(r)])
    _write_json(rec.to_dict(), args.out_report)
    print(f"regret {rec.regret:.6g} <= bound {rec.bound:.6g}: {rec.within_bound}", file=sys.stderr)
    _log_config(settings, args.out_report)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="karma", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--config", help="JSON file whose keys override command-line flags")
        sp.set_defaults(func=func)
        return sp

    def loss_args(sp):
        sp.add_argument("--loss", choices=["hinge", "logistic", "squared"], default="hinge")
        sp.add_argument("--lipschitz", type=float, default=1.0,
                        help="declared Lipschitz bound (squared loss only)")

    g = add("generate", cmd_generate, "write a synthetic dataset and its ground truth")
    g.add_argument("--d", type=int)
    g.add_argument("--rank", type=int, default=2)
    g.add_argument("--lambda0", type=float, default=0.2)
    g.add_argument("--n", type=int)
    g.add_argument("--keep-prob", type=float, default=0.5)
    g.add_argument("--margin", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--label-rule", choices=["margin", "regression"], default="margin")
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--fixture", choices=["matrix-m"])
    g.add_argument("--per-type", type=int, default=1)
    g.add_argument("--out", default="data.csv")
    g.add_argument("--truth", help="ground-truth path (default: <out>.truth.json)")

    t = add("train", cmd_train, "train a model on a CSV dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--model", default="model.json")
    t.add_argument("--gamma", type=int, default=2)
    t.add_argument("--gamma-grid", help="comma-separated gammas to select from on a holdout")
    t.add_argument("--holdout", type=float, default=0.2)
    t.add_argument("--rho", type=float, default=0.1)
    loss_args(t)
    t.add_argument("--rounds", type=int, help="total rounds T (default: one pass)")
    t.add_argument("--epochs", type=int, help="passes over the data; overrides --rounds")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--online", action="store_true", help="keep the last iterate, not the average")
    t.add_argument("--rescale", action="store_true", help="divide inputs by the largest observed norm")

    pr = add("predict", cmd_predict, "write predictions of a model")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--out", default="-")

    ev = add("evaluate", cmd_evaluate, "mean loss and 0/1 error of a model")
    ev.add_argument("--model", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--out", default="-")

    cr = add("check-regularity", cmd_check_regularity, "certify lambda-regularity against a ground truth")
    cr.add_argument("--data", required=True)
    cr.add_argument("--truth", required=True)
    cr.add_argument("--tol", type=float, default=1e-9)
    cr.add_argument("--out", default="-")
    cr.add_argument("--text", help="also write the human-readable table here")

    gr = add("gram", cmd_gram, "write the kernel Gram matrix of a dataset")
    gr.add_argument("--data", required=True)
    gr.add_argument("--gamma", type=int, required=True)
    gr.add_argument("--normalized", action="store_true")
    gr.add_argument("--out", default="-")

    rg = add("regret", cmd_regret, "online regret against the ground-truth comparator")
    rg.add_argument("--data", required=True)
    rg.add_argument("--truth", required=True)
    rg.add_argument("--gamma", type=int, help="default: ceil(log T / lambda)")
    rg.add_argument("--rho", type=float, help="default: L X sqrt(Gamma) / sqrt(B T)")
    rg.add_argument("--B", type=float)
    loss_args(rg)
    rg.add_argument("--out-curve", default="regret.csv")
    rg.add_argument("--out-report", default="regret.json")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"karma {args.command}: error: {e}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError, KeyError) as e:
        print(f"karma {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
