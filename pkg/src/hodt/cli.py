"""Command-line interface.

Every command prints one JSON document on stdout and a short human-readable
summary on stderr. Exit status is 0 on success, 2 when no feasible tree
exists and 1 on any error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .evaluation import PROTOCOLS, count_feasible, experiment_driver, format_summary, metrics
from .exceptions import HODTError
from .geometry import embedding_dim
from .heuristics import DEFAULT_CANDIDATE_CAP, CoresetParams, hodt_coreset, sodt_wsh
from .io import Model, read_csv, write_csv
from .solver import BACKENDS, DEFAULT_BATCH_SIZE, hodt, odt_size_naive, resolve_threads
from .synthetic import NoiseSpec, make_experiment

EXIT_OK, EXIT_ERROR, EXIT_NO_SOLUTION = 0, 1, 2


class CLIError(HODTError):
    pass


def _emit(result, human=None):
    sys.stdout.write(json.dumps(result, sort_keys=True) + "\n")
    if human:
        sys.stderr.write(human.rstrip("\n") + "\n")


def _table(rows):
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def _check_exact(data, k, degree):
    g = embedding_dim(data.d, degree)
    if k * g > data.n:
        raise CLIError(f"k * G = {k} * {g} exceeds the number of points N = {data.n}")
    return g


def _save(args, tree, data, meta):
    model = Model(tree, args.degree, data.d, meta)
    if args.model:
        model.save(args.model)
    return model


def _no_solution(command, extra=None):
    result = {"command": command, "status": "no_solution", **(extra or {})}
    _emit(result, f"{command}: no feasible tree exists")
    return EXIT_NO_SOLUTION


def _coreset_params(args):
    return CoresetParams(args.block_size, args.reshuffles, args.heap_size, args.max_exact, args.shrink,
                         args.seed, args.per_block)


# --------------------------------------------------------------------------
# commands


def cmd_train(args):
    data = read_csv(args.data)
    _check_exact(data, args.k, args.degree)
    threads = resolve_threads(args.threads)
    sol = hodt(data, args.k, args.degree, backend=args.backend, n_jobs=threads, batch_size=args.batch_size)
    stats = sol.stats.to_dict()
    if not sol.found:
        return _no_solution("train", {"stats": stats})
    meta = {"K": args.k, "loss": sol.loss, "seed": args.seed, "backend": args.backend, "method": "exact"}
    _save(args, sol.tree, data, meta)
    result = {"command": "train", "status": "ok", "loss": sol.loss, "n": data.n, "k": args.k,
              "degree": args.degree, "tree_size": sol.tree.size, "stats": stats, "model": args.model}
    _emit(result, _table([("loss", sol.loss), ("train accuracy", f"{1 - sol.loss / data.n:.4f}"),
                          ("feasible", stats["feasible"]), ("evaluated", stats["configs_evaluated"])]))
    return EXIT_OK


def cmd_train_coreset(args):
    data = read_csv(args.data)
    res = hodt_coreset(data, args.k, args.degree, _coreset_params(args), args.backend, resolve_threads(args.threads))
    if not res.found:
        return _no_solution("train-coreset")
    meta = {"K": args.k, "loss": res.loss, "seed": args.seed, "backend": args.backend, "method": "coreset"}
    _save(args, res.tree, data, meta)
    heap = [{"loss": e.loss_full, "defining": [list(r) for r in e.defining]} for e in res.heap]
    result = {"command": "train-coreset", "status": "ok", "loss": res.loss, "n": data.n, "k": args.k,
              "rounds": res.rounds, "coreset_size": int(res.coreset.size), "history": res.history, "heap": heap,
              "model": args.model}
    _emit(result, _table([("loss", res.loss), ("rounds", res.rounds), ("coreset size", res.coreset.size)]))
    return EXIT_OK


def cmd_train_wsh(args):
    data = read_csv(args.data)
    res = sodt_wsh(data, args.k, args.degree, args.alpha, _coreset_params(args), args.backend, args.candidate_cap,
                   resolve_threads(args.threads))
    per_k = [{"k": j + 1, "loss": res.losses[j], "evaluated": res.evaluated[j]} for j in range(args.k)]
    if not res.found:
        return _no_solution("train-wsh", {"t_best": per_k})
    meta = {"K": args.k, "loss": res.loss, "seed": args.seed, "backend": args.backend, "method": "wsh",
            "alpha": args.alpha}
    _save(args, res.tree, data, meta)
    result = {"command": "train-wsh", "status": "ok", "loss": res.loss, "n": data.n, "k": args.k,
              "t_best": per_k, "candidates": len(res.candidates), "violations": res.violations,
              "model": args.model}
    _emit(result, _table([(f"k={r['k']}", r["loss"]) for r in per_k]))
    return EXIT_OK


def cmd_predict(args):
    model = Model.load(args.model)
    data = read_csv(args.data)
    if data.d != model.n_features:
        raise CLIError(f"model expects {model.n_features} features, data has {data.d}")
    pred = model.predict(data.points)
    loss = int(np.count_nonzero(pred != data.labels))
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["label"])
            w.writerows([[int(p)] for p in pred])
    result = {"command": "predict", "status": "ok", "n": data.n, "loss": loss,
              "accuracy": 1 - loss / data.n if data.n else None, "out": args.out}
    if not args.out:
        result["predictions"] = [int(p) for p in pred]
    _emit(result, _table([("points", data.n), ("loss", loss)]))
    return EXIT_OK


def cmd_eval(args):
    model = Model.load(args.model)
    train = read_csv(args.train)
    test = read_csv(args.test)
    m = metrics(model.tree, train, test, model.degree)
    result = {"command": "eval", "status": "ok", **m.to_dict()}
    _emit(result, _table([(k, f"{v:.4f}" if isinstance(v, float) else v) for k, v in m.to_dict().items()]))
    return EXIT_OK


def cmd_synth(args):
    truth, train, test = make_experiment(args.k, args.dim, args.n, args.seed,
                                         NoiseSpec(args.label_noise, args.feature_noise))
    write_csv(args.out, train)
    if args.test_out:
        write_csv(args.test_out, test)
    if args.truth_out:
        Model(truth.tree, 1, args.dim, {"K": args.k, "seed": args.seed, "method": "ground-truth"}).save(args.truth_out)
    result = {"command": "synth", "status": "ok", "n": train.n, "test_n": test.n, "depth": truth.depth,
              "k": args.k, "dim": args.dim, "seed": args.seed, "out": args.out, "test_out": args.test_out}
    _emit(result, _table([("train points", train.n), ("test points", test.n), ("depth", truth.depth)]))
    return EXIT_OK


def cmd_census(args):
    data = read_csv(args.data) if args.data else None
    rows = count_feasible(args.k, args.degree, args.blocksize, args.dim, args.n, args.replicates, args.seed, data)
    out = [{"k": r.k, "mean": r.mean, "std": r.std, "bound": r.bound, "ratio": r.ratio, "counts": r.counts}
           for r in rows]
    _emit({"command": "census", "status": "ok", "rows": out},
          _table([(f"k={r.k}", f"{r.mean:.1f} +- {r.std:.1f}  bound {r.bound}  ratio {r.ratio:.1f}") for r in rows]))
    return EXIT_OK


def cmd_oracle(args):
    data = read_csv(args.data)
    if data.n > 10:
        raise CLIError("the oracle is meant for tiny instances (N <= 10)")
    sol = odt_size_naive(data, args.k, args.degree)
    if not sol.found:
        return _no_solution("oracle", {"stats": sol.stats.to_dict()})
    _emit({"command": "oracle", "status": "ok", "loss": sol.loss, "stats": sol.stats.to_dict()},
          _table([("loss", sol.loss)]))
    return EXIT_OK


def cmd_experiment(args):
    levels = None if args.levels is None else [type_for(args.protocol)(v) for v in args.levels.split(",")]
    baselines = dict(b.split("=", 1) for b in args.baseline or [])
    records, summary = experiment_driver(args.protocol, levels, args.seeds, args.method, baselines=baselines,
                                         n_jobs=resolve_threads(args.threads))
    if args.out:
        fields = sorted({k for r in summary for k in r}, key=lambda k: (k not in ("level", "method"), k))
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
            w.writeheader()
            w.writerows(summary)
    _emit({"command": "experiment", "status": "ok", "protocol": args.protocol, "summary": summary},
          format_summary(summary))
    return EXIT_OK


def type_for(protocol):
    return float if protocol in ("label-noise", "feature-noise") else int


# --------------------------------------------------------------------------
# parser


def _add_common(p, exact=True):
    p.add_argument("--data", required=True, help="training CSV (f0..f{D-1},label)")
    p.add_argument("--k", type=int, required=True, help="number of branch nodes")
    p.add_argument("--degree", type=int, default=1, help="hypersurface degree M")
    p.add_argument("--backend", choices=BACKENDS, default="vec")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: $HODT_THREADS or 1)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", help="write the trained model to this JSON file")


def _add_coreset(p):
    p.add_argument("--block-size", type=int, default=20)
    p.add_argument("--reshuffles", type=int, default=1)
    p.add_argument("--heap-size", type=int, default=10)
    p.add_argument("--max-exact", type=int, default=40)
    p.add_argument("--shrink", type=float, default=0.5)
    p.add_argument("--per-block", type=int, default=1)


def build_parser():
    parser = argparse.ArgumentParser(prog="hodt", description="Optimal hypersurface decision trees.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="exact search")
    _add_common(p)
    p.add_argument("--batch-size", type=int, default=DEFAULT_BATCH_SIZE)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("train-coreset", help="coreset heuristic")
    _add_common(p)
    _add_coreset(p)
    p.set_defaults(func=cmd_train_coreset)

    p = sub.add_parser("train-wsh", help="selected-hyperplane search")
    _add_common(p)
    _add_coreset(p)
    p.add_argument("--alpha", type=int, default=0)
    p.add_argument("--candidate-cap", type=int, default=DEFAULT_CANDIDATE_CAP)
    p.set_defaults(func=cmd_train_wsh)

    p = sub.add_parser("predict", help="predict labels with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="write predictions to this CSV")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="tree-quality metrics")
    p.add_argument("--model", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--k", type=int, required=True, help="ground-truth tree size")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--n", type=int, required=True, help="training points")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--label-noise", type=float, default=0.0, help="percent of labels to perturb")
    p.add_argument("--feature-noise", type=float, default=0.0, help="noise std as a fraction of feature range")
    p.add_argument("--out", required=True, help="training CSV")
    p.add_argument("--test-out", help="clean test CSV")
    p.add_argument("--truth-out", help="ground-truth model JSON")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("census", help="count feasible configurations")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--degree", type=int, default=1)
    p.add_argument("--blocksize", type=int, default=10)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--replicates", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data", help="use this CSV instead of Gaussian samples")
    p.set_defaults(func=cmd_census)

    p = sub.add_parser("oracle", help="unfused reference solver (tiny inputs)")
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--degree", type=int, default=1)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("experiment", help="synthetic variation protocols")
    p.add_argument("--protocol", choices=PROTOCOLS, required=True)
    p.add_argument("--levels", help="comma separated levels")
    p.add_argument("--seeds", type=int, default=50)
    p.add_argument("--method", choices=("exact", "coreset"), default="coreset")
    p.add_argument("--baseline", action="append", help="NAME=PATTERN of prediction CSVs, {seed} and {level}")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", help="summary CSV")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("k", "degree", "threads", "n", "dim", "blocksize", "replicates"):
        value = getattr(args, name, None)
        if value is not None and value < (0 if name == "k" and args.command == "synth" else 1):
            _emit({"command": args.command, "status": "error", "error": f"--{name} is out of range"},
                  f"error: --{name} is out of range")
            return EXIT_ERROR
    try:
        return args.func(args)
    except (HODTError, ValueError, OSError) as exc:
        _emit({"command": args.command, "status": "error", "error": str(exc)}, f"error: {exc}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
