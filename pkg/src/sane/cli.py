"""Command-line entry point: search, retrain, baselines and search-space size."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import mlp_search, random_search, write_trials
from .checkpoint import save_checkpoint
from .config import (
    ConfigError,
    build_graph,
    hyperparams,
    load_config,
    search_config,
    trial_hyperparams,
    write_resolved,
)
from .genotype import Genotype, GenotypeError
from .graph import BundleError
from .plotting import plot_history, plot_sweep, plot_trials
from .runner import default_workers
from .search import enumerate_space_size, run_search, write_history
from .trainer import build_model, evaluate, repeat_eval, train, tune

log = logging.getLogger("sane")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class UsageError(ValueError):
    pass


def _out_dir(cfg: dict, args) -> Path:
    out = Path(args.out or cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _workers(cfg: dict) -> int:
    return cfg["workers"] or default_workers()


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _fit(genotype: Genotype, graph, hp, seed: int, leaky: bool):
    """One from-scratch training run; the returned model holds its best-val weights."""
    model = build_model(genotype, hp, (graph.feat_dim, graph.num_classes), seed=seed, leaky_scores=leaky)
    return train(model, graph, hp, seed)


# --- search -----------------------------------------------------------------------


def cmd_search(cfg: dict, out: Path) -> dict:
    graph = build_graph(cfg)
    hp = hyperparams(cfg)
    leaky = cfg["search"]["leaky_scores"]
    runs = []
    for r in range(cfg["search"]["runs"]):
        seed = cfg["seed"] + r
        scfg = search_config(cfg, seed)
        net, result = run_search(graph, scfg)
        # selection reads validation only; the test split stays untouched here
        val = _fit(result.genotype, graph, hp, seed, leaky).best_val
        log.info("run %d: %s  supernet val %.4f  retrain val %.4f", r, result.genotype, result.final_val_acc, val)
        runs.append((r, seed, net, result, val))

    gdir = out / "genotypes"
    gdir.mkdir(exist_ok=True)
    with open(out / "search_runs.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["run", "seed", "genotype", "supernet_val_acc", "retrain_val_metric", "search_seconds"])
        for r, seed, _, result, val in runs:
            (gdir / f"run{r}.json").write_text(result.genotype.to_json(run=r, seed=seed))
            w.writerow([r, seed, str(result.genotype), repr(result.final_val_acc), repr(val), f"{result.seconds:.3f}"])

    r, seed, net, result, val = max(runs, key=lambda x: (x[4], -x[0]))
    (out / "genotype.json").write_text(result.genotype.to_json(run=r, seed=seed, epochs=cfg["search"]["epochs"]))
    write_history(result.history, out / "history.csv")
    plot_history(result.history, out / "history.png")
    save_checkpoint(out / "supernet", net.state_dict(), {k: t.data for k, t in result.arch.named().items()}, run=r, seed=seed)
    print(f"winner\trun={r}\tseed={seed}\tval={val:.4f}\t{result.genotype}")
    return {"search_seconds": [round(x[3].seconds, 3) for x in runs]}


# --- retrain ----------------------------------------------------------------------


def cmd_retrain(cfg: dict, out: Path, genotype_path) -> dict:
    path = Path(genotype_path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read genotype file {path}: {exc.strerror}") from None
    genotype = Genotype.from_json(text)
    graph = build_graph(cfg)
    t = cfg["trainer"]
    best_hp, report, trials = tune(
        genotype,
        graph,
        trials=t["trials"],
        seed=cfg["seed"],
        repeats=t["repeats"],
        base=hyperparams(cfg),
        workers=_workers(cfg),
        leaky_scores=cfg["search"]["leaky_scores"],
    )
    doc = {"genotype": genotype.to_dict(), "hyperparams": best_hp.to_dict(), **report.to_dict()}
    _write_json(out / "report.json", doc)
    with open(out / "tuning.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["trial", "hyperparams_json", "val_metric"])
        for i, (hp, val) in enumerate(trials):
            w.writerow([i, json.dumps(hp.to_dict(), sort_keys=True), repr(val)])
    print(f"{report.metric}\tmean={report.mean:.4f}\tstd={report.std:.4f}\t" + ",".join(f"{v:.4f}" for v in report.values))
    return {}


# --- baselines ----------------------------------------------------------------------


def _trial_baseline(kind: str, cfg: dict, out: Path) -> dict:
    graph = build_graph(cfg)
    b = cfg["baseline"]
    hp = trial_hyperparams(cfg)
    K = cfg["search"]["K"]
    start = time.perf_counter()
    if kind == "random":
        best, records = random_search(graph, b["budget"], hp, cfg["seed"], K, _workers(cfg))
    else:
        best, records = mlp_search(graph, b["mlp_budget"], hp, cfg["seed"], K, _workers(cfg))
    search_seconds = time.perf_counter() - start
    write_trials(records, out / "trials.csv")
    plot_trials(records, out / "trials.png")
    report = repeat_eval(
        best.genotype, graph, hyperparams(cfg), b["repeats"], cfg["seed"], _workers(cfg), cfg["search"]["leaky_scores"], best.mlp
    )
    doc = {
        "best_trial": best.index,
        "architecture": best.describe(),
        "val_metric": best.val_metric,
        "trial_test_metric": best.test_metric,
        "search_seconds": search_seconds,
        "report": report.to_dict(),
    }
    _write_json(out / "best.json", doc)
    print(f"best\ttrial={best.index}\tval={best.val_metric:.4f}\ttest_mean={report.mean:.4f}\tstd={report.std:.4f}")
    return {"search_seconds": round(search_seconds, 3)}


def sweep_point(graph, cfg: dict, epsilon: float, K: int, seed: int) -> tuple[Genotype, float]:
    """Search at (epsilon, K), then one default-hyperparameter retrain of the result."""
    _, result = run_search(graph, search_config(cfg, seed, epsilon=epsilon, K=K))
    res = _fit(result.genotype, graph, hyperparams(cfg), seed, cfg["search"]["leaky_scores"])
    return result.genotype, evaluate(res.model, graph, "test")


def _sweep(cfg: dict, out: Path, name: str, values) -> dict:
    graph = build_graph(cfg)
    b = cfg["baseline"]
    seeds = [cfg["seed"] + r for r in range(b["repeats"])]
    rows = []
    for v in values:
        eps, K = (v, cfg["search"]["K"]) if name == "epsilon" else (0.0, v)
        points = [sweep_point(graph, cfg, eps, K, s) for s in seeds]
        tests = [p[1] for p in points]
        std = float(np.std(tests, ddof=1)) if len(tests) > 1 else 0.0
        rows.append((v, float(np.mean(tests)), std, tests, [str(p[0]) for p in points]))
        print(f"{name}={v}\tmean={rows[-1][1]:.4f}\tstd={std:.4f}")
    with open(out / f"{name}_sweep.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([name, "mean_test", "std_test", "values", "genotypes"])
        for v, mean, std, tests, genos in rows:
            w.writerow([v, repr(mean), repr(std), json.dumps(tests), json.dumps(genos)])
    label = "epsilon" if name == "epsilon" else "K (layers)"
    plot_sweep([r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows], label, out / f"{name}_sweep.png")
    return {}


def cmd_baseline(kind: str, cfg: dict, out: Path, k_sweep: bool = False) -> dict:
    if kind not in ("random", "mlp", "epsilon"):
        raise UsageError(f"unknown baseline kind {kind!r} (choose random, mlp or epsilon)")
    if k_sweep:
        if kind != "epsilon":
            raise UsageError("--k-sweep applies to the epsilon kind only")
        return _sweep(cfg, out, "K", cfg["baseline"]["k_values"])
    if kind == "epsilon":
        return _sweep(cfg, out, "epsilon", cfg["baseline"]["epsilons"])
    return _trial_baseline(kind, cfg, out)


def cmd_enumerate(K: int) -> int:
    size = enumerate_space_size(K)
    print(size)
    return size


# --- entry point ----------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sane", description="Differentiable search of GNN aggregators.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--set", action="append", default=[], metavar="KEY.PATH=VALUE", help="override a config value")
        sp.add_argument("--out", help="output directory (default: config output_dir)")
        sp.add_argument("--workers", type=int, help="parallel trial workers (default: available cores)")

    common(sub.add_parser("search", help="run the supernet search several times and keep the best genotype"))
    rt = sub.add_parser("retrain", help="tune and retrain a genotype, report test metric over repeats")
    rt.add_argument("genotype")
    common(rt)
    bl = sub.add_parser("baseline", help="random or MLP-aggregator search, or epsilon / K sweeps")
    bl.add_argument("kind")
    bl.add_argument("--k-sweep", action="store_true", help="sweep the number of layers instead of epsilon")
    common(bl)
    en = sub.add_parser("enumerate", help="print the size of the K-layer search space")
    en.add_argument("K", type=int)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "enumerate":
            cmd_enumerate(args.K)
            return EXIT_OK
        overrides = list(args.set)
        if args.workers is not None:
            overrides.append(f"workers={args.workers}")
        cfg = load_config(args.config, overrides)
        out = _out_dir(cfg, args)
        write_resolved(cfg, out)
        start = time.perf_counter()
        if args.command == "search":
            extra = cmd_search(cfg, out)
        elif args.command == "retrain":
            extra = cmd_retrain(cfg, out, args.genotype)
        else:
            extra = cmd_baseline(args.kind, cfg, out, args.k_sweep)
        info = {"version": __version__, "command": args.command, "seconds": round(time.perf_counter() - start, 3), **extra}
        _write_json(out / "run_info.json", info)
        return EXIT_OK
    except (ConfigError, GenotypeError, BundleError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        if args.command == "enumerate":
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime exit code
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
