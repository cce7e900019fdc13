"""Command-line entry point: ``kantsc <train|attack|lipschitz|ablate|report|gradcheck|make-cbf>``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .core import CheckpointError, ConfigError, DataError, KantscError
from .data import data_root, dataset_names, load_dataset, make_cbf, write_ucr_dataset
from .evalstats import accuracy, friedman_ranks, histogram, macro_f1, pairwise_geq_counts, quantiles, weighted_f1
from .models import SHORT_NAMES, ModelConfig, build_model, last_layer_components, resolve_arch
from .robust import PAPER_EPS, AttackConfig, LipschitzConfig, attack_success_rate, lipschitz_dataset_summary
from .train import TrainConfig, train

log = logging.getLogger("kantsc")


# ---------------------------------------------------------------- helpers

def write_csv(path: Path, rows: list[dict], fields: list[str] | None = None) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = fields or (list(rows[0]) if rows else [])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def read_csv(path: Path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer, np.floating)):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(type(o))


def run_label(arch: str, grid: int = 5, use_base: bool = True, use_spline: bool = True) -> str:
    label = SHORT_NAMES[resolve_arch(arch)]
    if grid != 5:
        label += f"_g{grid}"
    if not use_base:
        label += "_nobase"
    if not use_spline:
        label += "_nospline"
    return label


def _datasets(args) -> list[str]:
    if args.dataset in (None, ""):
        raise ConfigError("--dataset is required")
    if args.dataset == "all":
        return dataset_names(data_root(args.data))
    return [d for d in args.dataset.split(",") if d]


def _map_cells(fn, cells: list, jobs: int) -> list:
    if jobs <= 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, cells))


def _train_cfg(a: dict) -> TrainConfig:
    return TrainConfig(epochs=a["epochs"], lr0=a["lr"], lr_decay=a["lr_decay"], decay_every=a["decay_every"],
                       weight_decay=a["weight_decay"], l1_coeff=a["l1"], entropy_coeff=a["entropy"],
                       batch_size=a["batch_size"], seed=a["seed"], eval_every=a["eval_every"])


# ---------------------------------------------------------------- train

def train_cell(a: dict) -> dict:
    """Train one (dataset, arch, seed) cell and write its run directory."""
    ds = load_dataset(data_root(a["data"]), a["dataset"])
    mcfg = ModelConfig(a["arch"], ds.d, ds.m, grid_size=a["grid"], spline_order=a["order"],
                       use_base=not a["no_base"], use_spline=not a["no_spline"], dropout=a["dropout"], seed=a["seed"])
    label = run_label(mcfg.arch, mcfg.grid_size, mcfg.use_base, mcfg.use_spline)
    out = Path(a["out"]) / f"{ds.name}_{label}_s{a['seed']}"
    model = build_model(mcfg)
    tcfg = _train_cfg(a)
    model, hist = train(model, ds, tcfg)

    write_json(out / "config.json", {**a, "model_config": mcfg.to_dict(), "train_config": tcfg.to_dict()})
    save_checkpoint(out / "model.ckpt", model, {"dataset": ds.name, "label": label, "seed": a["seed"],
                                                "epoch": tcfg.epochs, "label_map": {str(k): v for k, v in ds.label_map.items()}})
    write_csv(out / "history.csv", [dict(epoch=e, lr=lr, train_loss=l, train_acc=tr, test_acc=te)
                                    for e, lr, l, tr, te in hist.rows()],
              ["epoch", "lr", "train_loss", "train_acc", "test_acc"])
    pred = model.predict(ds.x_test)
    row = {"dataset": ds.name, "model": label, "seed": a["seed"],
           "accuracy": accuracy(pred, ds.y_test), "macro_f1": macro_f1(pred, ds.y_test, ds.m),
           "weighted_f1": weighted_f1(pred, ds.y_test, ds.m),
           "train_accuracy": accuracy(model.predict(ds.x_train), ds.y_train),
           "best_test_accuracy": hist.best_test_acc, "epochs": tcfg.epochs}
    write_csv(out / "metrics.csv", [row])
    log.info("%s %s seed %d: acc %.4f f1 %.4f", ds.name, label, a["seed"], row["accuracy"], row["macro_f1"])
    return row


def cmd_train(args) -> int:
    base = vars(args).copy()
    cells = [{**base, "dataset": name} for name in _datasets(args)]
    for c in cells:
        c.pop("func", None)
    rows = _map_cells(train_cell, cells, args.jobs)
    for r in rows:
        print(f"{r['dataset']}\t{r['model']}\tseed={r['seed']}\tacc={r['accuracy']:.4f}\tmacro_f1={r['macro_f1']:.4f}")
    return 0


# ---------------------------------------------------------------- attack / lipschitz

def _load_for_eval(ckpt: str, args):
    model, manifest = load_checkpoint(ckpt)
    name = manifest.get("dataset") if args.dataset in (None, "", "all") else args.dataset
    if not name:
        raise ConfigError(f"{ckpt}: checkpoint names no dataset; pass --dataset")
    ds = load_dataset(data_root(args.data), name)
    if ds.d != model.config.d or ds.m != model.config.m:
        raise CheckpointError(f"{ckpt}: model expects d={model.config.d}, m={model.config.m} "
                              f"but {name} has d={ds.d}, m={ds.m}")
    return model, manifest, ds


def cmd_attack(args) -> int:
    for ckpt in args.ckpt:
        model, manifest, ds = _load_for_eval(ckpt, args)
        label = manifest.get("label", "model")
        rows = []
        for eps in args.eps:
            cfg = AttackConfig(eps, alpha=args.alpha_frac * eps, iters=args.iters, random_start=args.random_start,
                               seed=args.seed)
            _, rep = attack_success_rate(model, ds, cfg, denominator=args.asr_denominator)
            rows.append(rep.row(ds.name, label))
            print(f"{ds.name}\t{label}\teps={eps}\tasr={rep.asr:.4f}\t({rep.n_success}/{rep.n_correct_before})")
        asrs = [r["asr"] for r in rows]
        for lo_eps, lo, hi_eps, hi in zip(args.eps, asrs, args.eps[1:], asrs[1:]):
            if hi_eps > lo_eps and hi < lo - 0.02:
                log.warning("%s %s: ASR drops from %.3f (eps=%g) to %.3f (eps=%g)", ds.name, label, lo, lo_eps, hi, hi_eps)
        out = _eval_dir(ckpt, args, "attack")
        write_csv(out / "asr.csv", rows, ["dataset", "model", "eps", "n_eval", "n_correct_before", "n_success", "asr"])
        write_json(out / "config.json", {**_provenance(args), "ckpt": ckpt})
    return 0


def _provenance(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def _eval_dir(ckpt: str, args, kind: str) -> Path:
    """``<run dir>/<kind>`` by default, ``<out>/<run dir name>`` when --out is given."""
    run_dir = Path(ckpt).parent
    return Path(args.out) / run_dir.name if args.out else run_dir / kind


def _lip_cfg(args) -> LipschitzConfig:
    return LipschitzConfig(radius=args.radius, n_starts=args.n_starts, ascent_steps=args.ascent_steps,
                           ascent_lr=args.ascent_lr, seed=args.seed)


def _lipschitz_one(ckpt: str, args) -> tuple[str, str, object]:
    model, manifest, ds = _load_for_eval(ckpt, args)
    label = manifest.get("label", "model")
    summary = lipschitz_dataset_summary(model, ds, _lip_cfg(args), max_points=args.max_points)
    out = _eval_dir(ckpt, args, "lipschitz")
    write_csv(out / "lipschitz.csv", [{"dataset": ds.name, "model": label, "index": int(i), "estimate": float(e)}
                                      for i, e in zip(summary.indices, summary.estimates)])
    write_csv(out / "lipschitz_summary.csv", [{"dataset": ds.name, "model": label, "n": len(summary.estimates),
                                               "q1": summary.q1, "median": summary.median, "q3": summary.q3}])
    write_json(out / "config.json", {**_provenance(args), "ckpt": ckpt})
    print(f"{ds.name}\t{label}\tmedian={summary.median:.6g}\tq1={summary.q1:.6g}\tq3={summary.q3:.6g}")
    return ds.name, label, summary


def cmd_lipschitz(args) -> int:
    first = [_lipschitz_one(c, args) for c in args.ckpt]
    if args.diff_ckpt:
        second = {name: (label, s) for name, label, s in (_lipschitz_one(c, args) for c in args.diff_ckpt)}
        rows = []
        for name, label, s in first:
            if name not in second:
                raise DataError(f"--diff-ckpt has no checkpoint for dataset {name}")
            label_b, sb = second[name]
            rows.append({"dataset": name, "model_a": label, "model_b": label_b, "median_a": s.median,
                         "median_b": sb.median, "diff": s.median - sb.median})
        out = Path(args.out) if args.out else Path(".")
        write_csv(out / "lipschitz_diff.csv", rows)
        write_json(out / "config.json", _provenance(args))
    return 0


# ---------------------------------------------------------------- ablate

ABLATION_COMPONENTS = {"full": (True, True), "nobase": (False, True), "nospline": (True, False)}
COMPONENT_TITLES = {"full": "w/ base & spline", "nobase": "w/o base", "nospline": "w/o spline"}


def _component_hist(model, x, bins: int) -> dict:
    base, spline = last_layer_components(model, x)
    both = np.concatenate([base, spline])
    rng = (float(both.min()), float(both.max()))
    out = {}
    for key, v in (("base", base), ("spline", spline)):
        edges, counts = histogram(v, bins, rng)
        out[key] = {"edges": edges, "counts": counts, "n": int(v.size)}
    return out


def ablate_cell(a: dict) -> list[dict]:
    ds = load_dataset(data_root(a["data"]), a["dataset"])
    out = Path(a["out"]) / f"ablate_{ds.name}_s{a['seed']}"
    rows, hists = [], {}
    for comp in a["components"]:
        use_base, use_spline = ABLATION_COMPONENTS[comp]
        grids = a["grids"] if use_spline else [a["grids"][0]]
        for g in grids:
            mcfg = ModelConfig("KAN", ds.d, ds.m, grid_size=g, use_base=use_base, use_spline=use_spline,
                               dropout=a["dropout"], seed=a["seed"])
            model, _ = train(build_model(mcfg), ds, _train_cfg(a))
            grid_field = str(g) if use_spline else "-"
            key = f"{comp}_g{grid_field}"
            rows.append({"dataset": ds.name, "component": comp, "grid": grid_field, "seed": a["seed"],
                         "test_accuracy": accuracy(model.predict(ds.x_test), ds.y_test),
                         "train_accuracy": accuracy(model.predict(ds.x_train), ds.y_train)})
            hists[key] = {"train": _component_hist(model, ds.x_train, a["bins"]),
                          "test": _component_hist(model, ds.x_test, a["bins"])}
            log.info("%s %s: test %.4f", ds.name, key, rows[-1]["test_accuracy"])
    write_csv(out / "ablation.csv", rows)
    write_json(out / "histograms.json", hists)
    write_json(out / "config.json", a)
    return rows


def cmd_ablate(args) -> int:
    base = {k: v for k, v in vars(args).items() if k != "func"}
    unknown = set(args.components) - set(ABLATION_COMPONENTS)
    if unknown:
        raise ConfigError(f"unknown ablation components {sorted(unknown)}")
    cells = [{**base, "dataset": name} for name in _datasets(args)]
    rows = [r for rs in _map_cells(ablate_cell, cells, args.jobs) for r in rs]
    summary = []
    for comp in args.components:
        sub = [r for r in rows if r["component"] == comp]
        grids = sorted({r["grid"] for r in sub}, key=lambda g: (g == "-", int(g) if g != "-" else 0))
        acc = {g: {r["dataset"]: r["test_accuracy"] for r in sub if r["grid"] == g} for g in grids}
        names, geq = pairwise_geq_counts(acc)
        for i, g in enumerate(names):
            q1, q2, q3 = quantiles(list(acc[g].values()))
            row = {"component": COMPONENT_TITLES[comp], "grid": g}
            row.update({f"geq_g{c}": int(geq[i, j]) for j, c in enumerate(names)} if g != "-" else {})
            row.update({"Q1": q1, "Q2": q2, "Q3": q3, "n_datasets": len(acc[g])})
            summary.append(row)
    fields = ["component", "grid"] + [f"geq_g{g}" for g in args.grids] + ["Q1", "Q2", "Q3", "n_datasets"]
    out = Path(args.out) / f"ablation_s{args.seed}"
    write_csv(out / "ablation_summary.csv", summary, fields)
    write_json(out / "config.json", base)
    for r in rows:
        print(f"{r['dataset']}\t{COMPONENT_TITLES[r['component']]}\tG={r['grid']}\ttest={r['test_accuracy']:.4f}"
              f"\ttrain={r['train_accuracy']:.4f}")
    return 0


# ---------------------------------------------------------------- report

def cmd_report(args) -> int:
    root = Path(args.runs)
    f1_key = f"{args.f1}_f1"
    metric_rows = [r for p in sorted(root.rglob("metrics.csv")) for r in read_csv(p)]
    asr_rows = [r for p in sorted(root.rglob("asr.csv")) for r in read_csv(p)]
    if not metric_rows:
        raise DataError(f"{root}: no metrics.csv files found")

    cells: dict[tuple[str, str], dict[str, list[float]]] = {}
    for r in metric_rows:
        c = cells.setdefault((r["dataset"], r["model"]), {})
        for key in ("accuracy", f1_key):
            c.setdefault(key, []).append(float(r[key]))
    eps_values = sorted({float(r["eps"]) for r in asr_rows})
    for r in asr_rows:
        c = cells.setdefault((r["dataset"], r["model"]), {})
        c.setdefault(f"asr_eps{float(r['eps'])}", []).append(float(r["asr"]))

    datasets = sorted({d for d, _ in cells})
    models = sorted({m for _, m in cells})
    if len(models) < 2:
        raise ConfigError("report needs at least two models")
    metrics = [("accuracy", True), (f1_key, True)] + [(f"asr_eps{e}", False) for e in eps_values]

    table, summaries, missing = [], {}, []
    for d in datasets:
        for m in models:
            row = {"dataset": d, "model": m}
            for key, _ in metrics:
                vals = cells.get((d, m), {}).get(key)
                row[key] = float(np.mean(vals)) if vals else float("nan")
            table.append(row)
    for key, higher in metrics:
        have = [d for d in datasets if all(cells.get((d, m), {}).get(key) for m in models)]
        missing += [f"{key}: {d}/{m}" for d in datasets for m in models if not cells.get((d, m), {}).get(key)]
        if len(have) < 2:
            continue
        scores = np.array([[np.mean(cells[(d, m)][key]) for m in models] for d in have])
        scores = np.where(np.isnan(scores), -np.inf if higher else np.inf, scores)
        summaries[key] = {**friedman_ranks(scores, models, higher_is_better=higher).to_dict(), "datasets": have}
    if missing and not args.allow_missing:
        for m in missing:
            print(f"missing\t{m}", file=sys.stderr)
        raise DataError(f"{len(missing)} missing cells (use --allow-missing to rank the complete datasets only)")

    out = Path(args.out) if args.out else root
    write_csv(out / "metrics_table.csv", table, ["dataset", "model"] + [k for k, _ in metrics])
    write_json(out / "rank_summary.json", {"post_hoc": "nemenyi", "alpha": 0.05, "metrics": summaries})
    write_json(out / "config.json", _provenance(args))
    for key, s in summaries.items():
        ranks = ", ".join(f"{m}={r:.3f}" for m, r in s["mean_rank_lower_is_better"].items())
        print(f"{key}\tN={s['n_datasets']}\tCD={s['critical_difference']:.4f}\t{ranks}")
    return 0


# ---------------------------------------------------------------- gradcheck / make-cbf

def cmd_gradcheck(args) -> int:
    from .gradcheck import run_suite

    results = run_suite(seeds=range(args.seeds), tolerance=args.tolerance)
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        failed += not r.passed
        print(f"{status}\t{r.name}\tseed={r.seed}\tmax_rel_err={r.report.max_rel_error:.3e}\tworst={r.report.worst}")
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 4 if failed else 0


def cmd_make_cbf(args) -> int:
    root = data_root(args.data)
    path = write_ucr_dataset(root, make_cbf(args.n_train, args.n_test, args.length, seed=args.seed))
    print(path)
    return 0


# ---------------------------------------------------------------- parser

def _common(p: argparse.ArgumentParser, arch: bool = True) -> None:
    p.add_argument("--data", default=None, help="UCR2018 root (default: $KANTSC_DATA)")
    p.add_argument("--dataset", default=None, help="dataset name, comma list, or 'all'")
    if arch:
        p.add_argument("--arch", default="kan", help="kan | mlp1 | mlp2 (alias mlp_l) | kan_mlp | mlp_kan")
        p.add_argument("--grid", type=int, default=5)
        p.add_argument("--order", type=int, default=3)
        p.add_argument("--no-base", action="store_true")
        p.add_argument("--no-spline", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--config", default=None, help="JSON file of defaults; flags override it")


def _train_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--lr-decay", type=float, default=0.9)
    p.add_argument("--decay-every", type=int, default=25)
    p.add_argument("--weight-decay", type=float, default=1e-2)
    p.add_argument("--l1", type=float, default=0.0)
    p.add_argument("--entropy", type=float, default=1e-5)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--eval-every", type=int, default=25)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kantsc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model per dataset")
    _common(p)
    _train_opts(p)
    p.set_defaults(func=cmd_train, out="runs")

    p = sub.add_parser("attack", help="PGD attack success rates for checkpoints")
    _common(p, arch=False)
    p.add_argument("--ckpt", nargs="+", required=True)
    p.add_argument("--eps", type=float, nargs="+", default=list(PAPER_EPS))
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--alpha-frac", type=float, default=0.01, help="step size as a fraction of eps")
    p.add_argument("--random-start", action="store_true")
    p.add_argument("--asr-denominator", choices=["correct", "all"], default="correct")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("lipschitz", help="empirical local Lipschitz estimates")
    _common(p, arch=False)
    p.add_argument("--ckpt", nargs="+", required=True)
    p.add_argument("--diff-ckpt", nargs="+", default=None, help="second model per dataset; writes median differences")
    p.add_argument("--radius", type=float, default=0.5)
    p.add_argument("--n-starts", type=int, default=8)
    p.add_argument("--ascent-steps", type=int, default=20)
    p.add_argument("--ascent-lr", type=float, default=0.1)
    p.add_argument("--max-points", type=int, default=256)
    p.set_defaults(func=cmd_lipschitz)

    p = sub.add_parser("ablate", help="base/spline ablation over grid sizes")
    _common(p, arch=False)
    _train_opts(p)
    p.add_argument("--grids", type=int, nargs="+", default=[1, 5, 50])
    p.add_argument("--components", nargs="+", default=["full", "nobase", "nospline"])
    p.add_argument("--bins", type=int, default=50)
    p.set_defaults(func=cmd_ablate, out="runs")

    p = sub.add_parser("report", help="aggregate run directories into tables and rank summaries")
    p.add_argument("--runs", default="runs")
    p.add_argument("--out", default=None)
    p.add_argument("--allow-missing", action="store_true")
    p.add_argument("--f1", choices=["macro", "weighted"], default="macro", help="F1 averaging used for ranking")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks for every layer type")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("make-cbf", help="write a synthetic cylinder-bell-funnel dataset in UCR layout")
    p.add_argument("--data", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-train", type=int, default=30)
    p.add_argument("--n-test", type=int, default=900)
    p.add_argument("--length", type=int, default=128)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_make_cbf)
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as e:
            raise ConfigError(f"{args.config}: {e}") from None
        # re-parse with file values as defaults so explicit flags still win
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in file_cfg.items()})
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except KantscError as e:
        print(f"kantsc: error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
