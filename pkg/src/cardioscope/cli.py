"""``cardioscope`` command-line workbench.

Every command writes its outputs plus ``config.json`` (the fully resolved
configuration and the package version) under ``--out``. Failures print one
JSON line ``{"error": <code>, "message": ...}`` to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import CardioscopeError, ConfigInvalid, DataMissing, UnknownCommand

log = logging.getLogger("cardioscope")

DATA_ENV = "CARDIOSCOPE_DATA_DIR"
CONFIG_SCHEMA = 1
DOWNLOAD_HINT = (
    "Download the PhysioNet/CinC 2016 heart sound training set "
    "(training-a ... training-f, each with REFERENCE.csv and .wav files) into "
    f"one directory and pass it with --data-dir or ${DATA_ENV}."
)
TRAINING_COMMANDS = {"balance", "train-ml", "train-dl", "train-ssl", "anomaly-grid", "sweep"}


# ---------------------------------------------------------------------------
# config plumbing

def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigInvalid(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigInvalid("config file must hold a JSON object")
    schema = doc.pop("schema", CONFIG_SCHEMA)
    if schema != CONFIG_SCHEMA:
        raise ConfigInvalid(f"unsupported config schema {schema!r}")
    return doc


def resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < explicit flags."""
    cfg = dict(defaults)
    cfg.update(_load_config(getattr(args, "config", None)))
    for k, v in vars(args).items():
        if k in ("config", "func", "command") or v is None:
            continue
        cfg[k] = v
    return cfg


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_resolved(out: Path, command: str, cfg: dict) -> None:
    doc = {"schema": CONFIG_SCHEMA, "command": command, "version": f"cardioscope {__version__}",
           "config": {k: v for k, v in sorted(cfg.items())}}
    with open(out / "config.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _data_dir(cfg: dict) -> Path:
    root = cfg.get("data_dir") or os.environ.get(DATA_ENV)
    if not root or not Path(root).is_dir():
        raise DataMissing(f"dataset directory not found ({root or 'unset'}). {DOWNLOAD_HINT}")
    return Path(root)


def _parse_int_list(text) -> list[int]:
    if isinstance(text, list):
        return [int(v) for v in text]
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigInvalid(f"expected comma-separated integers, got {text!r}") from None


def _load_table_split(cfg: dict):
    """Feature table plus (train, val, test) index arrays."""
    from .features import read_feature_csv
    from .signal_io import DatasetManifest, Label, ManifestEntry, SplitSpec, split_dataset
    if not cfg.get("features"):
        raise ConfigInvalid("--features is required")
    table = read_feature_csv(cfg["features"])
    if cfg.get("split"):
        spec = SplitSpec.from_json(Path(cfg["split"]).read_text())
    else:
        entries = [ManifestEntry(i, "", None, Label.from_code(int(l)))
                   for i, l in zip(table.ids, table.labels)]
        spec = split_dataset(DatasetManifest(entries), seed=int(cfg.get("seed", 0)))
    pos = {i: k for k, i in enumerate(table.ids)}
    missing = [i for i in spec.train_ids + spec.val_ids + spec.test_ids if i not in pos]
    if missing:
        raise ConfigInvalid(f"{len(missing)} split ids are absent from the feature table")
    # unlabelled recordings carry no target for supervised training or scoring
    idx = tuple(np.array([pos[i] for i in ids if table.labels[pos[i]] >= 0], dtype=np.int64)
                for ids in (spec.train_ids, spec.val_ids, spec.test_ids))
    return table, idx


# ---------------------------------------------------------------------------
# commands

def cmd_ingest(cfg: dict) -> dict:
    from .signal_io import build_manifest, split_dataset
    root = _data_dir(cfg)
    out = _out_dir(cfg)
    manifest = build_manifest(root)
    if len(manifest) == 0:
        raise DataMissing(f"no labelled recordings under {root}. {DOWNLOAD_HINT}")
    (out / "manifest.json").write_text(manifest.to_json())
    seed = int(cfg["seed"])
    full = split_dataset(manifest, seed=seed)
    (out / "split.json").write_text(full.to_json())
    result = {"records": len(manifest), "split": list(full.sizes)}
    sub = manifest.filter(subset="E")
    if len(sub):
        se = split_dataset(sub, seed=seed)
        (out / "split_E.json").write_text(se.to_json())
        result["split_E"] = list(se.sizes)
    return result


def cmd_extract_features(cfg: dict) -> dict:
    from .features import extract_all, write_feature_csv
    from .signal_io import DatasetManifest, build_manifest, load_records
    root = _data_dir(cfg)
    out = _out_dir(cfg)
    if cfg.get("manifest"):
        manifest = DatasetManifest.from_json(Path(cfg["manifest"]).read_text())
    else:
        manifest = build_manifest(root)
    if cfg.get("subset"):
        manifest = manifest.filter(subset=cfg["subset"])
    table = extract_all(load_records(manifest, root))
    write_feature_csv(out / "features.csv", table.ids, table.labels, table.X)
    return {"rows": len(table.ids)}


def cmd_balance(cfg: dict) -> dict:
    from .balancing import smote
    from .features import read_feature_csv, write_feature_csv
    out = _out_dir(cfg)
    table = read_feature_csv(cfg["features"])
    keep = np.flatnonzero(table.labels >= 0)
    bal = smote(table.X[keep], table.labels[keep], k=int(cfg.get("k", 5)), seed=int(cfg["seed"]))
    n_syn = int(bal.synthetic.sum())
    ids = [table.ids[i] for i in keep] + [f"smote-{i:05d}" for i in range(n_syn)]
    write_feature_csv(out / "balanced.csv", ids, bal.y, bal.X, synthetic=bal.synthetic)
    return {"rows": len(ids), "synthetic": n_syn}


def _report_row(method: str, scores, y, threshold: float) -> dict:
    from .evaluation import evaluate
    rep = evaluate(scores, y, threshold)
    return {"method": method, **rep.row(), "auroc": rep.auroc}


def cmd_train_ml(cfg: dict) -> dict:
    from .balancing import smote
    from .classical import build_model, model_to_dict, preset
    from .evaluation import SUPERVISED_COLUMNS, write_csv
    out = _out_dir(cfg)
    seed = int(cfg["seed"])
    if cfg.get("preset"):
        kind, use_smote, params = preset(cfg["preset"])
    elif cfg.get("model"):
        kind, use_smote, params = cfg["model"], bool(cfg.get("smote", False)), {}
    else:
        raise ConfigInvalid("choose --preset or --model")
    params.update(cfg.get("params") or {})
    cfg["resolved_params"] = params
    cfg["resolved_smote"] = use_smote
    table, (tr, va, te) = _load_table_split(cfg)
    X, y = table.X[tr], table.labels[tr]
    if use_smote:
        bal = smote(X, y, seed=seed)
        X, y = bal.X, bal.y
    model = build_model(kind, params, seed).fit(X, y)
    threshold = 0.0 if kind == "svm" else 0.5
    score = model.decision_function if kind == "svm" else model.predict_proba
    name = cfg.get("preset") or kind
    rows = []
    for split_name, idx in (("val", va), ("test", te)):
        if len(idx):
            rows.append(_report_row(f"{name}:{split_name}", score(table.X[idx]),
                                    table.labels[idx], threshold))
    write_csv(out / "report.csv", SUPERVISED_COLUMNS + ("auroc",), rows)
    with open(out / "model.json", "w") as fh:
        json.dump(model_to_dict(kind, model), fh)
    return {"rows": rows}


def cmd_train_dl(cfg: dict) -> dict:
    from .balancing import smote
    from .deep_models import (Standardizer, TrainConfig, autoencoder_to_dict, build_autoencoder,
                              build_cnn1d, build_dense_nn, predict_proba, train_autoencoder,
                              train_supervised, write_history)
    from .evaluation import SUPERVISED_COLUMNS, write_csv
    from .nn import save_network
    out = _out_dir(cfg)
    seed = int(cfg["seed"])
    kind = cfg.get("model", "dense")
    tc = TrainConfig(epochs=int(cfg.get("epochs", 100)), batch=int(cfg.get("batch", 32)),
                     lr=float(cfg.get("lr", 1e-3)), seed=seed)
    table, (tr, va, te) = _load_table_split(cfg)
    std = Standardizer.fit(table.X[tr])
    Xs = std.transform(table.X)
    rng = np.random.default_rng(seed)
    if kind == "autoencoder":
        ae = build_autoencoder(rng)
        normal = tr[table.labels[tr] == 0] if cfg.get("normal_only", True) else tr
        res = train_autoencoder(ae, Xs[normal], tc, X_val=Xs[va] if len(va) else None)
        write_history(out / "history.csv", res.history, ("epoch", "train_loss", "val_loss"))
        with open(out / "checkpoint.json", "w") as fh:
            json.dump(autoencoder_to_dict(ae, std.to_dict()), fh)
        return {"final_loss": res.history[-1]["train_loss"]}
    builders = {"dense": build_dense_nn, "cnn1d": build_cnn1d}
    if kind not in builders:
        raise ConfigInvalid(f"unknown model {kind!r}; choose dense, cnn1d or autoencoder")
    net = builders[kind](rng)
    X, y = Xs[tr], table.labels[tr]
    if cfg.get("smote", True):
        bal = smote(X, y, seed=seed)
        X, y = bal.X, bal.y
    res = train_supervised(net, X, y, Xs[va], table.labels[va], tc)
    write_history(out / "history.csv", res.history)
    save_network(net, out / "checkpoint.json", norm_stats=std.to_dict())
    rows = [_report_row(f"{kind}:test", predict_proba(net, Xs[te]), table.labels[te], 0.5)]
    write_csv(out / "report.csv", SUPERVISED_COLUMNS + ("auroc",), rows)
    return {"best_epoch": res.best_epoch, "rows": rows}


def _ssl_data(cfg: dict):
    """(X_train, y_train, X_test, y_test) from the synthetic task or from
    subset-E recordings."""
    if cfg.get("synthetic", False):
        from .ssl_gan import DESK_ARCH
        from .synthetic import ToneTask
        task = ToneTask(length=DESK_ARCH.input_length)
        rng = np.random.default_rng([int(cfg["seed"]), 7])
        Xu, yu = task.sample(int(cfg.get("n_unlabelled", 2000)), rng)
        Xt, yt = task.sample(int(cfg.get("n_test", 500)), rng)
        return Xu, yu, Xt, yt, DESK_ARCH
    from .signal_io import build_manifest, load_records, split_dataset
    from .ssl_gan import GanArch, prepare_gan_input
    root = _data_dir(cfg)
    manifest = build_manifest(root).filter(subset="E")
    spec = split_dataset(manifest, seed=int(cfg["seed"]))
    labels = manifest.label_of()

    def load(ids):
        recs = load_records(manifest, root, ids)
        return (np.stack([prepare_gan_input(r)[0] for r in recs]),
                np.array([labels[r.id].code for r in recs], dtype=np.int64))
    Xtr, ytr = load(spec.train_ids)
    Xte, yte = load(spec.test_ids)
    return Xtr, ytr, Xte, yte, GanArch()


def _gan_config(cfg: dict, arch):
    from .ssl_gan import GanConfig
    return GanConfig(epochs=int(cfg.get("epochs", 4)), batch=int(cfg.get("batch", 16)),
                     lr_d=float(cfg.get("lr_d", 2e-4)), lr_g=float(cfg.get("lr_g", 2e-4)),
                     seed=int(cfg["seed"]), steps_per_epoch=cfg.get("steps_per_epoch", 80),
                     arch=arch)


def cmd_train_ssl(cfg: dict) -> dict:
    from .evaluation import auroc, stratified_subsample, write_csv
    from .ssl_gan import classify, train_ssl_gan
    out = _out_dir(cfg)
    Xtr, ytr, Xte, yte, arch = _ssl_data(cfg)
    count = int(cfg.get("count", 8))
    seed = int(cfg["seed"])
    idx = stratified_subsample(ytr, count, np.random.default_rng([seed, count]))
    gc = _gan_config(cfg, arch)
    res = train_ssl_gan(Xtr[idx], ytr[idx], Xtr, gc)
    a = auroc(classify(res.discriminator, Xte), yte)
    cols = ("epoch", "supervised", "unsup_real", "unsup_fake", "generator_fm")
    write_csv(out / "history.csv", cols, res.history)
    with open(out / "discriminator.json", "w") as fh:
        json.dump(res.discriminator.to_dict(), fh)
    return {"labelled_count": count, "auroc": a}


def _sweep_point(job):
    """One (count, seed) pair for both arms; top level so it pickles."""
    cfg, count, seed = job
    from .evaluation import SweepRow, auroc, stratified_subsample
    from .ssl_gan import gan_arm
    Xtr, ytr, Xte, yte, arch = _ssl_data({**cfg, "seed": cfg["seed"]})
    gc = _gan_config(cfg, arch)
    idx = stratified_subsample(ytr, count, np.random.default_rng([seed, count]))
    rows = []
    for name, uns in (("ssl_gan", True), ("supervised", False)):
        scorer = gan_arm(Xtr, gc, unsupervised=uns)(idx, ytr[idx], seed)
        rows.append(SweepRow(count, seed, name, auroc(scorer(Xte), yte)))
    return rows


def cmd_sweep(cfg: dict) -> dict:
    from .evaluation import (SWEEP_COLUMNS, mean_curves, render_line_plot, sweep_rows_to_dicts,
                             write_csv)
    out = _out_dir(cfg)
    grid = _parse_int_list(cfg.get("grid", "4,8,16,32"))
    n_seeds = int(cfg.get("seeds", 5))
    jobs = [(cfg, c, s) for c in grid for s in range(n_seeds)]
    n_jobs = int(cfg.get("jobs", 1))
    if n_jobs > 1:
        with ProcessPoolExecutor(n_jobs) as ex:
            parts = list(ex.map(_sweep_point, jobs))
    else:
        parts = [_sweep_point(j) for j in jobs]
    rows = sorted((r for p in parts for r in p), key=lambda r: (r.labelled_count, r.seed, r.arm))
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, sweep_rows_to_dicts(rows))
    (out / "sweep.svg").write_text(render_line_plot(rows))
    return {"rows": len(rows), "means": mean_curves(rows)}


def _anomaly_inputs(cfg: dict):
    if cfg.get("synthetic", False):
        from .synthetic import anomaly_features
        rng = np.random.default_rng([int(cfg["seed"]), 11])
        Xtr, ytr = anomaly_features(900, 110, rng)
        Xte, yte = anomaly_features(300, 30, rng)
        return Xtr, ytr, Xte, yte
    if not cfg.get("features"):
        raise ConfigInvalid("pass --features or --synthetic")
    table, (tr, va, te) = _load_table_split(cfg)
    return table.X[tr], table.labels[tr], table.X[te], table.labels[te]


def _grid_job(job):
    cfg, ae_training = job
    from .anomaly_pipeline import GridConfig, run_grid
    from .deep_models import TrainConfig
    Xtr, ytr, Xte, yte = _anomaly_inputs(cfg)
    gc = GridConfig(ae=TrainConfig(epochs=int(cfg.get("epochs", 30)), batch=32,
                                   lr=float(cfg.get("lr", 1e-3)), seed=int(cfg["seed"])),
                    contamination_rate=float(cfg.get("contamination", 0.10)),
                    seed=int(cfg["seed"]))
    return run_grid(Xtr, ytr, Xte, yte, ae_training, gc)


def cmd_anomaly_grid(cfg: dict) -> dict:
    from .anomaly_pipeline import AE_TRAINING
    from .evaluation import ANOMALY_COLUMNS, write_csv
    out = _out_dir(cfg)
    which = cfg.get("ae_training", "both")
    conds = list(AE_TRAINING) if which == "both" else [which]
    jobs = [(cfg, c) for c in conds]
    n_jobs = int(cfg.get("jobs", 1))
    if n_jobs > 1:
        with ProcessPoolExecutor(n_jobs) as ex:
            parts = list(ex.map(_grid_job, jobs))
    else:
        parts = [_grid_job(j) for j in jobs]
    summary = {}
    for cond, rows in zip(conds, parts):
        write_csv(out / f"anomaly_{cond}.csv", ANOMALY_COLUMNS + ("error",),
                  [r.as_dict() for r in rows])
        summary[cond] = [[r.detector, r.features, r.labels, r.auroc] for r in rows]
    return summary


def cmd_evaluate(cfg: dict) -> dict:
    """Metrics for a predictions CSV with ``label`` and ``score`` columns."""
    from .evaluation import SUPERVISED_COLUMNS, read_csv, write_csv
    out = _out_dir(cfg)
    if not cfg.get("predictions"):
        raise ConfigInvalid("--predictions is required")
    rows = read_csv(cfg["predictions"])
    if not rows or "label" not in rows[0] or "score" not in rows[0]:
        raise ConfigInvalid("predictions CSV needs 'label' and 'score' columns")
    y = np.array([int(r["label"]) for r in rows])
    s = np.array([float(r["score"]) for r in rows])
    row = _report_row(cfg.get("method", "predictions"), s, y, float(cfg.get("threshold", 0.5)))
    write_csv(out / "report.csv", SUPERVISED_COLUMNS + ("auroc",), [row])
    return row


def cmd_selftest(cfg: dict) -> dict:
    from .selftest import run_all
    results = run_all()
    for r in results:
        print(f"{r.name}: {r.passed}/{r.total} passed", flush=True)
        for f in r.failures:
            print(f"  FAILED {f}")
    if not all(r.ok for r in results):
        raise CardioscopeError("self-test failures")
    return {r.name: [r.passed, r.total] for r in results}


COMMANDS = {
    "ingest": cmd_ingest, "extract-features": cmd_extract_features, "balance": cmd_balance,
    "train-ml": cmd_train_ml, "train-dl": cmd_train_dl, "train-ssl": cmd_train_ssl,
    "anomaly-grid": cmd_anomaly_grid, "evaluate": cmd_evaluate, "sweep": cmd_sweep,
    "selftest": cmd_selftest,
}


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cardioscope", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"cardioscope {__version__}")
    sub = p.add_subparsers(dest="command")

    def add(name, help_text, seed_required=False):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="JSON config file; flags override its values")
        sp.add_argument("--out", help="output directory (default: current directory)")
        sp.add_argument("--seed", type=int, required=seed_required)
        sp.add_argument("-v", "--verbose", action="store_true", default=None)
        return sp

    sp = add("ingest", "build manifest and stratified splits")
    sp.add_argument("--data-dir")
    sp = add("extract-features", "write the 193-feature CSV")
    sp.add_argument("--data-dir")
    sp.add_argument("--manifest")
    sp.add_argument("--subset")
    sp = add("balance", "SMOTE-balance a feature CSV", True)
    sp.add_argument("--features", required=True)
    sp.add_argument("--k", type=int)
    sp = add("train-ml", "train a classical model", True)
    sp.add_argument("--features", required=True)
    sp.add_argument("--split")
    sp.add_argument("--preset")
    sp.add_argument("--model", choices=["tree", "svm", "forest", "boosting"])
    sp.add_argument("--params", type=json.loads, help="JSON object of hyperparameters")
    sp = add("train-dl", "train the dense NN, 1-d CNN or autoencoder", True)
    sp.add_argument("--features", required=True)
    sp.add_argument("--split")
    sp.add_argument("--model", choices=["dense", "cnn1d", "autoencoder"])
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--batch", type=int)
    sp.add_argument("--lr", type=float)
    sp = add("train-ssl", "train the semi-supervised GAN", True)
    sp.add_argument("--data-dir")
    sp.add_argument("--synthetic", action="store_true", default=None)
    sp.add_argument("--count", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--steps-per-epoch", type=int)
    sp = add("anomaly-grid", "detector x features x contamination grid", True)
    sp.add_argument("--features")
    sp.add_argument("--split")
    sp.add_argument("--synthetic", action="store_true", default=None)
    sp.add_argument("--ae-training", choices=["normal_only", "entire_data", "both"])
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--jobs", type=int)
    sp = add("evaluate", "metrics for a predictions CSV")
    sp.add_argument("--predictions")
    sp.add_argument("--threshold", type=float)
    sp = add("sweep", "AUROC vs labelled count, supervised vs semi-supervised", True)
    sp.add_argument("--data-dir")
    sp.add_argument("--synthetic", action="store_true", default=None)
    sp.add_argument("--grid")
    sp.add_argument("--seeds", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--steps-per-epoch", type=int)
    sp.add_argument("--jobs", type=int)
    add("selftest", "run the built-in verification suites")
    return p


def _error_line(exc: CardioscopeError) -> str:
    return json.dumps({"error": exc.code, "message": str(exc)})


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if argv and not argv[0].startswith("-") and argv[0] not in COMMANDS:
        print(_error_line(UnknownCommand(f"unknown command {argv[0]!r}")), file=sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not args.command:
        parser.print_help()
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    defaults = {"seed": 0} if args.command not in TRAINING_COMMANDS else {}
    try:
        cfg = resolve(args, defaults)
        out = _out_dir(cfg)
        result = COMMANDS[args.command](cfg)
        write_resolved(out, args.command, cfg)
    except CardioscopeError as exc:
        print(_error_line(exc), file=sys.stderr)
        return 3 if isinstance(exc, DataMissing) else 2 if isinstance(exc, ConfigInvalid) else 1
    print(json.dumps({"command": args.command, "result": result}, default=str, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
