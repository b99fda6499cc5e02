"""Command-line interface.

``tsidec generate`` writes a synthetic dataset, ``tsidec run`` runs the
clustering pipeline and writes the artifact bundle, ``tsidec baseline`` runs
DTW k-medoids.  Errors are reported as a JSON object on stderr with a
nonzero exit code.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, datagen, evaluation, report
from .io import ingest_csv, load_model, parse_config, save_model, write_long_csv
from .pipeline import PipelineConfig, Prepared, RunResult, prepare, run_single, selection_pool, sweep_k

log = logging.getLogger("tsidec")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_SELFCHECK = 0, 1, 2, 3
BUNDLE_FILES = ("labels.csv", "centers_latent.csv", "centers_timeseries.csv", "metrics.json", "history.csv",
                "cluster_stats.csv", "centers.svg", "latent_pca.svg", "model.tsidec")


class SelfCheckError(RuntimeError):
    pass


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _write_csv(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _num(v):
    return repr(float(v))


def _scores_dict(raw):
    return {"sil": raw.sil, "ch": raw.ch, "db": raw.db, "degenerate": raw.degenerate}


def run_pipeline(cfg: PipelineConfig, series, out_dir) -> dict:
    """Run the configured pipeline on ``series`` and write the artifact bundle into ``out_dir``.

    Returns the metrics dictionary that was written to ``metrics.json``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    series = list(series)
    prepared = prepare(series, cfg)
    sweep = None
    if cfg.k_range is not None:
        sweep = sweep_k(prepared, cfg.k_range, cfg.reps, cfg)
        run = sweep.best
    else:
        run = run_single(prepared, cfg)
    features = prepared.flat if cfg.eval_space == "input" else run.latent
    metrics = _metrics(cfg, prepared, run, features, sweep)
    _write_bundle(out, cfg, series, prepared, run, metrics, sweep)
    _self_check(out, prepared, run, metrics, sweep)
    return metrics


def _metrics(cfg, prepared: Prepared, run: RunResult, features, sweep) -> dict:
    best = run.best
    dominant, size_std, n_small = evaluation.balance_diagnostics(best.labels, run.k)
    m = {
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "version": __version__,
        "config": cfg.to_dict(),
        "n_series": prepared.n,
        "input_shape": list(prepared.matrices.shape[-2:]),
        "k": run.k,
        "seed": run.seed,
        "selected_mode": best.provenance.get("source"),
        "cluster_sizes": best.sizes.tolist(),
        "balance": {"dominant_ratio": dominant, "size_std": size_std, "n_small": n_small},
        "selection": best.provenance.get("selection"),
        "raw": _scores_dict(run.raw) if run.raw is not None else None,
        "training": {
            "pretrain_epochs": len(run.pretrain_history),
            "pretrain_final_loss": run.pretrain_history[-1] if run.pretrain_history else None,
            "joint_epochs": len(run.joint_history),
            "joint_converged": run.c1.provenance.get("converged"),
        },
    }
    if sweep is not None:
        i = sweep.runs.index(run)
        m["normalization_pool"] = "sweep"
        m["normalized"] = sweep.pool.table()[i]
        m["s_eva"] = float(sweep.pool.s_eva[i])
        m["sweep"] = {"rows": sweep.rows, "failures": sweep.failures, "n_runs": len(sweep.runs)}
    else:
        pool = selection_pool(run, features)
        m["normalization_pool"] = "selection"
        if pool is not None:
            table = pool.table()
            row = next((r for r in table if r["candidate_id"] == best.provenance.get("source")), None)
            m["normalized"] = row
            m["s_eva"] = row["s_eva"] if row else None
            m["selection_pool"] = table
        else:
            m["normalized"], m["s_eva"] = None, None
    return _clean(m)


def _write_bundle(out, cfg, series, prepared, run, metrics, sweep):
    labels = run.best.labels
    mode = run.best.provenance.get("source", run.best.mode)
    _write_csv(out / "labels.csv", ["series_id", "label", "mode"],
               [[sid, int(lab), mode] for sid, lab in zip(prepared.ids, labels)])
    cent = np.asarray(run.centroids)
    _write_csv(out / "centers_latent.csv", ["cluster", *[f"z{i}" for i in range(cent.shape[1])]],
               [[j, *map(_num, row)] for j, row in enumerate(cent)])
    rows = []
    for j in range(run.k):
        mask = labels == j
        if mask.any():
            rows.append([j, int(mask.sum()), *map(_num, prepared.curves[mask].mean(axis=0))])
    _write_csv(out / "centers_timeseries.csv", ["cluster", "cardinality", *[f"t{i}" for i in range(cfg.resample_len)]], rows)
    hist = [["pretrain", e, _num(v), "", _num(v), ""] for e, v in enumerate(run.pretrain_history)]
    hist += [["joint", h["epoch"], _num(h["rec_loss"]), _num(h["cl_loss"]), _num(h["total_loss"]), _num(h["label_change"])]
             for h in run.joint_history]
    _write_csv(out / "history.csv", ["phase", "epoch", "rec_loss", "cl_loss", "total_loss", "label_change"], hist)
    stats = report.cluster_stats(series, labels, run.k)
    cols = list(stats[0].keys())
    for r in stats[1:]:
        cols += [c for c in r if c not in cols]
    _write_csv(out / "cluster_stats.csv", cols,
               [[(_num(r[c]) if isinstance(r.get(c), float) else r.get(c, "")) for c in cols] for r in stats])
    if sweep is not None:
        keys = ["s_eva"] + [f"s_norm_{m}" for m in evaluation.METRICS]
        _write_csv(out / "sweep_report.csv",
                   ["k", "n_runs", *keys, *[f"{k}_mean" for k in keys], *[f"{k}_se" for k in keys]],
                   [[r["k"], r["n_runs"], *[r[f"{k}_fmt"] for k in keys], *[_num(r[k]) for k in keys],
                     *[_num(r[f"{k}_se"]) for k in keys]] for r in sweep.rows])
    report.plot_centers(prepared.curves, labels, out / "centers.svg", run.k)
    report.plot_scatter(run.latent, labels, out / "latent_pca.svg")
    save_model(run.model, out / "model.tsidec", run.centroids)
    with (out / "metrics.json").open("w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _self_check(out, prepared, run, metrics, sweep):
    problems = []
    for name in BUNDLE_FILES + (("sweep_report.csv",) if sweep is not None else ()):
        if not (out / name).is_file():
            problems.append(f"missing {name}")
    labels = run.best.labels
    if labels.size != prepared.n:
        problems.append("label count differs from dataset size")
    if sum(metrics["cluster_sizes"]) != prepared.n:
        problems.append("cluster sizes do not sum to n")
    s = metrics.get("s_eva")
    if s is not None and not 0.0 <= s <= 1.0:
        problems.append(f"S_eva {s} outside [0, 1]")
    model, cent = load_model(out / "model.tsidec")
    if not np.array_equal(model.params, run.model.params) or not np.array_equal(cent, run.centroids):
        problems.append("model file does not round-trip")
    if problems:
        raise SelfCheckError("; ".join(problems))


# ---------------------------------------------------------------------------
# argument handling


def _config_flags(parser):
    g = parser.add_argument_group("pipeline settings (override the config file)")
    for f in dataclasses.fields(PipelineConfig):
        if f.name in ("k", "k_range"):
            continue
        g.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, default=None, metavar="VALUE")
    ks = parser.add_mutually_exclusive_group()
    ks.add_argument("--k", type=int, default=None, help="number of clusters")
    ks.add_argument("--k-range", default=None, metavar="LO:HI", help="sweep k over LO..HI inclusive")


def build_parser():
    p = argparse.ArgumentParser(prog="tsidec", description="Deep clustering of univariate time series.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic labelled dataset")
    g.add_argument("--out", required=True, help="long-format CSV to write")
    g.add_argument("--metadata", help="optional metadata sidecar CSV to write")
    g.add_argument("--truth", help="optional CSV with the generating mode of every series")
    g.add_argument("--n-per-mode", type=int, default=50)
    g.add_argument("--seed", type=int, default=0)

    r = sub.add_parser("run", help="run the pipeline and write the artifact bundle")
    r.add_argument("--data", required=True, help="long-format CSV (series_id,timestamp,value)")
    r.add_argument("--metadata", help="sidecar CSV (series_id,weight,energy,duration)")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--config", help="flat key = value config file")
    _config_flags(r)

    b = sub.add_parser("baseline", help="DTW k-medoids baseline")
    b.add_argument("--data", required=True)
    b.add_argument("--k", type=int, required=True)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True, help="labels CSV to write")
    return p


def effective_config(args) -> PipelineConfig:
    values = parse_config(args.config) if args.config else {}
    for f in dataclasses.fields(PipelineConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    if args.k is not None:
        values["k_range"] = None
    if args.k_range is not None:
        values["k"] = None
    return PipelineConfig.from_mapping(values)


def _cmd_generate(args):
    series, labels = datagen.gen_dataset(datagen.DEFAULT_PALETTE, args.n_per_mode, args.seed)
    datagen.write_dataset(series, args.out, args.metadata)
    if args.truth:
        names = [m.name for m in datagen.DEFAULT_PALETTE]
        _write_csv(args.truth, ["series_id", "label", "mode"],
                   [[s.id, int(lab), names[lab]] for s, lab in zip(series, labels)])
    return {"series": len(series), "out": str(args.out)}


def _cmd_run(args):
    cfg = effective_config(args)
    series = ingest_csv(args.data, args.metadata)
    metrics = run_pipeline(cfg, series, args.out)
    return {"out": str(args.out), "k": metrics["k"], "s_eva": metrics["s_eva"], "mode": metrics["selected_mode"]}


def _cmd_baseline(args):
    from .baselines import kmedoids_dtw

    series = ingest_csv(args.data)
    res = kmedoids_dtw(series, args.k, args.seed)
    _write_csv(args.out, ["series_id", "label", "mode"], [[s.id, int(l), res.mode] for s, l in zip(series, res.labels)])
    return {"out": str(args.out), "medoids": [series[i].id for i in res.provenance["medoids"]]}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"generate": _cmd_generate, "run": _cmd_run, "baseline": _cmd_baseline}
    try:
        summary = handlers[args.command](args)
    except SelfCheckError as exc:
        print(json.dumps({"error": {"type": "SelfCheckError", "message": str(exc)}}), file=sys.stderr)
        return EXIT_SELFCHECK
    except Exception as exc:
        log.debug("command failed", exc_info=True)
        print(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}), file=sys.stderr)
        return EXIT_ERROR
    print(json.dumps(_clean(summary), sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
