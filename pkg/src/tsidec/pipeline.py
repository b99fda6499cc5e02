"""End-to-end orchestration: preprocessing, pretraining, joint training, selection and k sweeps."""

from __future__ import annotations

import copy
import dataclasses
import logging
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import evaluation
from .clustering import (
    ClusteringResult,
    InvalidParameterError,
    hard_cluster,
    joint_train,
    select_best,
)
from .dcae import DcaeModel, build_dcae, encode, pretrain
from .nn import OptimizerState
from .windowing import TimeSeries, matrix_shape, normalize_unit, resample_linear, stack_matrices, to_matrix

log = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    resample_len: int = 497
    window_size: int = 32
    stride: int = 15
    latent_dim: int = 128
    alpha: float = 1.0
    gamma: float = 0.5
    lr: float = 0.001
    batch_size: int = 32
    pretrain_epochs: int = 200
    epochs: int = 1000
    k: int | None = 4
    k_range: tuple | None = None
    reps: int = 1
    seed: int = 0
    eval_space: str = "input"
    min_cluster_frac: float = 0.01
    tol: float = 0.001

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("resample_len", "window_size", "stride", "latent_dim", "batch_size", "pretrain_epochs",
                     "epochs", "reps"):
            if int(getattr(self, name)) < 1:
                raise InvalidParameterError(f"{name} must be >= 1")
        if self.stride > self.window_size:
            raise InvalidParameterError("stride must not exceed window_size")
        if self.alpha <= 0 or self.lr <= 0 or self.gamma < 0:
            raise InvalidParameterError("alpha and lr must be positive, gamma non-negative")
        if not 0.0 < self.min_cluster_frac < 1.0:
            raise InvalidParameterError("min_cluster_frac must lie in (0, 1)")
        if self.eval_space not in ("input", "latent"):
            raise InvalidParameterError("eval_space must be 'input' or 'latent'")
        if self.k_range is not None:
            lo, hi = self.k_range
            if lo < 2 or hi < lo:
                raise InvalidParameterError(f"k_range must satisfy 2 <= lo <= hi, got {self.k_range}")
        elif self.k is None or self.k < 2:
            raise InvalidParameterError("k must be >= 2")

    @property
    def ks(self) -> list[int]:
        if self.k_range is not None:
            return list(range(self.k_range[0], self.k_range[1] + 1))
        return [self.k]

    @property
    def input_shape(self):
        return matrix_shape(self.resample_len, self.window_size, self.stride)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["k_range"] = list(self.k_range) if self.k_range is not None else None
        return d

    @classmethod
    def from_mapping(cls, values: dict) -> "PipelineConfig":
        """Build from string (or typed) values, e.g. a parsed config file."""
        kwargs = {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key not in types:
                raise InvalidParameterError(f"unknown config key {key!r}")
            if raw is None:
                kwargs[key] = None
                continue
            t = types[key]
            try:
                if key == "k_range":
                    kwargs[key] = _parse_range(raw)
                elif key in ("eval_space",):
                    kwargs[key] = str(raw).strip()
                elif key == "k":
                    kwargs[key] = None if str(raw).strip().lower() in ("", "none") else int(raw)
                elif "float" in str(t):
                    kwargs[key] = float(raw)
                else:
                    kwargs[key] = int(raw)
            except ValueError:
                raise InvalidParameterError(f"bad value {raw!r} for {key}") from None
        return cls(**kwargs)


def _parse_range(raw):
    if isinstance(raw, (tuple, list)):
        lo, hi = raw
        return int(lo), int(hi)
    text = str(raw).strip()
    if text.lower() in ("", "none"):
        return None
    for sep in (":", "-", ","):
        if sep in text:
            lo, hi = text.split(sep, 1)
            return int(lo), int(hi)
    return int(text), int(text)


@dataclass
class Prepared:
    ids: list
    matrices: np.ndarray  # (n, 1, rows, cols)
    curves: np.ndarray  # (n, resample_len), in original units

    @property
    def n(self):
        return len(self.ids)

    @property
    def flat(self):
        return self.matrices.reshape(self.n, -1)


def prepare(series, cfg: PipelineConfig) -> Prepared:
    series = list(series)
    if not series:
        raise InvalidParameterError("empty dataset")
    curves = [resample_linear(s, cfg.resample_len) for s in series]
    mats = [to_matrix(c, cfg.resample_len, cfg.window_size, cfg.stride) for c in curves]
    return Prepared([s.id for s in series], stack_matrices(mats), np.stack([c.values for c in curves]))


def unit_curves(prepared: Prepared) -> np.ndarray:
    return np.stack([normalize_unit(TimeSeries("", c)).values for c in prepared.curves])


@dataclass
class Pretrained:
    model: DcaeModel
    optimizer: OptimizerState
    history: list
    seed: int

    def fork(self):
        return self.model.copy(), copy.deepcopy(self.optimizer)


def pretrain_for_seed(x, cfg: PipelineConfig, seed: int) -> Pretrained:
    rows, cols = x.shape[-2:]
    model = build_dcae(rows, cols, cfg.latent_dim, seed=seed)
    opt = OptimizerState.like(model.params, lr=cfg.lr)
    model, hist = pretrain(model, x, cfg.pretrain_epochs, cfg.lr, cfg.batch_size, seed=seed, optimizer=opt)
    return Pretrained(model, opt, hist, seed)


@dataclass
class RunResult:
    k: int
    seed: int
    c1: ClusteringResult
    c2: ClusteringResult
    best: ClusteringResult
    raw: evaluation.RawScores | None
    latent: np.ndarray
    centroids: np.ndarray
    pretrain_history: list
    joint_history: list
    model: DcaeModel | None = None
    error: str | None = None

    @property
    def run_id(self):
        return f"k={self.k},seed={self.seed}"


def run_k(prepared: Prepared, k: int, cfg: PipelineConfig, pretrained: Pretrained, keep_model=True,
          latent=None) -> RunResult:
    """Joint training from a pretrained snapshot, then C1/C2 selection.

    ``latent`` optionally carries the pretrained model's codes, which are the
    same for every k.
    """
    x = prepared.matrices
    model, opt = pretrained.fork()
    seed = pretrained.seed
    jt = joint_train(model, x, k, cfg.gamma, cfg.lr, cfg.batch_size, cfg.epochs, seed, cfg.alpha, cfg.tol,
                     optimizer=opt, latent=latent)
    z = jt.latent
    c2 = hard_cluster(z, k, seed)
    features = prepared.flat if cfg.eval_space == "input" else z
    best = select_best(jt.c1, c2, features, cfg.min_cluster_frac)
    raw = None
    if 2 <= np.unique(best.labels).size <= prepared.n - 1:
        raw = evaluation.raw_scores(features, best.labels, f"k={k},seed={seed}")
    return RunResult(k, seed, jt.c1, c2, best, raw, z, best.centroids, pretrained.history, jt.history,
                     model if keep_model else None)


@dataclass
class SweepResult:
    runs: list
    failures: list
    pool: evaluation.CandidatePool | None
    rows: list = field(default_factory=list)
    best: RunResult | None = None

    @property
    def best_k(self):
        return self.best.k if self.best else None


def _sweep_rows(ks, runs, pool):
    rows = []
    for k in ks:
        idx = [i for i, r in enumerate(runs) if r.k == k]
        row = {"k": k, "n_runs": len(idx)}
        for key, arr in [("s_eva", pool.s_eva)] + [(f"s_norm_{m}", pool.norm[m]) for m in evaluation.METRICS]:
            vals = arr[idx] if idx else np.array([])
            mean = float(vals.mean()) if vals.size else float("nan")
            se = evaluation.standard_error(vals)
            row[key] = mean
            row[f"{key}_se"] = se
            row[f"{key}_fmt"] = evaluation.format_mean_se(mean, se) if vals.size else ""
        rows.append(row)
    return rows


def sweep_k(series_or_prepared, k_range, reps: int, cfg: PipelineConfig, keep_best_model=True) -> SweepResult:
    """Run every ``(k, seed)`` pair and pick the run with the highest composite score.

    Seeds are ``cfg.seed, ..., cfg.seed + reps - 1``.  Pretraining does not
    depend on k, so it runs once per seed and every k starts from the same
    snapshot.  All successful runs form a single normalization pool.  A run
    that fails is recorded and skipped; the sweep fails only if every run does.
    """
    prepared = series_or_prepared if isinstance(series_or_prepared, Prepared) else prepare(series_or_prepared, cfg)
    ks = list(range(k_range[0], k_range[1] + 1)) if isinstance(k_range, tuple) else list(k_range)
    if not ks:
        raise InvalidParameterError("empty k_range")
    if reps < 1:
        raise InvalidParameterError("reps must be >= 1")
    runs, failures = [], []
    with tempfile.TemporaryDirectory(prefix="tsidec-sweep-") as tmp:
        snapshots = {}
        for r in range(reps):
            seed = cfg.seed + r
            pre = pretrain_for_seed(prepared.matrices, cfg, seed)
            if keep_best_model:
                path = Path(tmp) / f"seed{seed}.npz"
                np.savez(path, params=pre.model.params, m=pre.optimizer.m, v=pre.optimizer.v)
                snapshots[seed] = (path, pre.optimizer.step, pre.history)
            z0 = encode(pre.model, prepared.matrices)
            for k in ks:
                try:
                    run = run_k(prepared, k, cfg, pre, keep_model=False, latent=z0)
                except Exception as exc:  # recorded, not fatal
                    log.warning("sweep run k=%d seed=%d failed: %s", k, seed, exc)
                    failures.append({"k": k, "seed": seed, "error": f"{type(exc).__name__}: {exc}"})
                    continue
                if run.raw is None:
                    failures.append({"k": k, "seed": seed, "error": "selected clustering has fewer than 2 clusters"})
                    continue
                runs.append(run)
                log.info("sweep k=%d seed=%d sil=%.4f ch=%.2f db=%.4f", k, seed, run.raw.sil, run.raw.ch, run.raw.db)
        if not runs:
            raise RuntimeError(f"all {len(failures)} sweep runs failed")
        runs.sort(key=lambda r: (r.k, r.seed))
        pool = evaluation.composite_score([r.raw for r in runs])
        best = runs[int(np.argmax(pool.s_eva))]
        if keep_best_model:
            path, step, hist = snapshots[best.seed]
            best.model = _replay(prepared, best.k, cfg, path, step, hist, best.seed)
    return SweepResult(runs, failures, pool, _sweep_rows(ks, runs, pool), best)


def _replay(prepared, k, cfg, path, step, hist, seed):
    rows, cols = prepared.matrices.shape[-2:]
    model = build_dcae(rows, cols, cfg.latent_dim, seed=seed)
    with np.load(path) as snap:
        model.params[...] = snap["params"]
        opt = OptimizerState(snap["m"].copy(), snap["v"].copy(), step, cfg.lr)
    return run_k(prepared, k, cfg, Pretrained(model, opt, hist, seed)).model


def run_single(prepared: Prepared, cfg: PipelineConfig, k: int | None = None) -> RunResult:
    pre = pretrain_for_seed(prepared.matrices, cfg, cfg.seed)
    return run_k(prepared, k or cfg.k, cfg, pre)


def selection_pool(run: RunResult, features) -> evaluation.CandidatePool | None:
    """Composite scores for whichever of C1/C2 can be scored (at least two clusters)."""
    n = run.best.labels.size
    entries = []
    for c in (run.c1, run.c2):
        if 2 <= np.unique(c.labels).size <= n - 1:
            entries.append(evaluation.raw_scores(features, c.labels, c.mode))
    return evaluation.composite_score(entries) if entries else None

