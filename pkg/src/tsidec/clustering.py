"""Soft/hard clustering heads, joint training and the C1/C2 selection."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import evaluation
from .dcae import DcaeModel, TrainingDivergedError, _check_batch, encode
from .nn import OptimizerState, adam_step, mse_loss

log = logging.getLogger(__name__)

SOFT, HARD, SELECTED = "soft_C1", "hard_C2", "selected"


class InvalidParameterError(ValueError):
    pass


class DegenerateClusterError(ValueError):
    pass


class DivergenceUndefinedError(ValueError):
    pass


@dataclass
class ClusteringResult:
    labels: np.ndarray
    k: int
    mode: str
    centroids: np.ndarray
    seed: int = 0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.k):
            raise InvalidParameterError(f"labels must lie in [0, {self.k})")

    @property
    def sizes(self):
        return np.bincount(self.labels, minlength=self.k)


class KMeansResult(NamedTuple):
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float


# ---------------------------------------------------------------------------
# k-means


def _sq_dists(x, c):
    d = (x * x).sum(1)[:, None] - 2.0 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_pp(x, k, rng):
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = _sq_dists(x, centers[:1])[:, 0]
    for j in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[j] = x[idx]
        closest = np.minimum(closest, _sq_dists(x, centers[j:j + 1])[:, 0])
    return centers


def _assign(x, centers):
    d = _sq_dists(x, centers)
    labels = d.argmin(axis=1)
    return labels, d[np.arange(x.shape[0]), labels]


def _repair_empty(labels, dist, k):
    """Give every empty cluster the point farthest from its current centroid."""
    labels = labels.copy()
    dist = dist.copy()
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts == 0):
        movable = counts[labels] > 1
        candidates = np.where(movable, dist, -1.0)
        i = int(candidates.argmax())
        counts[labels[i]] -= 1
        labels[i] = j
        counts[j] = 1
        dist[i] = -1.0
    return labels


def _means(x, labels, k):
    sums = np.zeros((k, x.shape[1]))
    np.add.at(sums, labels, x)
    counts = np.bincount(labels, minlength=k)
    return sums / counts[:, None]


def _lloyd(x, k, rng, max_iter, tol):
    centers = _kmeans_pp(x, k, rng)
    for _ in range(max_iter):
        labels, dist = _assign(x, centers)
        labels = _repair_empty(labels, dist, k)
        new = _means(x, labels, k)
        shift = np.sqrt(((new - centers) ** 2).sum(1)).max()
        centers = new
        if shift < tol:
            break
    labels, dist = _assign(x, centers)
    fixed = _repair_empty(labels, dist, k)
    if not np.array_equal(fixed, labels):
        centers = _means(x, fixed, k)
    labels = fixed
    inertia = float(((x - centers[labels]) ** 2).sum())
    return labels, centers, inertia


def kmeans(x, k: int, seed: int = 0, n_init: int = 10, max_iter: int = 300, tol: float = 1e-6) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding, keeping the best of ``n_init`` restarts.

    Iteration stops when no centroid moves more than ``tol`` or after
    ``max_iter`` rounds.  A cluster that ends up empty takes over the point
    farthest from its own centroid.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if k < 1 or n < k:
        raise InvalidParameterError(f"k-means needs 1 <= k <= n (k={k}, n={n})")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        labels, centers, inertia = _lloyd(x, k, rng, max_iter, tol)
        if best is None or inertia < best.inertia:
            best = KMeansResult(labels, centers, inertia)
    return best


# ---------------------------------------------------------------------------
# soft assignment and clustering loss


def soft_assign(z, centroids, alpha: float = 1.0) -> np.ndarray:
    """Student's t membership probabilities ``q`` (n x k); rows sum to one."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    mu = np.atleast_2d(np.asarray(centroids, dtype=np.float64))
    if z.shape[1] != mu.shape[1]:
        raise InvalidParameterError(f"latent dim {z.shape[1]} != centroid dim {mu.shape[1]}")
    if alpha <= 0:
        raise InvalidParameterError("alpha must be positive")
    d2 = ((z[:, None, :] - mu[None, :, :]) ** 2).sum(-1)
    logk = -0.5 * (alpha + 1.0) * np.log1p(d2 / alpha)
    logk -= logk.max(axis=1, keepdims=True)
    q = np.exp(logk)
    return q / q.sum(axis=1, keepdims=True)


def target_distribution(q) -> np.ndarray:
    """Sharpened targets ``p_ij = (q_ij^2 / f_j) / sum_j' (q_ij'^2 / f_j')``, ``f_j = sum_i q_ij``."""
    q = np.asarray(q, dtype=np.float64)
    f = q.sum(axis=0)
    if np.any(f <= 0.0):
        raise DegenerateClusterError(f"clusters {np.flatnonzero(f <= 0).tolist()} have zero total membership")
    w = q * q / f
    return w / w.sum(axis=1, keepdims=True)


def kl_divergence(p, q) -> float:
    """``sum_ij p_ij log(p_ij / q_ij)`` with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    mask = p > 0
    if np.any(q[mask] <= 0):
        raise DivergenceUndefinedError("q is zero where p is positive")
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def _grad_coeffs(z, mu, p, q, alpha):
    d2 = ((z[:, None, :] - mu[None, :, :]) ** 2).sum(-1)
    return (alpha + 1.0) / alpha * (p - q) / (1.0 + d2 / alpha)


def clustering_grad_z(z, centroids, p, q, alpha: float = 1.0) -> np.ndarray:
    """d KL(P||Q) / d z_i, holding P fixed."""
    z = np.asarray(z, dtype=np.float64)
    mu = np.asarray(centroids, dtype=np.float64)
    if p.shape != q.shape or p.shape != (z.shape[0], mu.shape[0]):
        raise InvalidParameterError("P, Q, Z and centroid shapes disagree")
    c = _grad_coeffs(z, mu, p, q, alpha)
    return z * c.sum(axis=1, keepdims=True) - c @ mu


def clustering_grad_mu(z, centroids, p, q, alpha: float = 1.0) -> np.ndarray:
    """d KL(P||Q) / d mu_j, summed over samples."""
    z = np.asarray(z, dtype=np.float64)
    mu = np.asarray(centroids, dtype=np.float64)
    if p.shape != q.shape or p.shape != (z.shape[0], mu.shape[0]):
        raise InvalidParameterError("P, Q, Z and centroid shapes disagree")
    c = _grad_coeffs(z, mu, p, q, alpha)
    return mu * c.sum(axis=0)[:, None] - c.T @ z


# ---------------------------------------------------------------------------
# training


class JointTrainResult(NamedTuple):
    model: DcaeModel
    centroids: np.ndarray
    c1: ClusteringResult
    history: list
    latent: np.ndarray  # codes of the final model, the ones C1 was read from


def joint_train(model: DcaeModel, x, k: int, gamma: float = 0.5, lr: float = 0.001, batch_size: int = 32,
                epochs: int = 1000, seed: int = 0, alpha: float = 1.0, tol: float = 0.001,
                centroids=None, optimizer: OptimizerState | None = None, latent=None) -> JointTrainResult:
    """Minimize ``L_rec + gamma * KL(P || Q)`` over encoder, decoder and centroids.

    Centroids start from k-means on the current latent codes unless given.
    At the start of every epoch the targets P are recomputed over the whole
    dataset; training stops once the fraction of samples whose most likely
    cluster changed since the previous refresh drops below ``tol`` (checked
    from the second refresh on).  The decoder only ever sees the
    reconstruction gradient; the encoder sees both; the centroids see the
    clustering term.

    ``optimizer`` continues the network's Adam state (e.g. the one used for
    pretraining); a fresh state makes the first updates move every weight by
    about ``lr`` and visibly disturbs a pretrained model.  ``latent`` may pass
    in ``encode(model, x)`` when the caller already has it.
    """
    x = _check_batch(model, x)
    n = x.shape[0]
    if n < k:
        raise InvalidParameterError(f"need at least k={k} samples, got {n}")
    z_all = encode(model, x) if latent is None else np.array(latent, dtype=np.float64)
    if z_all.shape != (n, model.latent_dim):
        raise InvalidParameterError(f"latent codes of shape {z_all.shape} do not match {n} samples")
    if centroids is None:
        km = kmeans(z_all, k, seed)
        mu, prev = km.centroids.copy(), km.labels
    else:
        mu = np.array(centroids, dtype=np.float64)
        prev = soft_assign(z_all, mu, alpha).argmax(1)
    rng = np.random.default_rng(seed)
    opt = optimizer or OptimizerState.like(model.params, lr=lr)
    opt_mu = OptimizerState.like(mu, lr=lr)
    history = []
    converged = False
    for epoch in range(epochs):
        if epoch > 0:
            z_all = encode(model, x)
        q_all = soft_assign(z_all, mu, alpha)
        p_all = target_distribution(q_all)
        labels = q_all.argmax(axis=1)
        changed = float(np.mean(labels != prev))
        if epoch > 0 and changed < tol:
            converged = True
            log.debug("joint training converged at epoch %d (label change %.4f)", epoch, changed)
            break
        prev = labels
        order = rng.permutation(n)
        rec_total = cl_total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            m = len(idx)
            xb = x[idx]
            z = model.encoder.forward(xb)
            x_hat = model.decoder.forward(z)
            rec, g_rec = mse_loss(xb, x_hat)
            qb = soft_assign(z, mu, alpha)
            pb = p_all[idx]
            cl = kl_divergence(pb, qb) / m
            if not (np.isfinite(rec) and np.isfinite(cl)):
                raise TrainingDivergedError(f"loss became non-finite in joint training epoch {epoch}")
            dz = model.decoder.backward(g_rec)
            dz_cl = clustering_grad_z(z, mu, pb, qb, alpha) / m
            dmu = clustering_grad_mu(z, mu, pb, qb, alpha) / m
            model.encoder.backward(dz + gamma * dz_cl, input_grad=False)
            adam_step(model.params, model.grads, opt)
            adam_step(mu, gamma * dmu, opt_mu)
            rec_total += rec * m
            cl_total += cl * m
        history.append({
            "epoch": epoch,
            "rec_loss": rec_total / n,
            "cl_loss": cl_total / n,
            "total_loss": (rec_total + gamma * cl_total) / n,
            "label_change": changed,
        })
    else:
        z_all = encode(model, x)
        q_all = soft_assign(z_all, mu, alpha)
    c1 = ClusteringResult(q_all.argmax(axis=1), k, SOFT, mu.copy(), seed,
                          {"epochs_run": len(history), "converged": converged})
    return JointTrainResult(model, mu, c1, history, z_all)


def hard_cluster(z, k: int, seed: int = 0) -> ClusteringResult:
    """k-means on the frozen latent codes (output C2)."""
    if k < 2:
        raise InvalidParameterError("hard clustering for evaluation needs k >= 2")
    km = kmeans(z, k, seed)
    return ClusteringResult(km.labels, k, HARD, km.centroids, seed, {"inertia": km.inertia})


# ---------------------------------------------------------------------------
# selection


def qualitative_check(result: ClusteringResult, n: int | None = None, min_frac: float = 0.01) -> list[str]:
    """Return the list of structural problems; an empty list means the result passes."""
    n = result.labels.size if n is None else n
    sizes = result.sizes
    violations = []
    if np.count_nonzero(sizes) < 2:
        violations.append("single cluster")
    for j, s in enumerate(sizes):
        if s == 0:
            violations.append(f"empty cluster {j}")
        elif s / n < min_frac:
            violations.append(f"small cluster {j} ({s}/{n})")
    return violations


def select_best(c1: ClusteringResult, c2: ClusteringResult, features, min_frac: float = 0.01) -> ClusteringResult:
    """Two-stage choice between the soft and hard outputs.

    Stage 1 keeps the only structurally sound candidate (or, if both are
    unsound, the one with fewer problems, flagged degenerate).  Stage 2 scores
    both on ``features`` with the composite index over the two-candidate pool;
    the higher score wins and an exact tie goes to the hard output.
    """
    if c1.labels.shape != c2.labels.shape:
        raise InvalidParameterError("C1 and C2 must label the same dataset")
    n = c1.labels.size
    v1, v2 = qualitative_check(c1, n, min_frac), qualitative_check(c2, n, min_frac)
    prov = {"violations": {SOFT: v1, HARD: v2}, "degenerate": False}
    if bool(v1) != bool(v2):
        winner = c2 if v1 else c1
        prov.update(stage=1, reason="only candidate passing the qualitative check")
    elif v1 and v2:
        winner = c1 if len(v1) < len(v2) else c2
        prov.update(stage=1, degenerate=True, reason="both candidates failed; fewer violations kept")
    else:
        x = np.asarray(features, dtype=np.float64).reshape(n, -1)
        raws = [evaluation.raw_scores(x, c.labels, c.mode) for c in (c1, c2)]
        pool = evaluation.composite_score(raws)
        s1, s2 = pool.s_eva
        winner = c1 if s1 > s2 else c2
        prov.update(
            stage=2,
            reason="higher composite score" if s1 != s2 else "tie resolved to hard output",
            scores={r.candidate_id: {**r.to_dict(), "s_eva": float(s)} for r, s in zip(raws, pool.s_eva)},
        )
    prov["winner"] = winner.mode
    return replace(winner, mode=SELECTED, provenance={**winner.provenance, "selection": prov, "source": winner.mode})
