"""2-D projections of latent states: PCA and exact t-SNE."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from commons_lab.errors import UsageError

MAX_TSNE_SAMPLES = 5000


@dataclass
class LatentProjection:
    points: np.ndarray  # (n, 2)
    values: np.ndarray  # (n,)
    episode: np.ndarray
    step: np.ndarray
    method: str
    kl_history: list = field(default_factory=list)  # t-SNE objective per iteration
    components: np.ndarray | None = None  # PCA basis (2, d)
    center: np.ndarray | None = None  # PCA mean (d,)

    def __len__(self):
        return len(self.points)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["x", "y", "value", "episode", "step"])
            for (x, y), v, e, s in zip(self.points, self.values, self.episode, self.step):
                w.writerow([repr(float(x)), repr(float(y)), repr(float(v)), int(e), int(s)])


def _check_not_degenerate(x: np.ndarray) -> None:
    if np.all(np.ptp(x, axis=0) == 0.0):
        raise UsageError("all samples are identical; a projection is undefined")


def pca(x: np.ndarray):
    """Top-2 principal axes from the covariance eigen-decomposition.

    Returns (points, components, center). Each axis is signed so its
    largest-magnitude loading is positive.
    """
    x = np.asarray(x, dtype=np.float64)
    center = x.mean(axis=0)
    xc = x - center
    cov = xc.T @ xc / max(len(x) - 1, 1)
    evals, evecs = np.linalg.eigh(cov)
    comps = evecs[:, np.argsort(evals)[::-1][:2]].T
    for i in range(comps.shape[0]):
        if comps[i, np.argmax(np.abs(comps[i]))] < 0:
            comps[i] = -comps[i]
    return xc @ comps.T, comps, center


def _sq_distances(x: np.ndarray) -> np.ndarray:
    s = (x * x).sum(axis=1)
    d = s[:, None] + s[None, :] - 2.0 * x @ x.T
    np.fill_diagonal(d, 0.0)
    return np.maximum(d, 0.0)


def affinities(x: np.ndarray, perplexity: float, tol: float = 1e-5, max_iter: int = 200) -> np.ndarray:
    """Symmetrised P with a per-point Gaussian precision binary-searched to the target perplexity."""
    d = _sq_distances(x)
    n = len(x)
    target = np.log(perplexity)
    P = np.zeros((n, n))
    for i in range(n):
        di = np.delete(d[i], i)
        lo, hi, beta = 0.0, np.inf, 1.0
        for _ in range(max_iter):
            p = np.exp(-(di - di.min()) * beta)
            sp = p.sum()
            h = np.log(sp) + beta * ((di - di.min()) * p).sum() / sp
            if abs(h - target) < tol:
                break
            if h > target:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else 0.5 * (beta + hi)
            else:
                hi = beta
                beta = 0.5 * (beta + lo)
        P[i, np.arange(n) != i] = p / sp
    P = (P + P.T) / (2.0 * n)
    return np.maximum(P, 1e-12)


def _kl_and_grad(P: np.ndarray, y: np.ndarray, exaggeration: float):
    num = 1.0 / (1.0 + _sq_distances(y))
    np.fill_diagonal(num, 0.0)
    Q = np.maximum(num / num.sum(), 1e-12)
    PQ = exaggeration * P - Q
    np.fill_diagonal(PQ, 0.0)
    W = PQ * num
    grad = 4.0 * (W.sum(axis=1)[:, None] * y - W @ y)
    mask = ~np.eye(len(P), dtype=bool)
    kl = float((P[mask] * np.log(P[mask] / Q[mask])).sum())
    return kl, grad


def tsne(x: np.ndarray, perplexity: float = 30.0, iterations: int = 1000, seed: int = 0,
         exaggeration: float = 12.0, exaggeration_iters: int = 250, learning_rate: float | None = None):
    """Exact t-SNE. Returns (embedding, KL history).

    After the exaggeration phase a step that would raise the objective is
    rejected: the velocity is reset and the learning rate halved, so the
    logged objective never increases.
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    P = affinities(x, perplexity)
    rng = np.random.default_rng(seed)
    y = rng.normal(0.0, 1e-4, size=(n, 2))
    vel = np.zeros_like(y)
    lr = learning_rate or max(n / exaggeration / 4.0, 50.0)
    history = []
    kl_cur = None
    for it in range(iterations):
        exag = exaggeration if it < exaggeration_iters else 1.0
        momentum = 0.5 if it < exaggeration_iters else 0.8
        if it == exaggeration_iters:
            vel[:] = 0.0
            kl_cur = None
        kl, grad = _kl_and_grad(P, y, exag)
        if exag == 1.0:
            kl_cur = kl if kl_cur is None else kl_cur
        vel = momentum * vel - lr * grad
        y_new = y + vel
        if exag == 1.0:
            kl_new, _ = _kl_and_grad(P, y_new, 1.0)
            if kl_new > kl_cur:
                vel[:] = 0.0
                lr *= 0.5
                history.append(kl_cur)
                continue
            kl_cur = kl_new
            history.append(kl_new)
        else:
            history.append(kl)
        y = y_new - (y_new.mean(axis=0))
    return y, history


def project_2d(features, values, method: str = "tsne", perplexity: float = 30.0, iterations: int = 1000,
               seed: int = 0, episode=None, step=None) -> LatentProjection:
    x = np.asarray(features, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    n = len(x)
    if x.ndim != 2 or len(values) != n:
        raise UsageError(f"features must be (n, d) with n values; got {x.shape} and {values.shape}")
    episode = np.zeros(n, np.int64) if episode is None else np.asarray(episode)
    step = np.arange(n) if step is None else np.asarray(step)
    if method == "pca":
        if n < 10:
            raise UsageError(f"pca needs at least 10 samples, got {n}")
        _check_not_degenerate(x)
        pts, comps, center = pca(x)
        return LatentProjection(pts, values, episode, step, "pca", components=comps, center=center)
    if method != "tsne":
        raise UsageError(f"unknown projection method {method!r} (expected 'tsne' or 'pca')")
    if n > MAX_TSNE_SAMPLES:
        keep = np.sort(np.random.default_rng(seed).choice(n, MAX_TSNE_SAMPLES, replace=False))
        x, values, episode, step = x[keep], values[keep], episode[keep], step[keep]
        n = MAX_TSNE_SAMPLES
    if n < 3 * perplexity:
        raise UsageError(f"t-SNE with perplexity {perplexity} needs at least {3 * perplexity:g} samples, got {n}")
    _check_not_degenerate(x)
    pts, history = tsne(x, perplexity, iterations, seed)
    return LatentProjection(pts, values, episode, step, "tsne", kl_history=history)


def write_projection_csv(projection: LatentProjection, path) -> Path:
    path = Path(path)
    projection.write_csv(path)
    return path
