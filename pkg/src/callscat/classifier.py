"""Gaussian-kernel SVMs trained by sequential minimal optimisation.

The binary solver follows the classic SMO scheme with second-order working
set selection: pick the maximal violating index ``i``, then the partner
``j`` that maximises the guaranteed decrease of the dual objective, update
the pair analytically and keep the full gradient up to date. Variables
stuck at a bound are shrunk away from the working set and brought back,
with their gradients rebuilt, before the final optimality check.
"""
from __future__ import annotations

import hashlib
import json
import math
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InputError, ParameterError, ProtocolError
from .features import NormStats, zscore_apply, zscore_fit
from .serialize import read_container, write_container
from .signal_io import CALL_TYPES, Label

TAU = 1e-12
C_GRID = (1.0, 10.0, 100.0)
GAMMA_GRID = (1e-4, 1e-3, 1e-2)


def sq_distances(A: np.ndarray, B: np.ndarray | None = None) -> np.ndarray:
    """Squared Euclidean distances ``[len(A), len(B)]``, clipped at zero."""
    B = A if B is None else B
    d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    np.maximum(d, 0.0, out=d)
    if B is A:
        np.fill_diagonal(d, 0.0)
    return d


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    return np.exp(-gamma * sq_distances(A, B))


class KernelColumns:
    """Kernel columns on demand: the whole Gram matrix when it fits in
    ``cache_mb``, otherwise an LRU cache of columns."""

    def __init__(self, X: np.ndarray, gamma: float, cache_mb: float = 256.0,
                 sqdist: np.ndarray | None = None):
        self.X = X
        self.gamma = gamma
        n = X.shape[0]
        self.full = None
        if sqdist is not None:
            self.full = np.exp(-gamma * sqdist)
        elif n * n * 8 <= cache_mb * 2 ** 20:
            self.full = rbf_kernel(X, X, gamma)
        self._norms = (X * X).sum(1)
        self._cache: OrderedDict[int, np.ndarray] = OrderedDict()
        self._cap = max(2, int(cache_mb * 2 ** 20 // max(1, 8 * n)))
        self.evaluations = 0

    def column(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[:, i]
        col = self._cache.get(i)
        if col is not None:
            self._cache.move_to_end(i)
            return col
        d = self._norms + self._norms[i] - 2.0 * self.X @ self.X[i]
        col = np.exp(-self.gamma * np.maximum(d, 0.0))
        col[i] = 1.0
        self.evaluations += col.size
        self._cache[i] = col
        if len(self._cache) > self._cap:
            self._cache.popitem(last=False)
        return col


@dataclass
class BinarySVM:
    support_vectors: np.ndarray   # [n_sv, dim]
    dual_coef: np.ndarray         # alpha_i * y_i
    bias: float
    gamma: float
    C: float
    converged: bool = True
    n_iter: int = 0
    kkt_gap: float = 0.0
    support_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def decision(self, X: np.ndarray) -> np.ndarray:
        if len(X) == 0:
            return np.zeros(0)
        if self.support_vectors.shape[0] == 0:
            return np.full(len(X), self.bias)
        return rbf_kernel(np.asarray(X, dtype=np.float64), self.support_vectors, self.gamma) @ self.dual_coef + self.bias


def _check_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) != len(y):
        raise InputError("X must be [n, dim] with one label per row")
    if not np.all(np.isfinite(X)):
        raise InputError("features contain non-finite values")
    if not set(np.unique(y)) <= {-1, 1}:
        raise InputError("labels must be +1/-1")
    if not ((y == 1).any() and (y == -1).any()):
        raise InputError("need at least one example of each sign")
    return X, y.astype(np.float64)


def train_binary_svm(X, y, C: float = 1.0, gamma: float = 1e-3, tol: float = 1e-3,
                     max_iter: int = 100_000, seed: int = 0, cache_mb: float = 256.0,
                     shrinking: bool = True, sqdist: np.ndarray | None = None) -> BinarySVM:
    """Soft-margin dual ``min 1/2 a'Qa - e'a, 0 <= a <= C, y'a = 0`` with
    ``Q_ij = y_i y_j exp(-gamma |x_i - x_j|^2)``.

    ``max_iter`` bounds the number of pair updates. ``seed`` fixes the order
    in which equally violating indices are considered. ``sqdist`` may hold
    precomputed squared distances of ``X`` (reused across a grid search).
    """
    X, y = _check_xy(X, y)
    if C <= 0 or gamma <= 0:
        raise ParameterError("C and gamma must be positive")
    n = len(y)
    perm = np.random.default_rng(seed).permutation(n)
    Xp, yp = X[perm], y[perm]
    D = sqdist[np.ix_(perm, perm)] if sqdist is not None else None
    kern = KernelColumns(Xp, gamma, cache_mb, D)

    alpha = np.zeros(n)
    G = -np.ones(n)                      # gradient of the dual objective
    active = np.arange(n)
    shrink_every = min(n, 1000)
    counter = shrink_every
    unshrunk = False
    it = 0
    gap = np.inf

    def select(idx):
        a, yy, g = alpha[idx], yp[idx], G[idx]
        up = ((yy > 0) & (a < C)) | ((yy < 0) & (a > 0))
        low = ((yy > 0) & (a > 0)) | ((yy < 0) & (a < C))
        viol = -yy * g
        if not up.any() or not low.any():
            return None, None, 0.0
        vu = np.where(up, viol, -np.inf)
        ii = int(np.argmax(vu))
        m = vu[ii]
        M = np.min(np.where(low, viol, np.inf))
        i = idx[ii]
        Ki = kern.column(i)[idx]
        b = m - viol
        cand = low & (b > 0)
        if not cand.any():
            return i, None, m - M
        a_ = np.maximum(2.0 - 2.0 * Ki, TAU)       # K_ii + K_tt - 2K_it with K_tt = 1
        score = np.where(cand, -(b * b) / a_, np.inf)
        jj = int(np.argmin(score))
        return i, idx[jj], m - M

    def reconstruct():
        nonlocal G
        G = -np.ones(n)
        for t in np.flatnonzero(alpha > 0):
            G += alpha[t] * yp[t] * yp * kern.column(t)

    def shrink():
        nonlocal active
        a, yy, g = alpha, yp, G
        viol = -yy * g
        up = ((yy > 0) & (a < C)) | ((yy < 0) & (a > 0))
        low = ((yy > 0) & (a > 0)) | ((yy < 0) & (a < C))
        m = viol[active][up[active]].max(initial=-np.inf)
        M = viol[active][low[active]].min(initial=np.inf)
        at_upper = a >= C
        at_lower = a <= 0
        # a bound variable that cannot enter any violating pair
        out = (at_upper & (((yy > 0) & (viol > m)) | ((yy < 0) & (viol < M)))) | \
              (at_lower & (((yy > 0) & (viol < M)) | ((yy < 0) & (viol > m))))
        keep = active[~out[active]]
        if keep.size >= 2:
            active = keep

    while it < max_iter:
        if shrinking:
            counter -= 1
            if counter == 0:
                counter = shrink_every
                shrink()
        i, j, gap = select(active)
        if i is None or j is None or gap < tol:
            if active.size < n:
                reconstruct()
                active = np.arange(n)
                unshrunk = True
                i, j, gap = select(active)
                if i is None or j is None or gap < tol:
                    break
                counter = 1
            else:
                break
        Ki, Kj = kern.column(i), kern.column(j)
        yi, yj = yp[i], yp[j]
        ai, aj = alpha[i], alpha[j]
        Kij = Ki[j]
        if yi != yj:
            quad = max(2.0 - 2.0 * Kij, TAU)     # QD_i + QD_j + 2 Q_ij, Q_ij = -K_ij
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ai_new, aj_new = ai + delta, aj + delta
            if diff > 0:
                if aj_new < 0:
                    aj_new, ai_new = 0.0, diff
            elif ai_new < 0:
                ai_new, aj_new = 0.0, -diff
            if diff > 0:
                if ai_new > C:
                    ai_new, aj_new = C, C - diff
            elif aj_new > C:
                aj_new, ai_new = C, C + diff
        else:
            quad = max(2.0 - 2.0 * Kij, TAU)
            delta = (G[i] - G[j]) / quad
            s = ai + aj
            ai_new, aj_new = ai - delta, aj + delta
            if s > C:
                if ai_new > C:
                    ai_new, aj_new = C, s - C
            elif aj_new < 0:
                aj_new, ai_new = 0.0, s
            if s > C:
                if aj_new > C:
                    aj_new, ai_new = C, s - C
            elif ai_new < 0:
                ai_new, aj_new = 0.0, s
        da, db = ai_new - ai, aj_new - aj
        alpha[i], alpha[j] = ai_new, aj_new
        # G_t += y_t y_i K_ti da + y_t y_j K_tj db, on the working set only
        idx = active
        G[idx] += yp[idx] * (yi * da * Ki[idx] + yj * db * Kj[idx])
        it += 1

    converged = it < max_iter
    if active.size < n:
        reconstruct()
    if not converged:
        _, _, gap = select(np.arange(n))
    # bias: average over free vectors, else midpoint of the feasible interval
    yg = yp * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(yg[free].mean())
    else:
        ub, lb = np.inf, -np.inf
        for t in range(n):
            at_up = alpha[t] >= C
            if (at_up and yp[t] < 0) or (alpha[t] <= 0 and yp[t] > 0):
                ub = min(ub, yg[t])
            else:
                lb = max(lb, yg[t])
        rho = (ub + lb) / 2 if np.isfinite(ub) and np.isfinite(lb) else float(yg.mean())
    sv = np.flatnonzero(alpha > 0)
    orig = perm[sv]
    order = np.argsort(orig)
    sv, orig = sv[order], orig[order]
    return BinarySVM(Xp[sv].copy(), alpha[sv] * yp[sv], -rho, gamma, C, converged, it,
                     float(gap), orig)


# ----------------------------------------------------------------- multiclass

@dataclass
class TrainedModel:
    classes: list[Label]
    models: dict[Label, BinarySVM]
    norm_stats: NormStats
    fingerprint: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.norm_stats.mean.size

    def save(self, path) -> None:
        header = {
            "format": "callscat-model", "classes": [c.value for c in self.classes],
            "dim": self.dim, "fingerprint": self.fingerprint, "meta": self.meta,
            "models": {c.value: {"C": m.C, "gamma": m.gamma, "bias": m.bias, "n_sv": int(len(m.dual_coef)),
                                 "converged": m.converged, "n_iter": m.n_iter, "kkt_gap": m.kkt_gap}
                       for c, m in self.models.items()},
        }
        arrays = {"norm_mean": self.norm_stats.mean, "norm_std": self.norm_stats.std,
                  "norm_degenerate": self.norm_stats.degenerate.astype(np.uint8)}
        for c, m in self.models.items():
            arrays[f"sv_{c.value}"] = m.support_vectors
            arrays[f"coef_{c.value}"] = m.dual_coef
        write_container(path, header, arrays)

    @classmethod
    def load(cls, path) -> "TrainedModel":
        h, a = read_container(path)
        models = {}
        for name, m in h["models"].items():
            models[Label(name)] = BinarySVM(a[f"sv_{name}"], a[f"coef_{name}"], m["bias"], m["gamma"], m["C"],
                                            m["converged"], m["n_iter"], m["kkt_gap"])
        stats = NormStats(a["norm_mean"], a["norm_std"], a["norm_degenerate"].astype(bool))
        return cls([Label(c) for c in h["classes"]], models, stats, h["fingerprint"], h["meta"])


def predict(model: TrainedModel, X) -> tuple[list[Label], np.ndarray]:
    """Frame labels and one-vs-rest decision values ``[n, n_classes]``.

    ``X`` holds raw (un-normalised) features. The label is the class with
    the largest decision value, or background when every value is negative.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.size == 0:
        return [], np.zeros((0, len(model.classes)))
    if X.ndim != 2 or X.shape[1] != model.dim:
        raise InputError(f"feature dim {X.shape[-1]} does not match the model ({model.dim})")
    if not np.all(np.isfinite(X)):
        raise InputError("features contain non-finite values")
    Z = zscore_apply(X, model.norm_stats)
    dec = np.column_stack([model.models[c].decision(Z) for c in model.classes])
    best = np.argmax(dec, axis=1)
    labels = [model.classes[b] if dec[k, b] >= 0 else Label.BACKGROUND for k, b in enumerate(best)]
    return labels, dec


# ----------------------------------------------------------------- protocol

@dataclass
class SplitPlan:
    held_out_subject: str
    train_subjects: list[str]
    train_keys: list            # canonical (sorted) keys of training frames
    folds: np.ndarray           # fold 1..n_folds for each training key
    skipped: tuple = ()         # call types with no training frame

    def fold_of(self) -> dict:
        return dict(zip(self.train_keys, self.folds.tolist()))


def make_splits(keys: Sequence, subjects: Sequence[str], labels: Sequence, n_folds: int = 3,
                seed: int = 0, types: Sequence[Label] = CALL_TYPES) -> list[SplitPlan]:
    """Leave-one-subject-out plans with label-stratified folds.

    ``keys`` identify frames (sortable, unique), ``subjects`` and ``labels``
    are per frame. Rows are sorted by key before the seeded shuffle, so the
    folds do not depend on input order. Within each label the shuffled
    frames are dealt round-robin, continuing the count across labels, which
    keeps every fold's per-label share within one frame of equal.
    """
    if not (len(keys) == len(subjects) == len(labels)):
        raise InputError("keys, subjects and labels differ in length")
    subj_ids = sorted(set(subjects))
    if len(subj_ids) < 2:
        raise ProtocolError("leave-one-subject-out needs at least two subjects")
    rows = sorted(zip(keys, subjects, [Label(v) for v in labels]), key=lambda r: r[0])
    if len({r[0] for r in rows}) != len(rows):
        raise InputError("frame keys must be unique")
    plans = []
    for s_idx, held in enumerate(subj_ids):
        train = [r for r in rows if r[1] != held]
        tkeys = [r[0] for r in train]
        folds = stratified_folds(tkeys, [r[2] for r in train], n_folds, [seed, s_idx])
        present = {r[2] for r in train}
        skipped = tuple(t for t in types if t not in present)
        if skipped:
            warnings.warn(f"split {held}: no training frames of {', '.join(t.value for t in skipped)}; "
                          "class skipped", stacklevel=2)
        plans.append(SplitPlan(held, [s for s in subj_ids if s != held], tkeys, folds, skipped))
    return plans


def stratified_folds(keys: Sequence, labels: Sequence, n_folds: int = 3, seed=0) -> np.ndarray:
    """Fold number (1..n_folds) per row, aligned with ``keys``.

    Rows are canonicalised by sorting on key, shuffled per label with a
    seeded generator and dealt round-robin, the count running on across
    labels so that fold sizes differ by at most one.
    """
    if n_folds < 1:
        raise ParameterError("n_folds must be >= 1")
    labels = [Label(v) for v in labels]
    order = sorted(range(len(keys)), key=lambda i: keys[i])
    rng = np.random.default_rng(seed)
    folds = np.zeros(len(keys), dtype=int)
    counter = 0
    for lab in sorted(set(labels), key=lambda v: v.value):
        group = [i for i in order if labels[i] == lab]
        for k in rng.permutation(len(group)):
            folds[group[k]] = counter % n_folds + 1
            counter += 1
    return folds


def _quiet_fit(X) -> NormStats:
    # constant dimensions are expected here (e.g. silent bands); they stay flagged in the stats
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return zscore_fit(X)


def _fits(n: int, cache_mb: float) -> bool:
    """Whether an n x n float64 matrix fits the kernel cache budget."""
    return n * n * 8 <= cache_mb * 2 ** 20


def _signs(labels, c) -> np.ndarray:
    return np.array([1 if v == c else -1 for v in labels], dtype=int)


def _f_measure(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    tp = int(np.sum((y_true > 0) & (y_pred > 0)))
    fp = int(np.sum((y_true <= 0) & (y_pred > 0)))
    fn = int(np.sum((y_true > 0) & (y_pred <= 0)))
    return 2 * tp / (2 * tp + fp + fn) if tp else 0.0


@dataclass
class GridResult:
    best: dict                  # class -> (C, gamma)
    scores: dict                # class -> {(C, gamma): mean validation F}


def grid_search(X: np.ndarray, labels: Sequence, folds: np.ndarray, classes: Sequence[Label],
                C_grid=C_GRID, gamma_grid=GAMMA_GRID, tol: float = 1e-3,
                max_iter: int = 100_000, seed: int = 0, cache_mb: float = 256.0) -> GridResult:
    """Mean validation F-measure of every (C, gamma) per class over the folds.

    Normalisation statistics are refitted on the training part of each
    fold. Ties go to the smaller C, then the smaller gamma.
    """
    if not C_grid or not gamma_grid:
        raise ParameterError("grids must be non-empty")
    X = np.asarray(X, dtype=np.float64)
    labels = [Label(v) for v in labels]
    folds = np.asarray(folds)
    pairs = sorted((float(c), float(g)) for c in C_grid for g in gamma_grid)
    fold_ids = sorted(set(folds.tolist()))
    prepared = []
    for k in fold_ids:
        tr, va = folds != k, folds == k
        stats = _quiet_fit(X[tr])
        Ztr, Zva = zscore_apply(X[tr], stats), zscore_apply(X[va], stats)
        Dtr = sq_distances(Ztr) if _fits(len(Ztr), cache_mb) else None
        prepared.append((tr, va, Ztr, Zva, Dtr, sq_distances(Zva, Ztr) if Dtr is not None else None))
    scores = {c: {p: 0.0 for p in pairs} for c in classes}
    for c in classes:
        y = _signs(labels, c)
        for tr, va, Ztr, Zva, Dtr, Dva in prepared:
            ytr, yva = y[tr], y[va]
            if not ((ytr > 0).any() and (ytr < 0).any()):
                continue
            for C, g in pairs:
                m = train_binary_svm(Ztr, ytr, C, g, tol, max_iter, seed, cache_mb, sqdist=Dtr)
                if Dva is not None and len(m.dual_coef):
                    dec = np.exp(-g * Dva[:, m.support_index]) @ m.dual_coef + m.bias
                else:
                    dec = m.decision(Zva)
                scores[c][(C, g)] += _f_measure(yva, dec) / len(fold_ids)
    best = {}
    for c in classes:
        top = None
        for p in pairs:
            if top is None or scores[c][p] > scores[c][top] + 1e-12:
                top = p
        best[c] = top
    return GridResult(best, scores)


def train_model(X: np.ndarray, labels: Sequence, classes: Sequence[Label], params: dict,
                tol: float = 1e-3, max_iter: int = 100_000, seed: int = 0, cache_mb: float = 256.0,
                meta: dict | None = None) -> TrainedModel:
    """One-vs-rest models; ``params`` maps class -> (C, gamma)."""
    X = np.asarray(X, dtype=np.float64)
    labels = [Label(v) for v in labels]
    stats = _quiet_fit(X)
    Z = zscore_apply(X, stats)
    D = sq_distances(Z) if _fits(len(Z), cache_mb) else None
    models = {}
    used = []
    for c in classes:
        y = _signs(labels, c)
        if not ((y > 0).any() and (y < 0).any()):
            continue
        C, g = params[c]
        models[c] = train_binary_svm(Z, y, C, g, tol, max_iter, seed, cache_mb, sqdist=D)
        used.append(c)
    if not used:
        raise InputError("no class has both positive and negative training frames")
    model = TrainedModel(used, models, stats, meta=dict(meta or {}))
    model.fingerprint = model_fingerprint(model)
    return model


def model_fingerprint(model: TrainedModel) -> str:
    h = hashlib.sha256()
    h.update(json.dumps({"classes": [c.value for c in model.classes],
                         "params": {c.value: [m.C, m.gamma] for c, m in model.models.items()},
                         "meta": model.meta}, sort_keys=True).encode())
    for c in model.classes:
        m = model.models[c]
        h.update(np.ascontiguousarray(m.dual_coef).tobytes())
        h.update(np.float64(m.bias).tobytes())
    return h.hexdigest()[:16]


def dual_objective(model: BinarySVM, X, y) -> float:
    """Dual objective ``e'a - 1/2 a'Qa`` of a trained model on its data."""
    K = rbf_kernel(model.support_vectors, model.support_vectors, model.gamma)
    c = model.dual_coef
    return float(np.abs(c).sum() - 0.5 * c @ K @ c)


def kkt_residual(model: BinarySVM, X, y) -> float:
    """Maximal KKT violation (m - M) of a trained model on its training set."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    alpha = np.zeros(len(y))
    alpha[model.support_index] = np.abs(model.dual_coef)
    f = model.decision(X) - model.bias
    G = y * f - 1.0
    viol = -y * G
    C = model.C
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    return float(viol[up].max(initial=-np.inf) - viol[low].min(initial=np.inf))
