"""Tuple-level linear prediction and the loss upper-bound machinery.

A weight vector ``w`` scores each point through its code, ``q_i = w . s_i``,
and the joint score of a candidate label tuple is ``sum_i y'_i q_i``.  The
tuple maximizing the joint score decomposes into per-point signs, which is
what :func:`predict` returns.

Training minimizes an upper bound of the tuple loss instead of the loss
itself.  The bound is the maximum over all candidate tuples of

    F(y'') = sum_i (y''_i - y_i) q_i + loss(y'', y)

and the maximizing tuples (the tie set) also supply the gradient direction
for ``w`` and for each code.  Because the loss depends on a candidate only
through its false-negative/false-positive counts, the maximum over the
2^n tuple space collapses to a search over count pairs: for fixed counts
``(a, b)`` the best candidate flips the ``a`` lowest-scoring true positives
and the ``b`` highest-scoring true negatives.  :func:`argmax_F_oracle`
implements that search in O(n log n + n_pos * n_neg); the exponential
:func:`argmax_F_bruteforce` exists as its reference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import (
    DegenerateClassError,
    MeasureKind,
    as_label_array,
    loss_grid,
    tuple_loss,
)

__all__ = [
    "ArgmaxResult",
    "point_scores",
    "joint_score",
    "predict",
    "F_value",
    "argmax_F_bruteforce",
    "argmax_F_oracle",
    "upper_bound",
    "flip_coefficients",
    "loss_gradient_w",
    "loss_gradient_s",
]

BRUTEFORCE_MAX_POINTS = 20

# Chunk of flip counts `a` evaluated at once in the oracle grid search.
_ORACLE_CHUNK = 256


@dataclass(frozen=True)
class ArgmaxResult:
    """Outcome of maximizing F over the candidate tuple space.

    ``maximizers`` holds the full tie set in brute-force mode and a single
    deterministic representative in oracle mode; ``counts`` is the
    ``(fn, fp)`` pair of the first maximizer.
    """

    max_value: float
    maximizers: tuple[np.ndarray, ...]
    counts: tuple[int, int]


def _as_codes(codes) -> np.ndarray:
    arr = np.asarray(codes, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("codes must be an m-by-n matrix with one code per column")
    return arr


def point_scores(w, codes) -> np.ndarray:
    """Per-point scores ``q_i = w . s_i`` for codes stored columnwise."""
    w = np.asarray(w, dtype=np.float64)
    arr = _as_codes(codes)
    if w.shape != (arr.shape[0],):
        raise ValueError(f"dimension mismatch: w {w.shape} vs codes {arr.shape}")
    return w @ arr


def joint_score(w, codes, labels) -> float:
    """Joint score ``sum_i y'_i (w . s_i)`` of a candidate label tuple."""
    q = point_scores(w, codes)
    y = as_label_array(labels)
    if y.size != q.size:
        raise ValueError(f"dimension mismatch: {q.size} points vs {y.size} labels")
    return float(q @ y)


def predict(w, codes) -> np.ndarray:
    """Label tuple with the largest joint score.

    The joint score decomposes over points, so the argmax is elementwise
    ``sign(w . s_i)`` with zero scores mapped to +1.
    """
    q = point_scores(w, codes)
    return np.where(q >= 0.0, 1, -1).astype(np.int64)


def F_value(w, codes, y_true, y_cand, kind: MeasureKind) -> float:
    """Mismatch-weighted score plus tuple loss of one candidate tuple."""
    q = point_scores(w, codes)
    y = as_label_array(y_true)
    cand = as_label_array(y_cand)
    if y.size != q.size or cand.size != q.size:
        raise ValueError("dimension mismatch between codes and label tuples")
    linear = float((cand - y) @ q)
    return linear + tuple_loss(kind, y, cand)


def _all_label_tuples(n: int) -> np.ndarray:
    """All 2^n label tuples; row r maps bit i of r to the label of point i."""
    indices = np.arange(2**n, dtype=np.int64)
    bits = (indices[:, None] >> np.arange(n)) & 1
    return (2 * bits - 1).astype(np.int8)


def argmax_F_bruteforce(
    w, codes, y_true, kind: MeasureKind, max_points: int = BRUTEFORCE_MAX_POINTS
) -> ArgmaxResult:
    """Exact maximum of F by enumerating the whole tuple space.

    Returns every maximizer (the tie set, compared at exact float equality).
    Guarded to small n; use :func:`argmax_F_oracle` beyond the guard.
    """
    q = point_scores(w, codes)
    y = as_label_array(y_true)
    n = y.size
    if q.size != n:
        raise ValueError(f"dimension mismatch: {q.size} points vs {n} labels")
    if n > max_points:
        raise ValueError(
            f"brute-force enumeration refused for n={n} > {max_points}; "
            "use argmax_F_oracle instead"
        )
    n_pos = int(np.count_nonzero(y == 1))
    n_neg = n - n_pos
    candidates = _all_label_tuples(n)
    fn = np.count_nonzero((candidates == -1) & (y == 1)[None, :], axis=1)
    fp = np.count_nonzero((candidates == 1) & (y == -1)[None, :], axis=1)
    if kind is MeasureKind.PRBEP:
        keep = fn == fp
        candidates, fn, fp = candidates[keep], fn[keep], fp[keep]
    linear = (candidates - y[None, :]).astype(np.float64) @ q
    values = linear + loss_grid(kind, fn, fp, n_pos, n_neg)
    max_value = float(values.max())
    selected = np.flatnonzero(values == max_value)
    maximizers = tuple(candidates[i].astype(np.int64) for i in selected)
    counts = (int(fn[selected[0]]), int(fp[selected[0]]))
    return ArgmaxResult(max_value, maximizers, counts)


def argmax_F_oracle(w, codes, y_true, kind: MeasureKind) -> ArgmaxResult:
    """Count-parameterized exact maximizer of F.

    True positives are sorted by score ascending and true negatives by score
    descending (ties stable by index); prefix sums then give the best
    candidate for every flip-count pair ``(a, b)`` in O(1).  PRBEP restricts
    the search to its ``a == b`` slice.  Returns one representative
    maximizer, the lexicographically first ``(a, b)`` among ties.
    """
    q = point_scores(w, codes)
    y = as_label_array(y_true)
    n = y.size
    if q.size != n:
        raise ValueError(f"dimension mismatch: {q.size} points vs {n} labels")
    n_pos = int(np.count_nonzero(y == 1))
    n_neg = n - n_pos
    if kind in (MeasureKind.PRBEP, MeasureKind.AUC) and (n_pos == 0 or n_neg == 0):
        raise DegenerateClassError(
            f"degenerate class: {kind.value} needs both classes in the truth "
            f"(n_pos={n_pos}, n_neg={n_neg})"
        )
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == -1)
    pos_sorted = pos[np.argsort(q[pos], kind="stable")]
    neg_sorted = neg[np.argsort(-q[neg], kind="stable")]
    pos_prefix = np.concatenate(([0.0], np.cumsum(q[pos_sorted])))
    neg_prefix = np.concatenate(([0.0], np.cumsum(q[neg_sorted])))

    if kind is MeasureKind.PRBEP:
        t = np.arange(min(n_pos, n_neg) + 1)
        values = -2.0 * pos_prefix[t] + 2.0 * neg_prefix[t] + loss_grid(kind, t, t, n_pos, n_neg)
        best_flat = int(np.argmax(values))
        best_value = float(values[best_flat])
        best_a = best_b = best_flat
    elif kind is MeasureKind.AUC:
        # The pairwise loss collapses to fn/(2 n_pos) + fp/(2 n_neg), so the
        # two flip counts maximize independently; first argmax per axis is
        # the lexicographically smallest maximizing pair.
        pos_part = -2.0 * pos_prefix + np.arange(n_pos + 1) / (2.0 * n_pos)
        neg_part = 2.0 * neg_prefix + np.arange(n_neg + 1) / (2.0 * n_neg)
        best_a = int(np.argmax(pos_part))
        best_b = int(np.argmax(neg_part))
        best_value = float(pos_part[best_a] + neg_part[best_b])
    else:
        neg_linear = 2.0 * neg_prefix
        b_range = np.arange(n_neg + 1, dtype=np.float64)
        rows = min(_ORACLE_CHUNK, n_pos + 1)
        block_buffer = np.empty((rows, n_neg + 1))
        denom_buffer = np.empty_like(block_buffer)
        best_value = -np.inf
        best_a = best_b = 0
        for a_start in range(0, n_pos + 1, _ORACLE_CHUNK):
            a = np.arange(a_start, min(a_start + _ORACLE_CHUNK, n_pos + 1))
            block = block_buffer[: a.size]
            np.subtract(neg_linear[None, :], (2.0 * pos_prefix[a])[:, None], out=block)
            if n_pos > 0:
                # F1 loss inlined: 1 - 2 tp / (2 tp + a + b), denominator
                # positive everywhere once a positive exists
                tp2 = 2.0 * (n_pos - a)
                denom = denom_buffer[: a.size]
                np.add((tp2 + a)[:, None], b_range[None, :], out=denom)
                np.divide(tp2[:, None], denom, out=denom)
                block += 1.0
                block -= denom
            else:
                block += loss_grid(kind, a[:, None], b_range[None, :], n_pos, n_neg)
            row, col = np.unravel_index(int(np.argmax(block)), block.shape)
            if float(block[row, col]) > best_value:
                best_value = float(block[row, col])
                best_a = int(a[row])
                best_b = int(col)
    representative = y.copy()
    representative[pos_sorted[:best_a]] = -1
    representative[neg_sorted[:best_b]] = 1
    return ArgmaxResult(best_value, (representative,), (best_a, best_b))


def upper_bound(w, codes, y_true, kind: MeasureKind) -> float:
    """Upper bound of the tuple loss of :func:`predict` at these variables.

    Defined as the tie-set average of F over the maximizers, which equals
    the maximum itself since every member of the tie set attains it.
    """
    return argmax_F_oracle(w, codes, y_true, kind).max_value


def flip_coefficients(y_true, maximizers, c3: float) -> np.ndarray:
    """Per-point mismatch coefficients averaged over the tie set.

    Entry i is ``(c3 / |tie set|) * sum over maximizers of (y''_i - y_i)``;
    the loss gradient for code i is this coefficient times ``w`` and the
    loss part of the ``w`` gradient is ``codes @ coefficients``.
    """
    y = as_label_array(y_true)
    if len(maximizers) == 0:
        raise ValueError("empty maximizer set")
    stacked = np.stack([as_label_array(m) for m in maximizers])
    if stacked.shape[1] != y.size:
        raise ValueError("maximizer length does not match the truth tuple")
    return (c3 / stacked.shape[0]) * (stacked - y[None, :]).sum(axis=0).astype(np.float64)


def loss_gradient_w(w, codes, y_true, maximizers, c2: float, c3: float) -> np.ndarray:
    """Gradient in ``w`` of the complexity term plus frozen-tie-set bound."""
    w = np.asarray(w, dtype=np.float64)
    arr = _as_codes(codes)
    if w.shape != (arr.shape[0],):
        raise ValueError(f"dimension mismatch: w {w.shape} vs codes {arr.shape}")
    return c2 * w + arr @ flip_coefficients(y_true, maximizers, c3)


def loss_gradient_s(i: int, w, y_true, maximizers, c3: float) -> np.ndarray:
    """Loss-term gradient for code i, fed to the coding gradient as-is."""
    y = as_label_array(y_true)
    if not 0 <= i < y.size:
        raise IndexError(f"point index {i} out of range for n={y.size}")
    coefficients = flip_coefficients(y_true, maximizers, c3)
    return coefficients[i] * np.asarray(w, dtype=np.float64)
