"""Linear-chain CRF head: scoring, partition, marginals, NLL, Viterbi.

All recursions run in log space with max-shifted logsumexp. Brute-force
enumeration twins (for small instances) serve as test oracles and are
kept deliberately independent of the dynamic programs.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, RefusalError


@dataclass
class CrfParams:
    """transitions[i, j] scores label j following label i."""

    transitions: np.ndarray
    start: np.ndarray
    end: np.ndarray

    def __post_init__(self) -> None:
        l = self.start.shape[0]
        if self.transitions.shape != (l, l) or self.end.shape != (l,):
            raise DimensionError(
                f"inconsistent CRF shapes: transitions {self.transitions.shape}, "
                f"start {self.start.shape}, end {self.end.shape}"
            )
        if not (
            np.isfinite(self.transitions).all()
            and np.isfinite(self.start).all()
            and np.isfinite(self.end).all()
        ):
            raise DimensionError("CRF parameters must be finite")


def zero_crf(n_labels: int) -> CrfParams:
    return CrfParams(
        transitions=np.zeros((n_labels, n_labels)),
        start=np.zeros(n_labels),
        end=np.zeros(n_labels),
    )


def _logsumexp(v: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(v, axis=axis, keepdims=True)
    out = m.squeeze(axis) + np.log(np.exp(v - m).sum(axis=axis))
    return out


def _check(e: np.ndarray, p: CrfParams) -> tuple:
    if e.ndim != 2:
        raise DimensionError(f"emissions must be [T, L], got shape {e.shape}")
    t_len, l = e.shape
    if t_len < 1:
        raise DimensionError("emissions need at least one timestep")
    if p.start.shape[0] != l:
        raise DimensionError(
            f"emissions have {l} labels but CRF has {p.start.shape[0]}"
        )
    return t_len, l


def score_sequence(e: np.ndarray, y, p: CrfParams) -> float:
    """start[y_0] + sum_t e[t, y_t] + sum_t trans[y_t, y_t+1] + end[y_T-1]."""
    t_len, l = _check(e, p)
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (t_len,):
        raise DimensionError(
            f"label sequence length {y.shape} does not match {t_len} timesteps"
        )
    score = float(p.start[y[0]] + p.end[y[-1]])
    score += float(e[np.arange(t_len), y].sum())
    if t_len > 1:
        score += float(p.transitions[y[:-1], y[1:]].sum())
    return score


def _forward(e: np.ndarray, p: CrfParams) -> np.ndarray:
    t_len, l = e.shape
    alpha = np.empty((t_len, l))
    alpha[0] = p.start + e[0]
    for t in range(1, t_len):
        alpha[t] = _logsumexp(alpha[t - 1][:, None] + p.transitions, axis=0) + e[t]
    return alpha


def _backward(e: np.ndarray, p: CrfParams) -> np.ndarray:
    t_len, l = e.shape
    beta = np.empty((t_len, l))
    beta[-1] = p.end
    for t in range(t_len - 2, -1, -1):
        beta[t] = _logsumexp(p.transitions + (e[t + 1] + beta[t + 1])[None, :], axis=1)
    return beta


def log_partition(e: np.ndarray, p: CrfParams) -> float:
    """log of the summed exp-scores of all L^T label sequences."""
    _check(e, p)
    alpha = _forward(e, p)
    return float(_logsumexp(alpha[-1] + p.end))


def posterior_marginals(e: np.ndarray, p: CrfParams) -> np.ndarray:
    """M[t, j] = P(y_t = j); rows sum to 1."""
    _check(e, p)
    alpha = _forward(e, p)
    beta = _backward(e, p)
    logz = float(_logsumexp(alpha[-1] + p.end))
    return np.exp(alpha + beta - logz)


def nll(e: np.ndarray, y, p: CrfParams) -> float:
    """Negative log-likelihood: log_partition - score_sequence (>= 0)."""
    return log_partition(e, p) - score_sequence(e, y, p)


def nll_backward(e: np.ndarray, y, p: CrfParams):
    """Returns (loss, grad_e, grad_transitions, grad_start, grad_end).

    grad_e = posterior marginals - one_hot(y); transition grads are
    expected pairwise counts minus observed counts.
    """
    t_len, l = _check(e, p)
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (t_len,):
        raise DimensionError(
            f"label sequence length {y.shape} does not match {t_len} timesteps"
        )
    alpha = _forward(e, p)
    beta = _backward(e, p)
    logz = float(_logsumexp(alpha[-1] + p.end))
    marg = np.exp(alpha + beta - logz)

    grad_e = marg.copy()
    grad_e[np.arange(t_len), y] -= 1.0

    grad_trans = np.zeros((l, l))
    for t in range(t_len - 1):
        pair = np.exp(
            alpha[t][:, None]
            + p.transitions
            + (e[t + 1] + beta[t + 1])[None, :]
            - logz
        )
        grad_trans += pair
        grad_trans[y[t], y[t + 1]] -= 1.0

    grad_start = marg[0].copy()
    grad_start[y[0]] -= 1.0
    grad_end = marg[-1].copy()
    grad_end[y[-1]] -= 1.0

    loss = logz - score_sequence(e, y, p)
    return loss, grad_e, grad_trans, grad_start, grad_end


def viterbi(e: np.ndarray, p: CrfParams):
    """Best-scoring label sequence and its score.

    Ties break toward the smallest label index at every backpointer
    (np.argmax returns the first maximum).
    """
    t_len, l = _check(e, p)
    delta = p.start + e[0]
    backptr = np.empty((t_len, l), dtype=np.int64)
    for t in range(1, t_len):
        cand = delta[:, None] + p.transitions
        backptr[t] = np.argmax(cand, axis=0)
        delta = cand[backptr[t], np.arange(l)] + e[t]
    final = delta + p.end
    last = int(np.argmax(final))
    score = float(final[last])
    labels = [0] * t_len
    labels[-1] = last
    for t in range(t_len - 1, 0, -1):
        labels[t - 1] = int(backptr[t, labels[t]])
    return labels, score


def _check_enum_size(t_len: int, l: int) -> None:
    if l**t_len > 10**6:
        raise RefusalError(
            f"enumeration over {l}^{t_len} sequences exceeds the 1e6 budget"
        )


def brute_force_logZ(e: np.ndarray, p: CrfParams) -> float:
    """Exact log-partition by enumerating every label sequence."""
    t_len, l = _check(e, p)
    _check_enum_size(t_len, l)
    scores = np.array(
        [
            score_sequence(e, seq, p)
            for seq in itertools.product(range(l), repeat=t_len)
        ]
    )
    m = float(scores.max())
    return m + float(np.log(np.exp(scores - m).sum()))


def brute_force_best(e: np.ndarray, p: CrfParams):
    """Exact best sequence; among ties, lexicographically smallest labels."""
    t_len, l = _check(e, p)
    _check_enum_size(t_len, l)
    best_seq = None
    best = -np.inf
    for seq in itertools.product(range(l), repeat=t_len):
        s = score_sequence(e, seq, p)
        if s > best:
            best = s
            best_seq = seq
    return list(best_seq), float(best)
