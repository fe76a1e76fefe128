"""Ranking losses and the interest-diversity regularizer."""

from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ag
from .autodiff import Tensor


@dataclass
class LossBreakdown:
    """Reported per-step (or per-epoch mean) loss components.

    total always equals the weighted sum of the four components. The
    quadratic parameter penalty reaches the gradients through optimizer
    weight decay rather than the tape, but it is reported here so the
    decomposition stays checkable.
    """

    l_bpr: float
    l_group: float
    reg_interest: float
    reg_params: float
    total: float

    @classmethod
    def build(cls, l_bpr, l_group, reg_interest, reg_params, user_w, reg_w, decay):
        total = (
            user_w * l_bpr
            + (1.0 - user_w) * l_group
            + reg_w * reg_interest
            + decay * reg_params
        )
        if not np.isfinite(total):
            raise FloatingPointError(
                f"non-finite loss: bpr={l_bpr} group={l_group} "
                f"reg={reg_interest} params={reg_params}"
            )
        return cls(float(l_bpr), float(l_group), float(reg_interest), float(reg_params), float(total))

    def as_dict(self):
        return asdict(self)


def bpr_loss(pos_scores, neg_scores):
    """Mean of -log sigmoid(pos - neg) over the batch.

    softplus(neg - pos) is the same quantity without the intermediate
    sigmoid, so large score gaps stay finite.
    """
    if pos_scores.shape[0] == 0:
        raise ValueError("empty batch")
    return ag.tmean(ag.softplus(ag.sub(neg_scores, pos_scores)))


def interest_regularizer(interests, user_idx, threshold):
    """Per-user mean of masked pairwise interest similarities.

    For the users in user_idx, sums cosine(i_p, i_q) over pairs p < q whose
    |cosine| is at least the threshold; the mask is computed from forward
    values only and is constant under backward. threshold 0 keeps every
    pair. Returns a scalar tensor, zero when there is a single interest.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    m = len(interests)
    n = len(user_idx)
    if m < 2 or n == 0:
        return Tensor(0.0)
    rows = [ag.gather_rows(t, user_idx) for t in interests]
    acc = None
    for p in range(m):
        for q in range(p + 1, m):
            sim = ag.cosine_rows(rows[p], rows[q])
            mask = (np.abs(sim.data) >= threshold).astype(np.float64)
            term = ag.tsum(ag.mul(sim, Tensor(mask)))
            acc = term if acc is None else ag.add(acc, term)
    return ag.scale(acc, 1.0 / n)


def pairwise_abs_cosine(interests, user_idx=None):
    """M x M matrix of mean |cosine| between interest channels, diagonal 1."""
    m = len(interests)
    mats = [t.data if user_idx is None else t.data[user_idx] for t in interests]
    norms = [np.linalg.norm(a, axis=1) for a in mats]
    out = np.eye(m)
    for p in range(m):
        for q in range(p + 1, m):
            denom = norms[p] * norms[q]
            ok = denom > ag.COSINE_NORM_EPS
            cos = np.zeros(len(denom))
            cos[ok] = np.einsum("ij,ij->i", mats[p], mats[q])[ok] / denom[ok]
            out[p, q] = out[q, p] = float(np.mean(np.abs(cos))) if len(cos) else 0.0
    return out
