"""Group-level interest pooling and stochastic interest selection.

Members' n-th interests are attention-pooled into one vector per group.
A group then mixes its M pooled vectors with weights from a
Gumbel-Softmax over the scores e_g . pooled_n. The noise-free softmax of
the same scores is the evaluation-time path, so selection is
deterministic outside training.

The scores enter the softmax raw, not log-transformed: dot products can
be non-positive, and the raw form still reduces to the plain softmax
selection distribution when the noise is dropped.
"""

import numpy as np

from . import autodiff as ag
from .autodiff import Tensor

GUMBEL_EPS = 1e-10


def sample_gumbel(rng, shape):
    """Standard Gumbel draws via -log(-log(uniform)), clamped away from {0, 1}."""
    eps = np.clip(rng.random(shape), GUMBEL_EPS, 1.0 - GUMBEL_EPS)
    return -np.log(-np.log(eps))


def attention_pool(interest_rows, member_uid, member_gid, n_groups, att_vec):
    """Pool one interest channel over group members.

    interest_rows: (|U|, d) tensor for a single interest. member_uid and
    member_gid are parallel arrays flattening the membership relation.
    Weights are a per-group softmax of att_vec . i_u; output is (n_groups, d).
    Groups are guaranteed at least one member by dataset validation.
    """
    rows = ag.gather_rows(interest_rows, member_uid)
    scores = ag.matmul(rows, att_vec)
    gamma = ag.segment_softmax(scores, member_gid, n_groups)
    weighted = ag.mul(ag.reshape(gamma, (len(member_uid), 1)), rows)
    return ag.segment_sum(weighted, member_gid, n_groups)


def selection_weights(group_emb, pooled, tau, noise=None, hard=False):
    """Mixture weights over the M pooled interest vectors, one row per group.

    pooled is a list of (|G|, d) tensors. noise is an optional constant
    (|G|, M) Gumbel array; omit it for the deterministic softmax path.
    hard snaps each row to a one-hot at its argmax, with gradients taken
    from the soft weights.
    """
    psi = ag.stack_cols([ag.rowwise_dot(group_emb, p) for p in pooled])
    logits = psi if noise is None else ag.add(psi, Tensor(noise))
    omega = ag.softmax_rows(logits, tau)
    if hard:
        onehot = np.zeros_like(omega.data)
        onehot[np.arange(omega.data.shape[0]), omega.data.argmax(axis=1)] = 1.0
        omega = ag.straight_through(omega, onehot)
    return omega


def mix_interests(omega, pooled):
    """i*_g = sum_n omega[:, n] * pooled_n."""
    n_groups = pooled[0].shape[0]
    out = None
    for n, p in enumerate(pooled):
        term = ag.mul(ag.reshape(ag.take_col(omega, n), (n_groups, 1)), p)
        out = term if out is None else ag.add(out, term)
    return out
