"""Fusing interest signal into group vectors and group signal into users."""

import numpy as np

from . import autodiff as ag
from .autodiff import Tensor


def fuse_groups(group_emb, group_interest):
    """e*_g = (e_g + i*_g) / 2."""
    return ag.scale(ag.add(group_emb, group_interest), 0.5)


def build_user_pool(dataset, mode="mean"):
    """Sparse (|U|, |G|) matrix pooling a user's groups, plus a keep coefficient.

    mean rows carry 1/|G(u)|, sum rows carry 1. The coefficient vector is
    0.5 where the user has groups and 1.0 where fusion is bypassed, so
    that fused = coef * e_u + 0.5 * pool @ e*_g is the half-half blend for
    joiners and the identity for everyone else.
    """
    from .sparse import SparseMatrix

    counts = np.zeros(dataset.n_users)
    for g in range(dataset.n_groups):
        for u in dataset.group_members.row_indices(g):
            counts[u] += 1
    pool = SparseMatrix(dataset.n_users, dataset.n_groups)
    for g in range(dataset.n_groups):
        for u in dataset.group_members.row_indices(g):
            pool.set(u, g, 1.0 if mode == "sum" else 1.0 / counts[u])
    coef = np.where(counts > 0, 0.5, 1.0)
    return pool.tocsr(), coef


def fuse_users(user_emb, fused_groups, pool_csr, coef, max_member_groups=None):
    """e_u-hat = (e_u + pooled groups) / 2, identity when the user has none.

    With max pooling, max_member_groups carries per-user group id lists and
    the pooled vector is the coordinatewise max over the user's fused group
    rows (argmax picked outside the tape, gradients routed to the winners).
    """
    if max_member_groups is not None:
        n_users, d = user_emb.shape
        row_idx = np.zeros((n_users, d), dtype=np.int64)
        has = np.zeros((n_users, 1))
        for u, gs in enumerate(max_member_groups):
            if len(gs):
                block = fused_groups.data[gs]
                row_idx[u] = np.asarray(gs)[block.argmax(axis=0)]
                has[u] = 1.0
        picked = ag.gather_elements(fused_groups, row_idx)
        pooled = ag.mul(Tensor(has), picked)
    else:
        pooled = ag.spmm(pool_csr, fused_groups)
    kept = ag.mul(Tensor(coef[:, None]), user_emb)
    return ag.add(kept, ag.scale(pooled, 0.5))
