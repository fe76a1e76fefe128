"""Full-ranking evaluation: Recall@K and NDCG@K over all items.

Every anchor's scores cover the whole item catalog; items the anchor
already touched in the masked splits are pushed to -inf before ranking,
and anchors with nothing held out in the target split are skipped.
"""

import math

import numpy as np

from .datasets import TRAIN, VALID, TEST


def recall_at_k(topk_items, relevant, k):
    if not relevant:
        raise ValueError("empty relevant set")
    hits = sum(1 for v in topk_items[:k] if v in relevant)
    return hits / len(relevant)


def ndcg_at_k(topk_items, relevant, k):
    if not relevant:
        raise ValueError("empty relevant set")
    dcg = sum(
        1.0 / math.log2(rank + 1)
        for rank, v in enumerate(topk_items[:k], start=1)
        if v in relevant
    )
    ideal = sum(1.0 / math.log2(r + 1) for r in range(1, min(len(relevant), k) + 1))
    return dcg / ideal


def top_k(scores_row, banned, k):
    """Indices of the k best items with banned ones excluded."""
    s = scores_row.astype(np.float64, copy=True)
    if banned:
        s[list(banned)] = -np.inf
    k = min(k, len(s))
    part = np.argpartition(-s, k - 1)[:k]
    return part[np.argsort(-s[part], kind="stable")]


def evaluate_scores(score_matrix, eval_sets, mask_sets, ks):
    """Mean metrics over anchors with nonempty eval sets.

    Returns ({"recall@k": v, "ndcg@k": v, ...}, n_evaluated).
    """
    kmax = max(ks)
    sums = {f"{m}@{k}": 0.0 for m in ("recall", "ndcg") for k in ks}
    n = 0
    for a, relevant in enumerate(eval_sets):
        if not relevant:
            continue
        ranked = list(top_k(score_matrix[a], mask_sets[a], kmax))
        for k in ks:
            sums[f"recall@{k}"] += recall_at_k(ranked, relevant, k)
            sums[f"ndcg@{k}"] += ndcg_at_k(ranked, relevant, k)
        n += 1
    if n == 0:
        return {key: 0.0 for key in sums}, 0
    return {key: val / n for key, val in sums.items()}, n


def evaluate_ranking(model, dataset, task, ks=(5, 10), target=TEST, state=None):
    """Rank all items for every anchor of the task and average the metrics.

    target=TEST masks train+valid items; target=VALID masks train only
    (the model-selection path during training).
    """
    interactions = dataset.user_items if task == "user" else dataset.group_items
    mask_splits = (TRAIN, VALID) if target == TEST else (TRAIN,)
    eval_sets = interactions.sets_per_anchor((target,))
    mask_sets = interactions.sets_per_anchor(mask_splits)
    scores = model.full_scores(task, state=state)
    return evaluate_scores(scores, eval_sets, mask_sets, ks)


def popularity_scores(dataset):
    """One static score per item: train count, ties resolved to smaller ids.

    The id tie-break rides on a sub-unit penalty, which cannot reorder
    distinct integer counts.
    """
    users, items = dataset.user_items.edges_of(TRAIN)
    counts = np.bincount(items, minlength=dataset.n_items).astype(np.float64)
    return counts - np.arange(dataset.n_items) / (dataset.n_items + 1.0)


def evaluate_popularity(dataset, task, ks=(5, 10), target=TEST):
    interactions = dataset.user_items if task == "user" else dataset.group_items
    mask_splits = (TRAIN, VALID) if target == TEST else (TRAIN,)
    eval_sets = interactions.sets_per_anchor((target,))
    mask_sets = interactions.sets_per_anchor(mask_splits)
    row = popularity_scores(dataset)
    scores = np.broadcast_to(row, (interactions.n_anchors, dataset.n_items))
    return evaluate_scores(scores, eval_sets, mask_sets, ks)
