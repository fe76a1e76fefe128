"""BPR triple sampling over train edges."""

import logging

import numpy as np

from .datasets import TRAIN

log = logging.getLogger(__name__)


class TripleSampler:
    """Draws (anchor, positive, negative) triples for one anchor kind.

    Anchors are drawn uniformly from those with at least one train edge;
    positives uniformly from the anchor's train items; negatives by
    rejection from items outside the anchor's train set. Anchors that
    interact with every item cannot supply negatives and are dropped
    with a warning at construction.
    """

    def __init__(self, interactions, rng):
        self.n_items = interactions.n_items
        self.rng = rng
        self._pos = interactions.items_per_anchor((TRAIN,))
        self._pos_sets = interactions.sets_per_anchor((TRAIN,))
        eligible = []
        for a, items in enumerate(self._pos):
            if len(items) == 0:
                continue
            if len(items) >= self.n_items:
                log.warning("anchor %d interacts with all items; skipped", a)
                continue
            eligible.append(a)
        if not eligible:
            raise ValueError("no anchor has train edges to sample from")
        self.eligible = np.array(eligible, dtype=np.int64)

    def sample(self, batch_size):
        anchors = self.rng.choice(self.eligible, size=batch_size, replace=True)
        pos = np.empty(batch_size, dtype=np.int64)
        neg = np.empty(batch_size, dtype=np.int64)
        for i, a in enumerate(anchors):
            items = self._pos[a]
            pos[i] = items[self.rng.integers(len(items))]
            taken = self._pos_sets[a]
            while True:
                j = int(self.rng.integers(self.n_items))
                if j not in taken:
                    neg[i] = j
                    break
        return anchors, pos, neg
