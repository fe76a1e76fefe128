"""Dataset loading, holdout splits, group-item synthesis, and the train graph.

Canonical on-disk layout for a dataset directory:

    meta.json          {"n_users": U, "n_items": I, "n_groups": G}
    users.tsv          one "user<TAB>item" edge per line
    groups_items.tsv   one "group<TAB>item" edge per line (optional; may be synthesized)
    group_members.txt  one "group u1,u2,..." line per group

All ids are 0-based and dense. A prepared directory additionally holds
splits_user.tsv and splits_group.tsv with "anchor<TAB>item<TAB>split" rows.
"""

import hashlib
import json
import logging
import math
import os

import numpy as np

from .sparse import SparseMatrix

log = logging.getLogger(__name__)

TRAIN, VALID, TEST = 0, 1, 2
SPLIT_NAMES = ("train", "valid", "test")

META_FILE = "meta.json"
USER_EDGES_FILE = "users.tsv"
GROUP_EDGES_FILE = "groups_items.tsv"
MEMBERS_FILE = "group_members.txt"


class Interactions:
    """Anchor-item edge list with a split label per edge."""

    def __init__(self, n_anchors, n_items, anchors=(), items=(), splits=None):
        self.n_anchors = int(n_anchors)
        self.n_items = int(n_items)
        self.anchors = np.asarray(anchors, dtype=np.int64)
        self.items = np.asarray(items, dtype=np.int64)
        if self.anchors.shape != self.items.shape:
            raise ValueError("anchor and item arrays differ in length")
        if splits is None:
            splits = np.zeros(len(self.anchors), dtype=np.int8)
        self.splits = np.asarray(splits, dtype=np.int8)
        if self.splits.shape != self.anchors.shape:
            raise ValueError("split labels differ in length from edges")
        if len(self.anchors):
            if self.anchors.min() < 0 or self.anchors.max() >= self.n_anchors:
                raise ValueError("anchor id out of range")
            if self.items.min() < 0 or self.items.max() >= self.n_items:
                raise ValueError("item id out of range")

    def __len__(self):
        return len(self.anchors)

    def edges_of(self, split):
        mask = self.splits == split
        return self.anchors[mask], self.items[mask]

    def items_per_anchor(self, splits=(TRAIN,)):
        """List (len n_anchors) of item-id arrays drawn from the given splits."""
        keep = np.isin(self.splits, np.asarray(splits, dtype=np.int8))
        out = [[] for _ in range(self.n_anchors)]
        for a, v in zip(self.anchors[keep], self.items[keep]):
            out[a].append(v)
        return [np.array(sorted(lst), dtype=np.int64) for lst in out]

    def sets_per_anchor(self, splits=(TRAIN,)):
        keep = np.isin(self.splits, np.asarray(splits, dtype=np.int8))
        out = [set() for _ in range(self.n_anchors)]
        for a, v in zip(self.anchors[keep], self.items[keep]):
            out[a].add(int(v))
        return out

    def to_sparse(self, split=None):
        m = SparseMatrix(self.n_anchors, self.n_items)
        for a, v, s in zip(self.anchors, self.items, self.splits):
            if split is None or s == split:
                m.set(int(a), int(v), 1.0)
        return m


class Dataset:
    def __init__(self, n_users, n_items, n_groups, user_items, group_items, group_members):
        self.n_users = int(n_users)
        self.n_items = int(n_items)
        self.n_groups = int(n_groups)
        self.user_items = user_items
        self.group_items = group_items
        self.group_members = group_members
        self._members = None
        self._groups_of = None

    def validate(self):
        if self.group_members.shape != (self.n_groups, self.n_users):
            raise ValueError("membership matrix shape does not match counts")
        for g in range(self.n_groups):
            if not self.group_members.row_indices(g):
                raise ValueError(f"group {g} has no members")
        if (self.user_items.n_anchors, self.user_items.n_items) != (self.n_users, self.n_items):
            raise ValueError("user interactions do not match counts")
        if (self.group_items.n_anchors, self.group_items.n_items) != (self.n_groups, self.n_items):
            raise ValueError("group interactions do not match counts")
        return self

    def members_of(self, g):
        if self._members is None:
            self._members = [
                np.array(self.group_members.row_indices(i), dtype=np.int64)
                for i in range(self.n_groups)
            ]
        return self._members[g]

    def groups_of(self, u):
        if self._groups_of is None:
            lists = [[] for _ in range(self.n_users)]
            for g in range(self.n_groups):
                for u_ in self.members_of(g):
                    lists[u_].append(g)
            self._groups_of = [np.array(lst, dtype=np.int64) for lst in lists]
        return self._groups_of[u]

    def fingerprint(self):
        """Content hash covering counts, edges, split labels, and memberships."""
        h = hashlib.sha256()
        h.update(json.dumps([self.n_users, self.n_items, self.n_groups]).encode())
        for inter in (self.user_items, self.group_items):
            order = np.lexsort((inter.items, inter.anchors))
            for i in order:
                h.update(b"%d %d %d\n" % (inter.anchors[i], inter.items[i], inter.splits[i]))
        for g, u, _ in self.group_members.entries():
            h.update(b"m%d %d\n" % (g, u))
        return h.hexdigest()


def _parse_edge_line(line, lineno, path):
    parts = line.rstrip("\n").split("\t")
    if len(parts) != 2:
        raise ValueError(f"{path}:{lineno}: expected 'id<TAB>item', got {line!r}")
    try:
        a, v = int(parts[0]), int(parts[1])
    except ValueError:
        raise ValueError(f"{path}:{lineno}: non-integer id in {line!r}") from None
    if a < 0 or v < 0:
        raise ValueError(f"{path}:{lineno}: negative id in {line!r}")
    return a, v


def load_interactions(path, n_anchors, n_items):
    """Read 'id<TAB>item' edges; dedup keeps first occurrence."""
    edges = []
    seen = set()
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            a, v = _parse_edge_line(line, lineno, path)
            if a >= n_anchors:
                raise ValueError(f"{path}:{lineno}: anchor id {a} out of range (n={n_anchors})")
            if v >= n_items:
                raise ValueError(f"{path}:{lineno}: item id {v} out of range (n={n_items})")
            if (a, v) not in seen:
                seen.add((a, v))
                edges.append((a, v))
    return edges


def load_group_members(path, n_users, n_groups):
    members = SparseMatrix(n_groups, n_users)
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'gid u1,u2,...', got {line!r}")
            try:
                g = int(parts[0])
                users = [int(tok) for tok in parts[1].split(",") if tok != ""]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-integer id in {line!r}") from None
            if not users:
                raise ValueError(f"{path}:{lineno}: group {g} lists no members")
            if g < 0 or g >= n_groups:
                raise ValueError(f"{path}:{lineno}: group id {g} out of range (n={n_groups})")
            for u in users:
                if u < 0 or u >= n_users:
                    raise ValueError(f"{path}:{lineno}: user id {u} out of range (n={n_users})")
                members.set(g, u, 1.0)
    return members


def load_dataset(dataset_dir):
    """Load the canonical layout; group edges are optional (synthesized later)."""
    meta_path = os.path.join(dataset_dir, META_FILE)
    try:
        with open(meta_path) as f:
            meta = json.load(f)
    except FileNotFoundError:
        raise FileNotFoundError(f"missing {meta_path}") from None
    try:
        n_users, n_items, n_groups = (int(meta[k]) for k in ("n_users", "n_items", "n_groups"))
    except KeyError as e:
        raise ValueError(f"{meta_path}: missing key {e}") from None

    ue = load_interactions(os.path.join(dataset_dir, USER_EDGES_FILE), n_users, n_items)
    user_items = Interactions(
        n_users, n_items, [a for a, _ in ue], [v for _, v in ue]
    )

    ge_path = os.path.join(dataset_dir, GROUP_EDGES_FILE)
    if os.path.exists(ge_path):
        ge = load_interactions(ge_path, n_groups, n_items)
        group_items = Interactions(n_groups, n_items, [a for a, _ in ge], [v for _, v in ge])
    else:
        group_items = Interactions(n_groups, n_items)

    members = load_group_members(os.path.join(dataset_dir, MEMBERS_FILE), n_users, n_groups)
    return Dataset(n_users, n_items, n_groups, user_items, group_items, members).validate()


def save_dataset(dataset, dataset_dir):
    os.makedirs(dataset_dir, exist_ok=True)
    with open(os.path.join(dataset_dir, META_FILE), "w") as f:
        json.dump(
            {"n_users": dataset.n_users, "n_items": dataset.n_items, "n_groups": dataset.n_groups},
            f,
            indent=2,
        )
        f.write("\n")
    for fname, inter in ((USER_EDGES_FILE, dataset.user_items), (GROUP_EDGES_FILE, dataset.group_items)):
        with open(os.path.join(dataset_dir, fname), "w") as f:
            order = np.lexsort((inter.items, inter.anchors))
            for i in order:
                f.write(f"{inter.anchors[i]}\t{inter.items[i]}\n")
    with open(os.path.join(dataset_dir, MEMBERS_FILE), "w") as f:
        for g in range(dataset.n_groups):
            us = ",".join(str(u) for u in dataset.group_members.row_indices(g))
            f.write(f"{g} {us}\n")


def split_holdout(interactions, seed):
    """Label each edge train/valid/test, 80/10/10 per anchor.

    Valid and test each get max(1, floor(n/10)) edges so every held-out
    anchor is testable; anchors with fewer than 3 edges hold nothing out.
    """
    rng = np.random.default_rng(seed)
    splits = np.zeros(len(interactions), dtype=np.int8)
    by_anchor = [[] for _ in range(interactions.n_anchors)]
    for idx, a in enumerate(interactions.anchors):
        by_anchor[a].append(idx)
    for a in range(interactions.n_anchors):
        idxs = by_anchor[a]
        n = len(idxs)
        if n < 3:
            continue
        # order by item id first so labeling depends only on the edge set
        idxs = sorted(idxs, key=lambda i: interactions.items[i])
        perm = rng.permutation(n)
        n_hold = max(1, n // 10)
        for j in perm[:n_hold]:
            splits[idxs[j]] = VALID
        for j in perm[n_hold : 2 * n_hold]:
            splits[idxs[j]] = TEST
    return Interactions(
        interactions.n_anchors,
        interactions.n_items,
        interactions.anchors.copy(),
        interactions.items.copy(),
        splits,
    )


def synthesize_group_items(dataset, cap=30):
    """Build group-item edges from members' train interactions.

    Per group, items are ranked by how many member train edges touch them,
    ties broken toward the smaller item id, and the top `cap` are kept.
    """
    train_items = dataset.user_items.items_per_anchor((TRAIN,))
    anchors, items = [], []
    for g in range(dataset.n_groups):
        counts = {}
        for u in dataset.members_of(g):
            for v in train_items[u]:
                counts[int(v)] = counts.get(int(v), 0) + 1
        ranked = sorted(counts, key=lambda v: (-counts[v], v))
        for v in ranked[:cap]:
            anchors.append(g)
            items.append(v)
    return Interactions(dataset.n_groups, dataset.n_items, anchors, items)


def build_norm_adjacency(dataset):
    """User-item adjacency over train edges, weight 1/(sqrt(deg_u) sqrt(deg_v))."""
    users, items = dataset.user_items.edges_of(TRAIN)
    deg_u = np.bincount(users, minlength=dataset.n_users).astype(np.float64)
    deg_v = np.bincount(items, minlength=dataset.n_items).astype(np.float64)
    adj = SparseMatrix(dataset.n_users, dataset.n_items)
    for u, v in zip(users, items):
        adj.set(int(u), int(v), 1.0 / math.sqrt(deg_u[u] * deg_v[v]))
    return adj


def subsample(dataset, fraction, seed):
    """Keep a user fraction, then compact users, items, and groups.

    Groups survive if any member does; the item universe shrinks to items
    still referenced by a kept edge. Split labels are dropped (re-split after).
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    rng = np.random.default_rng(seed)
    n_keep = max(1, math.ceil(fraction * dataset.n_users))
    kept_users = np.sort(rng.choice(dataset.n_users, size=n_keep, replace=False))
    user_map = {int(u): i for i, u in enumerate(kept_users)}

    ua = [user_map[int(u)] for u, _ in zip(*_all_edges(dataset.user_items)) if int(u) in user_map]
    uv = [int(v) for u, v in zip(*_all_edges(dataset.user_items)) if int(u) in user_map]

    kept_groups = []
    memberships = []
    for g in range(dataset.n_groups):
        ms = [user_map[int(u)] for u in dataset.members_of(g) if int(u) in user_map]
        if ms:
            memberships.append(ms)
            kept_groups.append(g)
    group_map = {g: i for i, g in enumerate(kept_groups)}

    ga = [group_map[int(g)] for g, _ in zip(*_all_edges(dataset.group_items)) if int(g) in group_map]
    gv = [int(v) for g, v in zip(*_all_edges(dataset.group_items)) if int(g) in group_map]

    kept_items = sorted(set(uv) | set(gv))
    item_map = {v: i for i, v in enumerate(kept_items)}
    uv = [item_map[v] for v in uv]
    gv = [item_map[v] for v in gv]

    members = SparseMatrix(len(kept_groups), len(kept_users))
    for gi, ms in enumerate(memberships):
        for u in ms:
            members.set(gi, u, 1.0)

    ds = Dataset(
        len(kept_users),
        max(1, len(kept_items)),
        len(kept_groups),
        Interactions(len(kept_users), max(1, len(kept_items)), ua, uv),
        Interactions(len(kept_groups), max(1, len(kept_items)), ga, gv),
        members,
    )
    log.info(
        "subsampled to %d users, %d items, %d groups", ds.n_users, ds.n_items, ds.n_groups
    )
    return ds.validate()


def _all_edges(interactions):
    return interactions.anchors, interactions.items


def write_splits(interactions, path):
    with open(path, "w") as f:
        order = np.lexsort((interactions.items, interactions.anchors))
        for i in order:
            f.write(
                f"{interactions.anchors[i]}\t{interactions.items[i]}"
                f"\t{SPLIT_NAMES[interactions.splits[i]]}\n"
            )


def read_splits(interactions, path):
    """Attach split labels from a splits file to a matching edge list."""
    label_of = {name: code for code, name in enumerate(SPLIT_NAMES)}
    seen = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3 or parts[2] not in label_of:
                raise ValueError(f"{path}:{lineno}: expected 'anchor<TAB>item<TAB>split'")
            seen[(int(parts[0]), int(parts[1]))] = label_of[parts[2]]
    splits = np.zeros(len(interactions), dtype=np.int8)
    for i, (a, v) in enumerate(zip(interactions.anchors, interactions.items)):
        key = (int(a), int(v))
        if key not in seen:
            raise ValueError(f"{path}: no split label for edge {key}")
        splits[i] = seen.pop(key)
    if seen:
        raise ValueError(f"{path}: {len(seen)} labeled edges missing from the dataset")
    return Interactions(
        interactions.n_anchors,
        interactions.n_items,
        interactions.anchors.copy(),
        interactions.items.copy(),
        splits,
    )


def load_prepared(dataset_dir):
    """Load a dataset plus the split labels written by the prepare step."""
    ds = load_dataset(dataset_dir)
    user_splits = os.path.join(dataset_dir, "splits_user.tsv")
    group_splits = os.path.join(dataset_dir, "splits_group.tsv")
    if not os.path.exists(user_splits):
        raise FileNotFoundError(f"{dataset_dir} is not prepared (missing splits_user.tsv)")
    ds.user_items = read_splits(ds.user_items, user_splits)
    if os.path.exists(group_splits):
        ds.group_items = read_splits(ds.group_items, group_splits)
    return ds
