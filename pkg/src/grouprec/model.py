"""The full recommender: interests -> group mixing -> fusion -> propagation.

One forward pass covers the whole user, item, and group tables; mini-batching
happens only in the losses, which index into the returned tables. Running a
forward outside a gradient tape is the (deterministic) inference path.

Structural reductions double as baselines: use_groups=False with n_layers=0
is plain matrix factorization, use_groups=False with n_layers>0 is the
linear graph-convolution recommender both trained with the same BPR loss.
"""

from dataclasses import dataclass

import numpy as np

from . import aggregation, fusion, graphconv
from .autodiff import Tensor
from .config import TrainConfig
from .datasets import build_norm_adjacency
from .gating import INIT_STD, make_interest_generator
from .losses import pairwise_abs_cosine
from .sparse import SparseMatrix


@dataclass
class ForwardState:
    user_final: Tensor
    item_final: Tensor
    group_fused: Tensor  # None when groups are disabled
    omega: Tensor  # None unless the interest mixer ran
    interests: list  # None unless interests were generated


class GroupRecommender:
    def __init__(self, dataset, config: TrainConfig, rng):
        config.validate()
        self.cfg = config
        self.dataset = dataset
        d = config.embed_dim

        self.user_emb = Tensor(
            rng.normal(0.0, INIT_STD, size=(dataset.n_users, d)), requires_grad=True
        )
        self.item_emb = Tensor(
            rng.normal(0.0, INIT_STD, size=(dataset.n_items, d)), requires_grad=True
        )

        adj = build_norm_adjacency(dataset).tocsr()
        self.adj = adj
        self.adj_t = adj.T.tocsr()

        self.group_emb = None
        self.att_vec = None
        self.generator = None
        if config.use_groups:
            if dataset.n_groups == 0:
                raise ValueError("use_groups set but the dataset has no groups")
            self.group_emb = Tensor(
                rng.normal(0.0, INIT_STD, size=(dataset.n_groups, d)), requires_grad=True
            )
            member_pairs = [
                (g, int(u)) for g in range(dataset.n_groups) for u in dataset.members_of(g)
            ]
            self.member_gid = np.array([g for g, _ in member_pairs], dtype=np.int64)
            self.member_uid = np.array([u for _, u in member_pairs], dtype=np.int64)
            self.pool_csr, self.pool_coef = fusion.build_user_pool(dataset, config.pooling)
            self.max_lists = None
            if config.pooling == "max":
                self.max_lists = [
                    dataset.groups_of(u).tolist() for u in range(dataset.n_users)
                ]
            if config.variant == "mean_members":
                mean_members = SparseMatrix(dataset.n_groups, dataset.n_users)
                for g in range(dataset.n_groups):
                    ms = dataset.members_of(g)
                    for u in ms:
                        mean_members.set(g, int(u), 1.0 / len(ms))
                self.member_mean_csr = mean_members.tocsr()
            else:
                self.att_vec = Tensor(rng.normal(0.0, INIT_STD, size=d), requires_grad=True)
                self.generator = make_interest_generator(
                    config.interest_mode,
                    config.n_interests,
                    d,
                    rng,
                    n_users=dataset.n_users,
                )

    def named_params(self):
        pairs = [("user_emb", self.user_emb), ("item_emb", self.item_emb)]
        if self.group_emb is not None:
            pairs.append(("group_emb", self.group_emb))
        if self.att_vec is not None:
            pairs.append(("att_vec", self.att_vec))
        if self.generator is not None:
            pairs.extend(self.generator.named_params())
        return pairs

    def tensors(self):
        return [t for _, t in self.named_params()]

    def named_params_data(self):
        return [(name, t.data) for name, t in self.named_params()]

    def param_count(self):
        return sum(t.data.size for t in self.tensors())

    def forward(self, noise_rng=None):
        """Build all final representations; noise_rng=None is deterministic."""
        cfg = self.cfg
        group_fused = None
        omega = None
        interests = None
        if not cfg.use_groups:
            users0 = self.user_emb
        else:
            n_groups = self.dataset.n_groups
            if cfg.variant == "mean_members":
                from . import autodiff as ag

                member_pool = ag.spmm(self.member_mean_csr, self.user_emb)
                group_fused = fusion.fuse_groups(self.group_emb, member_pool)
            else:
                interests = self.generator.interests(self.user_emb)
                pooled = [
                    aggregation.attention_pool(
                        t, self.member_uid, self.member_gid, n_groups, self.att_vec
                    )
                    for t in interests
                ]
                if cfg.variant == "uniform_mix":
                    m = cfg.n_interests
                    omega = Tensor(np.full((n_groups, m), 1.0 / m))
                else:
                    noise = (
                        aggregation.sample_gumbel(noise_rng, (n_groups, cfg.n_interests))
                        if noise_rng is not None
                        else None
                    )
                    omega = aggregation.selection_weights(
                        self.group_emb,
                        pooled,
                        cfg.temperature,
                        noise=noise,
                        hard=cfg.variant == "hard_select",
                    )
                group_interest = aggregation.mix_interests(omega, pooled)
                group_fused = fusion.fuse_groups(self.group_emb, group_interest)
            users0 = fusion.fuse_users(
                self.user_emb,
                group_fused,
                self.pool_csr,
                self.pool_coef,
                max_member_groups=self.max_lists,
            )
        user_final, item_final = graphconv.propagate(
            self.adj, self.adj_t, users0, self.item_emb, cfg.n_layers
        )
        return ForwardState(user_final, item_final, group_fused, omega, interests)

    def full_scores(self, task, state=None):
        """Dense anchor-by-item score matrix for ranking, no tape involved."""
        if state is None:
            state = self.forward()
        items = state.item_final.data
        if task == "user":
            return state.user_final.data @ items.T
        if task == "group":
            if state.group_fused is None:
                raise ValueError("group scoring requested with groups disabled")
            return state.group_fused.data @ items.T
        raise ValueError(f"unknown task {task!r}")

    def interest_similarity(self, state=None):
        """Mean |cosine| between interest channels; identity if they don't exist."""
        if state is None:
            state = self.forward()
        if state.interests is None:
            return np.eye(max(1, self.cfg.n_interests))
        return pairwise_abs_cosine(state.interests)
