"""The dual-task training loop with validation-based model selection."""

import csv
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ag
from .autodiff import Tape, Tensor
from .datasets import TRAIN, VALID
from .evaluate import evaluate_ranking
from .graphconv import score_pairs
from .losses import LossBreakdown, bpr_loss, interest_regularizer
from .model import GroupRecommender
from .optim import Adam
from .sampling import TripleSampler

log = logging.getLogger(__name__)

LOG_COLUMNS = (
    "epoch",
    "l_bpr",
    "l_group",
    "reg_interest",
    "reg_params",
    "total",
    "val_metric",
    "seconds",
)


@dataclass
class TrainResult:
    best_epoch: int
    best_metric: float
    epochs_run: int
    history: list = field(default_factory=list)  # one LossBreakdown dict + val per epoch
    stopped_early: bool = False


class Trainer:
    """Owns a model, its optimizer, and the samplers for both tasks.

    Each step draws one user batch and one group batch, runs a single
    full-table forward, and backpropagates the combined loss. Validation
    NDCG@10 on the configured task picks the kept parameters; training
    stops once it fails to improve for `patience` epochs in a row (at
    least one).
    """

    def __init__(self, dataset, config):
        config.validate()
        self.dataset = dataset
        self.cfg = config
        param_rng, sample_rng, group_rng, self.noise_rng = np.random.default_rng(
            config.seed
        ).spawn(4)
        self.model = GroupRecommender(dataset, config, param_rng)
        self.opt = Adam(self.model.tensors(), lr=config.lr, weight_decay=config.weight_decay)
        self.user_sampler = TripleSampler(dataset.user_items, sample_rng)
        self.group_sampler = None
        if config.use_groups and np.any(dataset.group_items.splits == TRAIN):
            self.group_sampler = TripleSampler(dataset.group_items, group_rng)
        n_train = int(np.sum(dataset.user_items.splits == TRAIN))
        self.steps_per_epoch = max(1, math.ceil(n_train / config.batch_user))
        self._members_cache = {}

    def _reg_users(self, user_anchors, group_anchors):
        parts = [user_anchors]
        for g in group_anchors:
            g = int(g)
            if g not in self._members_cache:
                self._members_cache[g] = self.dataset.members_of(g)
            parts.append(self._members_cache[g])
        return np.unique(np.concatenate(parts))

    def _step(self):
        cfg = self.cfg
        with Tape() as tape:
            state = self.model.forward(noise_rng=self.noise_rng)

            ua, up, un = self.user_sampler.sample(cfg.batch_user)
            pos = score_pairs(state.user_final, state.item_final, ua, up)
            neg = score_pairs(state.user_final, state.item_final, ua, un)
            l_user = bpr_loss(pos, neg)
            loss = ag.scale(l_user, cfg.user_task_weight)

            l_group_val = 0.0
            ga = np.zeros(0, dtype=np.int64)
            if self.group_sampler is not None and cfg.user_task_weight < 1.0:
                ga, gp, gn = self.group_sampler.sample(cfg.batch_group)
                gpos = score_pairs(state.group_fused, state.item_final, ga, gp)
                gneg = score_pairs(state.group_fused, state.item_final, ga, gn)
                l_group = bpr_loss(gpos, gneg)
                l_group_val = l_group.item()
                loss = ag.add(loss, ag.scale(l_group, 1.0 - cfg.user_task_weight))

            reg_val = 0.0
            apply_reg = (
                state.interests is not None
                and cfg.interest_reg_weight > 0.0
                and cfg.variant != "no_interest_reg"
            )
            if apply_reg:
                reg = interest_regularizer(
                    state.interests, self._reg_users(ua, ga), cfg.sim_threshold
                )
                reg_val = reg.item()
                loss = ag.add(loss, ag.scale(reg, cfg.interest_reg_weight))

            tape.backward(loss)
        self.opt.step()
        self.opt.zero_grad()

        reg_params = sum(float(np.sum(t.data * t.data)) for t in self.model.tensors())
        return LossBreakdown.build(
            l_user.item(),
            l_group_val,
            reg_val,
            reg_params,
            cfg.user_task_weight,
            cfg.interest_reg_weight if apply_reg else 0.0,
            cfg.weight_decay,
        )

    def _validation_metric(self):
        metrics, n = evaluate_ranking(
            self.model, self.dataset, self.cfg.select_task, ks=(10,), target=VALID
        )
        if n == 0:
            log.warning("no %s anchors with validation edges; metric pinned to 0", self.cfg.select_task)
            return 0.0
        return metrics["ndcg@10"]

    def train(self, log_path=None):
        cfg = self.cfg
        best_metric = -np.inf
        best_epoch = 0
        best_params = None
        streak = 0
        history = []
        stopped = False
        writer = None
        log_file = None
        if log_path is not None:
            log_file = open(log_path, "w", newline="")
            writer = csv.writer(log_file)
            writer.writerow(LOG_COLUMNS)
        try:
            for epoch in range(1, cfg.epochs + 1):
                t0 = time.perf_counter()
                acc = np.zeros(5)
                for _ in range(self.steps_per_epoch):
                    br = self._step()
                    acc += (br.l_bpr, br.l_group, br.reg_interest, br.reg_params, br.total)
                acc /= self.steps_per_epoch

                val = None
                if epoch % cfg.eval_every == 0:
                    val = self._validation_metric()
                    if val > best_metric:
                        best_metric = val
                        best_epoch = epoch
                        best_params = [
                            (name, t.data.copy()) for name, t in self.model.named_params()
                        ]
                        streak = 0
                    else:
                        streak += 1
                seconds = time.perf_counter() - t0
                row = {
                    "epoch": epoch,
                    "l_bpr": acc[0],
                    "l_group": acc[1],
                    "reg_interest": acc[2],
                    "reg_params": acc[3],
                    "total": acc[4],
                    "val_metric": val,
                    "seconds": seconds,
                }
                history.append(row)
                if writer:
                    writer.writerow([row[c] for c in LOG_COLUMNS])
                log.info(
                    "epoch %d: total %.4f bpr %.4f group %.4f reg %.4f val %s (%.2fs)",
                    epoch,
                    acc[4],
                    acc[0],
                    acc[1],
                    acc[2],
                    "-" if val is None else f"{val:.4f}",
                    seconds,
                )
                if streak >= max(1, cfg.patience):
                    stopped = True
                    break
        finally:
            if log_file:
                log_file.close()

        if best_params is not None:
            by_name = dict(best_params)
            for name, tensor in self.model.named_params():
                tensor.data = by_name[name]
        else:
            best_epoch = len(history)
            best_metric = 0.0
        return TrainResult(
            best_epoch=best_epoch,
            best_metric=float(best_metric),
            epochs_run=len(history),
            history=history,
            stopped_early=stopped,
        )


def build_model_from_arrays(dataset, config, named_arrays):
    """Rebuild a model and overwrite its parameters with checkpoint arrays."""
    model = GroupRecommender(dataset, config, np.random.default_rng(config.seed))
    have = dict(named_arrays)
    for name, tensor in model.named_params():
        if name not in have:
            raise ValueError(f"checkpoint is missing tensor {name!r}")
        arr = have.pop(name)
        if arr.shape != tensor.data.shape:
            raise ValueError(
                f"checkpoint tensor {name!r} has shape {arr.shape}, model wants {tensor.data.shape}"
            )
        tensor.data = arr.astype(np.float64, copy=True)
    if have:
        raise ValueError(f"checkpoint has unexpected tensors: {sorted(have)}")
    return model
