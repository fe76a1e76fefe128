"""Training configuration: defaults, validation, JSON round trip."""

import dataclasses
import json
from dataclasses import dataclass

VARIANTS = ("full", "mean_members", "uniform_mix", "no_interest_reg", "hard_select")

# the comparison harness historically labels the variants by letter
VARIANT_ALIASES = {
    "a": "mean_members",
    "b": "uniform_mix",
    "c": "no_interest_reg",
    "d": "hard_select",
}

INTEREST_MODES = ("gate", "fc1", "fc2", "table")
POOLINGS = ("mean", "sum", "max")
TASKS = ("user", "group")


@dataclass
class TrainConfig:
    embed_dim: int = 64
    n_interests: int = 4
    n_layers: int = 3
    temperature: float = 0.5
    sim_threshold: float = 0.1
    user_task_weight: float = 0.9
    interest_reg_weight: float = 0.4
    lr: float = 0.005
    weight_decay: float = 1e-4
    batch_user: int = 2048
    batch_group: int = 256
    epochs: int = 200
    patience: int = 20
    seed: int = 0
    variant: str = "full"
    interest_mode: str = "gate"
    use_groups: bool = True
    pooling: str = "mean"
    select_task: str = "user"
    eval_every: int = 1

    def validate(self):
        checks = [
            (self.embed_dim >= 1, "embed_dim must be >= 1"),
            (self.n_interests >= 1, "n_interests must be >= 1"),
            (self.n_layers >= 0, "n_layers must be >= 0"),
            (self.temperature > 0.0, "temperature must be > 0"),
            (0.0 <= self.sim_threshold <= 1.0, "sim_threshold must be in [0, 1]"),
            (0.0 <= self.user_task_weight <= 1.0, "user_task_weight must be in [0, 1]"),
            (self.interest_reg_weight >= 0.0, "interest_reg_weight must be >= 0"),
            (self.lr >= 0.0, "lr must be >= 0"),
            (self.weight_decay >= 0.0, "weight_decay must be >= 0"),
            (self.batch_user >= 1, "batch_user must be >= 1"),
            (self.batch_group >= 1, "batch_group must be >= 1"),
            (self.epochs >= 1, "epochs must be >= 1"),
            (self.patience >= 0, "patience must be >= 0"),
            (self.eval_every >= 1, "eval_every must be >= 1"),
            (self.variant in VARIANTS, f"variant must be one of {VARIANTS}"),
            (self.interest_mode in INTEREST_MODES, f"interest_mode must be one of {INTEREST_MODES}"),
            (self.pooling in POOLINGS, f"pooling must be one of {POOLINGS}"),
            (self.select_task in TASKS, f"select_task must be one of {TASKS}"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(f"invalid config: {msg}")
        return self

    def as_dict(self):
        return dataclasses.asdict(self)

    def replace(self, **kwargs):
        return dataclasses.replace(self, **kwargs)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        if cfg.variant not in VARIANTS:
            try:
                cfg = cfg.replace(variant=resolve_variant(cfg.variant))
            except ValueError:
                pass  # let validate() report it with the canonical list
        return cfg.validate()

    @classmethod
    def from_json(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_json(self, path):
        with open(path, "w") as f:
            json.dump(self.as_dict(), f, indent=2, sort_keys=True)
            f.write("\n")


def resolve_variant(name):
    """Map a variant spelling (letter or full name, any case) to its canonical name."""
    low = str(name).strip().lower()
    if low in VARIANTS:
        return low
    if low in VARIANT_ALIASES:
        return VARIANT_ALIASES[low]
    raise ValueError(f"unknown variant {name!r}")


def baseline_config(name, base=None):
    """Structural baselines: groups off, and layers zeroed for plain MF."""
    cfg = base or TrainConfig()
    if name == "mf":
        return cfg.replace(use_groups=False, n_layers=0, variant="full")
    if name == "lightgcn":
        return cfg.replace(use_groups=False, variant="full")
    raise ValueError(f"unknown baseline {name!r}")
