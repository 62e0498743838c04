"""Plain-text run configuration.

One flat `key = value` namespace with dotted section prefixes (dataset.*,
statistic.*, model.*, schedule.*, training.*, sampling.*). Unknown keys
are rejected by name; every key has a default, so a config file only
states what differs. `resolved_lines` renders the full effective config
for logging.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import datasets, statistics
from .errors import ConfigError
from .model import ScoreModel, new_model
from .sampling import SamplerConfig
from .training import NoiseSchedule, TrainConfig, make_geometric_schedule, schedule_from_data

# key -> (type, default). Types: int, float, str, bool, intlist.
SCHEMA: dict[str, tuple[str, str]] = {
    "seed": ("int", "0"),
    "threads": ("int", "1"),
    "dataset.kind": ("str", "toy2d"),
    "dataset.n": ("int", "200"),
    "dataset.toy_kind": ("str", "gaussian"),
    "dataset.h": ("int", "12"),
    "dataset.w": ("int", "12"),
    "dataset.interior_h": ("int", "8"),
    "dataset.interior_w": ("int", "6"),
    "dataset.shape": ("str", "sphere"),
    "dataset.N": ("int", "64"),
    "dataset.noise": ("float", "0.02"),
    "dataset.n_atoms_max": ("int", "5"),
    "dataset.k_types": ("int", "3"),
    "dataset.valences": ("intlist", "4,3,2"),
    "statistic.kind": ("str", "auto"),
    "statistic.k": ("int", "8"),
    "statistic.order": ("int", "2"),
    "statistic.center": ("float", "0"),
    "statistic.halfwidth": ("float", "1"),
    "model.hidden": ("intlist", "64,64"),
    "model.activation": ("str", "tanh"),
    "schedule.n_levels": ("int", "10"),
    "schedule.sigma_min": ("float", "0.01"),
    "schedule.sigma_max": ("float", "0"),     # 0: use the max pairwise data distance
    "training.epochs": ("int", "200"),
    "training.batch_size": ("int", "128"),
    "training.lr": ("float", "0.001"),
    "training.eta_lr": ("float", "0.01"),
    "training.mode": ("str", "stochastic"),
    "training.checkpoint_every": ("int", "0"),
    "sampling.n_steps": ("int", "100"),
    "sampling.eps": ("float", "2e-5"),
    "sampling.denoise": ("bool", "true"),
    "sampling.n_chains": ("int", "64"),
    "oracle.base": ("str", "none"),           # names a catalog density for exact NLL
}


def _convert(key: str, raw: str):
    typ = SCHEMA[key][0]
    try:
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        if typ == "bool":
            low = raw.strip().lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        if typ == "intlist":
            return tuple(int(v) for v in raw.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for config key {key!r} (expected {typ})") from None
    return raw.strip()


def default_config() -> dict:
    return {k: _convert(k, default) for k, (_, default) in SCHEMA.items()}


def parse_config_lines(lines, source: str = "config") -> dict:
    cfg = default_config()
    for ln, line in enumerate(lines, start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}: line {ln}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in SCHEMA:
            raise ConfigError(f"{source}: line {ln}: unknown config key {key!r}")
        cfg[key] = _convert(key, raw.strip())
    return cfg


def parse_config(path) -> dict:
    return parse_config_lines(Path(path).read_text().splitlines(), source=str(path))


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return str(v)


def resolved_lines(cfg: dict) -> list[str]:
    """The fully-resolved config, one sorted `key = value` per line."""
    return [f"{k} = {_format_value(cfg[k])}" for k in sorted(cfg)]


# --- builders ---


def build_dataset(cfg: dict) -> datasets.Dataset:
    kind = cfg["dataset.kind"]
    seed = cfg["seed"]
    n = cfg["dataset.n"]
    if kind == "toy2d":
        return datasets.gen_toy2d(cfg["dataset.toy_kind"], n, seed)
    if kind == "margin_images":
        return datasets.gen_margin_images(
            cfg["dataset.h"], cfg["dataset.w"],
            (cfg["dataset.interior_h"], cfg["dataset.interior_w"]), n, seed)
    if kind == "point_clouds":
        return datasets.gen_point_clouds(cfg["dataset.shape"], cfg["dataset.N"],
                                         n, cfg["dataset.noise"], seed)
    if kind == "molecules":
        return datasets.gen_molecules(cfg["dataset.n_atoms_max"], cfg["dataset.k_types"],
                                      list(cfg["dataset.valences"]), n, seed)
    raise ConfigError(f"unknown dataset.kind {kind!r}")


def model_dim(cfg: dict) -> int:
    kind = cfg["dataset.kind"]
    if kind == "toy2d":
        return 2
    if kind == "margin_images":
        return cfg["dataset.h"] * cfg["dataset.w"]
    if kind == "point_clouds":
        return 3 * cfg["dataset.N"]
    if kind == "molecules":
        n, k = cfg["dataset.n_atoms_max"], cfg["dataset.k_types"]
        return n * (k + 1) + n * (n - 1) // 2
    raise ConfigError(f"unknown dataset.kind {kind!r}")


_AUTO_STATISTIC = {"toy2d": "sine", "margin_images": "margin",
                   "point_clouds": "laplacian", "molecules": "valency"}


def build_statistic(cfg: dict) -> statistics.Statistic:
    kind = cfg["statistic.kind"]
    if kind == "auto":
        kind = _AUTO_STATISTIC[cfg["dataset.kind"]]
    d = model_dim(cfg)
    if kind in ("none", "constant"):
        return statistics.ConstantStatistic(d)
    if kind == "sine":
        return statistics.SineStatistic(d)
    if kind == "raw_moment":
        return statistics.RawMomentStatistic(d, cfg["statistic.order"])
    if kind == "gap":
        return statistics.GapStatistic(d, cfg["statistic.center"], cfg["statistic.halfwidth"])
    if kind == "margin":
        if cfg["dataset.kind"] != "margin_images":
            raise ConfigError("margin statistic needs dataset.kind = margin_images")
        return statistics.MarginImageStatistic(
            cfg["dataset.h"], cfg["dataset.w"],
            cfg["dataset.interior_h"], cfg["dataset.interior_w"])
    if kind == "laplacian":
        if cfg["dataset.kind"] != "point_clouds":
            raise ConfigError("laplacian statistic needs dataset.kind = point_clouds")
        return statistics.SmoothnessStatistic(cfg["dataset.N"], cfg["statistic.k"])
    if kind == "valency":
        if cfg["dataset.kind"] != "molecules":
            raise ConfigError("valency statistic needs dataset.kind = molecules")
        return statistics.ValencyStatistic(
            cfg["dataset.n_atoms_max"],
            datasets.extended_valences(list(cfg["dataset.valences"])))
    raise ConfigError(f"unknown statistic.kind {kind!r}")


def build_model(cfg: dict, statistic: statistics.Statistic) -> ScoreModel:
    return new_model(statistic, hidden=list(cfg["model.hidden"]), seed=cfg["seed"],
                     hidden_activation=cfg["model.activation"])


def build_schedule(cfg: dict, X: np.ndarray) -> NoiseSchedule:
    if cfg["schedule.sigma_max"] > 0.0:
        return make_geometric_schedule(cfg["schedule.sigma_max"],
                                       cfg["schedule.sigma_min"],
                                       cfg["schedule.n_levels"])
    return schedule_from_data(X, cfg["schedule.sigma_min"], cfg["schedule.n_levels"])


def build_train_config(cfg: dict, fit_eta: bool = True,
                       checkpoint_path: str = "") -> TrainConfig:
    mode = cfg["training.mode"]
    if mode not in ("stochastic", "exact"):
        raise ConfigError(f"training.mode must be stochastic or exact, got {mode!r}")
    return TrainConfig(
        epochs=cfg["training.epochs"], batch_size=cfg["training.batch_size"],
        lr=cfg["training.lr"], eta_lr=cfg["training.eta_lr"], fit_eta=fit_eta,
        mode=mode, seed=cfg["seed"],
        checkpoint_every=cfg["training.checkpoint_every"],
        checkpoint_path=checkpoint_path)


def build_sampler_config(cfg: dict, seed: int | None = None) -> SamplerConfig:
    return SamplerConfig(n_steps=cfg["sampling.n_steps"], eps=cfg["sampling.eps"],
                         denoise=cfg["sampling.denoise"],
                         seed=cfg["seed"] if seed is None else seed)
