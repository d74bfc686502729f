"""Run configuration: JSON documents checked against a typed default tree."""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any

from .graph import Graph, load_bundle, make_splits, synth_planted
from .search import SearchConfig
from .trainer import HyperParams

_SEARCH = SearchConfig()
_HP = HyperParams()

DEFAULTS: dict[str, Any] = {
    "data": {
        "bundle_path": None,
        "synth": {
            "num_nodes": 300,
            "num_classes": 3,
            "feat_dim": 16,
            "p_in": 0.05,
            "p_out": 0.005,
            "noise": 0.5,
            "seed": 0,
        },
        "split": [0.6, 0.2, 0.2],
        "split_seed": 0,
    },
    "search": {
        "runs": 5,
        "epochs": _SEARCH.epochs,
        "lr_w": _SEARCH.lr_w,
        "lr_alpha": _SEARCH.lr_alpha,
        "weight_decay_w": _SEARCH.weight_decay_w,
        "weight_decay_alpha": _SEARCH.weight_decay_alpha,
        "epsilon": _SEARCH.epsilon,
        "K": _SEARCH.K,
        "hidden_dim": _SEARCH.hidden_dim,
        "heads": _SEARCH.heads,
        "dropout": _SEARCH.dropout,
        "leaky_scores": _SEARCH.leaky_scores,
    },
    "trainer": {
        "trials": 50,
        "repeats": 5,
        "heads": _HP.heads,
        "hidden": _HP.hidden,
        "lr": _HP.lr,
        "l2": _HP.l2,
        "activation": _HP.activation,
        "dropout": _HP.dropout,
        "epochs": _HP.epochs,
        "patience": _HP.patience,
        "zero_skip": _HP.zero_skip,
    },
    "baseline": {
        "budget": 200,
        "mlp_budget": 12,
        "trial_epochs": 200,
        "trial_patience": 30,
        "epsilons": [0.0, 0.2, 0.5, 0.9, 1.0],
        "k_values": [1, 2, 3, 4, 5, 6],
        "repeats": 5,
    },
    "output_dir": "runs",
    "seed": 0,
    "workers": None,
}

REQUIRED = ("data",)
HP_KEYS = ("heads", "hidden", "lr", "l2", "activation", "dropout", "epochs", "patience", "zero_skip")

# keys whose default is None but which accept a value of this type
_NULLABLE = {"/data/bundle_path": str, "/data/split": list, "/workers": int}


class ConfigError(ValueError):
    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


def _type_ok(value, default, pointer: str) -> bool:
    if value is None:
        return default is None or pointer in _NULLABLE
    expected = _NULLABLE.get(pointer) if default is None else type(default)
    if expected is None:
        return False
    if expected is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if expected is int:
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, expected)


def _merge(defaults: dict, given: dict, pointer: str = "") -> dict:
    if not isinstance(given, dict):
        raise ConfigError(pointer, f"expected an object, got {type(given).__name__}")
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        here = f"{pointer}/{key}"
        if key not in defaults:
            raise ConfigError(here, f"unknown key (allowed: {', '.join(sorted(defaults))})")
        if isinstance(defaults[key], dict):
            out[key] = _merge(defaults[key], value, here)
        elif not _type_ok(value, defaults[key], here):
            raise ConfigError(here, f"bad value {value!r}")
        else:
            out[key] = float(value) if isinstance(defaults[key], float) else value
    return out


def _check_ranges(cfg: dict) -> None:
    data = cfg["data"]
    split = data["split"]
    if split is not None and (len(split) != 3 or abs(sum(split) - 1.0) > 1e-9 or min(split) < 0):
        raise ConfigError("/data/split", "expected three non-negative fractions summing to 1")
    s = cfg["search"]
    for key, lo in (("runs", 1), ("epochs", 1), ("K", 1), ("hidden_dim", 1)):
        if s[key] < lo:
            raise ConfigError(f"/search/{key}", f"must be at least {lo}")
    if not 0.0 <= s["epsilon"] <= 1.0:
        raise ConfigError("/search/epsilon", "must lie in [0, 1]")
    t = cfg["trainer"]
    hp_fields = {k: t[k] for k in HP_KEYS}
    try:
        HyperParams(**hp_fields)
    except ValueError as exc:
        raise ConfigError("/trainer", str(exc)) from None
    for key in ("trials", "repeats"):
        if t[key] < 1:
            raise ConfigError(f"/trainer/{key}", "must be at least 1")
    b = cfg["baseline"]
    for key in ("budget", "mlp_budget", "trial_epochs", "repeats"):
        if b[key] < 1:
            raise ConfigError(f"/baseline/{key}", "must be at least 1")
    if any(not 0.0 <= e <= 1.0 for e in b["epsilons"]):
        raise ConfigError("/baseline/epsilons", "every value must lie in [0, 1]")
    if any(not isinstance(k, int) or k < 1 for k in b["k_values"]):
        raise ConfigError("/baseline/k_values", "every value must be an integer >= 1")
    if cfg["workers"] is not None and cfg["workers"] < 1:
        raise ConfigError("/workers", "must be at least 1")


def resolve(doc: dict) -> dict:
    """Validate ``doc`` and return it with every default filled in."""
    if not isinstance(doc, dict):
        raise ConfigError("", "config must be a JSON object")
    for key in REQUIRED:
        if key not in doc:
            raise ConfigError(f"/{key}", "required section is missing")
    cfg = _merge(DEFAULTS, doc)
    _check_ranges(cfg)
    return cfg


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: dict, overrides: list[str]) -> dict:
    """Apply ``key.path=value`` overrides; values are parsed as JSON when possible."""
    doc = copy.deepcopy(doc)
    for item in overrides:
        if "=" not in item:
            raise ConfigError("", f"override {item!r} is not of the form key.path=value")
        path, raw = item.split("=", 1)
        keys = [k for k in path.strip().split(".") if k]
        if not keys:
            raise ConfigError("", f"override {item!r} has an empty key")
        node = doc
        for i, k in enumerate(keys[:-1]):
            nxt = node.setdefault(k, {})
            if not isinstance(nxt, dict):
                raise ConfigError("/" + "/".join(keys[: i + 1]), "cannot descend into a non-object")
            node = nxt
        node[keys[-1]] = _parse_value(raw)
    return doc


def load_config(path=None, overrides: list[str] = ()) -> dict:
    doc: dict = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError("", f"cannot read {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("", f"{path} is not valid JSON ({exc.msg} at line {exc.lineno})") from None
    return resolve(apply_overrides(doc, list(overrides)))


def build_graph(cfg: dict) -> Graph:
    data = cfg["data"]
    if data["bundle_path"] is not None:
        g = load_bundle(data["bundle_path"])
        if data["split"] is None:
            return g
    else:
        g = synth_planted(**data["synth"])
    return make_splits(g, tuple(data["split"] or (0.6, 0.2, 0.2)), data["split_seed"])


def search_config(cfg: dict, seed: int, **changes) -> SearchConfig:
    fields = {k: v for k, v in cfg["search"].items() if k != "runs"}
    fields.update(changes)
    return SearchConfig(seed=seed, **fields)


def hyperparams(cfg: dict) -> HyperParams:
    t = cfg["trainer"]
    return HyperParams(**{k: t[k] for k in HP_KEYS})


def trial_hyperparams(cfg: dict) -> HyperParams:
    b = cfg["baseline"]
    return HyperParams(**{**hyperparams(cfg).to_dict(), "epochs": b["trial_epochs"], "patience": b["trial_patience"]})


def write_resolved(cfg: dict, out_dir) -> Path:
    path = Path(out_dir) / "config.resolved.json"
    path.write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    return path
