"""Run configuration: defaults, JSON loading, and strict key validation.

A configuration is a nested dictionary with the sections below. Every key
is optional and falls back to its default; unknown keys are rejected with
their dotted location so typos cannot silently change a run.
"""

import copy
import json

from .errors import ConfigError

# One entry per known key. `None` means "not set"; section defaults are
# plain values. Structure doubles as the validation schema.
DEFAULTS = {
    "input": {
        "features_csv": None,   # path to numeric CSV (header optional)
        "labels_csv": None,     # known labels, 1-based, 0 = unlabeled
        "truth_csv": None,      # full ground truth (for sampling/accuracy)
        "edge_lists": None,     # list of edge-list paths, one per layer
        "n_nodes": None,        # node count override for edge lists
        "images": None,         # PNG path or list of paths
        "label_fraction": None, # sample labels from truth at this rate
        "omega0": None,         # fidelity weight override for sampled labels
    },
    "grouping": {
        "groups": None,         # list of {columns, family, sigma, mode}
    },
    "power": {
        "p": 1.0,
        "delta": None,          # default: log(1+|p|) for p<0, 0 otherwise
        "dense_limit": 5000,
    },
    "fastsum": {
        "N": 64,
        "m": 5,
        "eps_b": 0.0625,
        "p": 5,
        "rho": 2.0,
    },
    "eig": {
        "k": 10,
        "tol": 1e-8,
        "max_subspace": None,
        "max_restarts": 60,
    },
    "pksm": {
        "krylov_dim": 50,
        "tol": 1e-8,
    },
    "ac": {
        "epsilon": 5e-3,
        "omega0": 1000.0,
        "c": None,              # default: omega0 + 3/epsilon
        "dt": 0.01,
        "tolerance": 1e-6,
        "max_iter": 300,
    },
    "bench": {
        "sbm": {
            "setup": "noisy-pair",   # or "complementary"
            "n_cluster": 50,
            "p_in": 0.7,
            "p_out": 0.3,
            "p_noise": 0.5,
            "repetitions": 100,
            "p_values": [1.0],
            "subsets": False,        # also run single layers and pairs
            "label_fraction": 0.04,
        },
        "fastsum": {
            "family": "gaussian",
            "sigma": 0.1,
            "d": 2,
            "sizes": [100000, 200000],
            "repetitions": 5,
            "accuracy_n": 5000,
            "accuracy_dims": [1, 2, 3],
            "with_direct": True,
        },
    },
    "output": {
        "write_scores": True,
        "write_vectors": False,
        "write_masks": True,
    },
}

_GROUP_KEYS = ("columns", "family", "sigma", "mode", "per_component")


def _check_unknown(user, schema, path):
    for key, value in user.items():
        if key not in schema:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"unknown config key: {where}")
        sub = schema[key]
        if isinstance(sub, dict):
            if not isinstance(value, dict):
                where = f"{path}.{key}" if path else key
                raise ConfigError(f"config section {where} must be an object")
            _check_unknown(value, sub, f"{path}.{key}" if path else key)


def _merge(base, user):
    for key, value in user.items():
        if isinstance(base.get(key), dict) and isinstance(value, dict):
            _merge(base[key], value)
        else:
            base[key] = value


def _validate_groups(groups):
    if groups is None:
        return
    if not isinstance(groups, list) or not groups:
        raise ConfigError("grouping.groups must be a non-empty list")
    for i, g in enumerate(groups):
        if not isinstance(g, dict):
            raise ConfigError(f"grouping.groups[{i}] must be an object")
        for key in g:
            if key not in _GROUP_KEYS:
                raise ConfigError(f"unknown config key: grouping.groups[{i}].{key}")
        for key in ("columns", "sigma"):
            if key not in g:
                raise ConfigError(f"grouping.groups[{i}] is missing required key {key!r}")


def merge_config(user):
    """Validate a user dict against the schema and merge it over defaults."""
    if not isinstance(user, dict):
        raise ConfigError("config root must be an object")
    _check_unknown(user, DEFAULTS, "")
    merged = copy.deepcopy(DEFAULTS)
    _merge(merged, user)
    _validate_groups(merged["grouping"]["groups"])
    return merged


def load_config(path=None):
    """Read a JSON config file (or return pure defaults when path is None)."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        user = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return merge_config(user)
