"""Input validation, seeding and hashing helpers shared across the package."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import numbers

import numpy as np
from sklearn.utils.validation import check_array


class ConfigurationError(ValueError):
    """Raised when a configuration violates its invariants."""


class UsageError(RuntimeError):
    """Raised when an object is driven in an order its contract forbids."""


def as_generator(random_state=None) -> np.random.Generator:
    """Turn ``None``, an int, a SeedSequence or a Generator into a Generator.

    A Generator passed in is returned as-is (shared, not copied).
    """
    if isinstance(random_state, np.random.Generator):
        return random_state
    if random_state is None or isinstance(random_state, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(random_state)
    raise ConfigurationError(f"cannot build a Generator from {random_state!r}")


def spawn_seeds(seed: int, n: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n)


def check_features(X, n_features: int) -> np.ndarray:
    """Validate a feature matrix; a single 1-D row is promoted to shape (1, n)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    X = check_array(X, dtype=np.float64, ensure_all_finite=True)
    if X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} features, got {X.shape[1]}")
    return X


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        # repr keeps the shortest round-trip form, so 0.1 and 0.1000000001 differ
        return repr(float(obj))
    return obj


def config_hash(obj, length: int = 12) -> str:
    """Stable short hash of a (possibly nested) dataclass / dict config."""
    payload = json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:length]
