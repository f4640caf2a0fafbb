"""Input-validation helpers shared across estimators and solvers."""

from __future__ import annotations

import numpy as np


def check_array_2d(x, name="X", n_cols=None, dtype=np.float64):
    """Coerce to a 2-D float array, rejecting NaN/inf and column mismatches."""
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite entries")
    if n_cols is not None and arr.shape[1] != n_cols:
        raise ValueError(f"{name} has {arr.shape[1]} columns, expected {n_cols}")
    return arr


def check_vector(x, name="y", n=None, dtype=np.float64):
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite entries")
    if n is not None and arr.shape[0] != n:
        raise ValueError(f"{name} has length {arr.shape[0]}, expected {n}")
    return arr


def check_positive(value, name):
    if value <= 0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return value


def check_nonnegative(value, name):
    if value < 0:
        raise ValueError(f"{name} must be nonnegative, got {value!r}")
    return value


def check_probability(value, name, open_interval=False):
    ok = 0.0 < value < 1.0 if open_interval else 0.0 <= value <= 1.0
    if not ok:
        bounds = "(0, 1)" if open_interval else "[0, 1]"
        raise ValueError(f"{name} must lie in {bounds}, got {value!r}")
    return value


def check_fitted(estimator, attribute):
    """Raise if ``estimator`` has not been fitted (sklearn-style trailing underscore)."""
    if getattr(estimator, attribute, None) is None:
        raise RuntimeError(
            f"{type(estimator).__name__} is not fitted; call fit() before use"
        )


class ParamsMixin:
    """Minimal get_params/set_params so estimators compose with sklearn tooling.

    Parameters are the keyword arguments of ``__init__`` stored under the
    same attribute names, as in scikit-learn.
    """

    def get_params(self, deep=True):
        import inspect

        names = [
            p.name
            for p in inspect.signature(type(self).__init__).parameters.values()
            if p.name != "self" and p.kind != p.VAR_KEYWORD
        ]
        return {name: getattr(self, name) for name in names}

    def set_params(self, **params):
        valid = self.get_params()
        for key, value in params.items():
            if key not in valid:
                raise ValueError(f"unknown parameter {key!r} for {type(self).__name__}")
            setattr(self, key, value)
        return self

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"
