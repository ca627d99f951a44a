"""Small input-checking helpers shared by the public functions."""

import math

import numpy as np


class ConfigurationError(ValueError):
    """Raised when a problem instance violates its preconditions."""


class DomainMismatchError(ConfigurationError):
    pass


def check_dimension(n):
    if n not in (2, 3):
        raise ConfigurationError(f"dimension n must be 2 or 3, got {n!r}")
    return int(n)


def check_positive(name, value, allow_inf=False):
    value = float(value)
    if math.isnan(value) or value <= 0 or (math.isinf(value) and not allow_inf):
        raise ConfigurationError(f"{name} must be positive, got {value!r}")
    return value


def check_open_unit(name, value):
    value = float(value)
    if not 0.0 < value < 1.0:
        raise ConfigurationError(f"{name} must lie in (0, 1), got {value!r}")
    return value


def check_p(p):
    p = float(p)
    if math.isnan(p) or p < 1:
        raise ConfigurationError(f"exponent p must be >= 1 or inf, got {p!r}")
    return p


def check_same_domain(*objs):
    ref = objs[0].domain
    for o in objs[1:]:
        if o.domain != ref:
            raise DomainMismatchError("objects live on different grid domains")
    return ref


def as_bool_array(bits, shape=None, name="mask"):
    arr = np.asarray(bits)
    if arr.dtype != bool:
        if not np.isin(arr, (0, 1)).all():
            raise ConfigurationError(f"{name} must be boolean or 0/1 valued")
        arr = arr.astype(bool)
    if shape is not None and arr.shape != tuple(shape):
        raise DomainMismatchError(f"{name} has shape {arr.shape}, expected {tuple(shape)}")
    return arr


def as_finite_array(values, shape=None, name="field"):
    arr = np.asarray(values, dtype=float)
    if shape is not None and arr.shape != tuple(shape):
        raise DomainMismatchError(f"{name} has shape {arr.shape}, expected {tuple(shape)}")
    if not np.isfinite(arr).all():
        raise ConfigurationError(f"{name} contains non-finite values")
    return arr
