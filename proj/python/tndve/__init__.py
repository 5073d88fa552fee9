"""Negative-control vaccine effectiveness estimators for test-negative designs."""

import json

from ._tndve import (
    ConfigError,
    ConvergenceError,
    DegenerateDataError,
    DomainError,
    IdentifiabilityError,
    IoError,
    PreconditionError,
    Sample,
    SchemaError,
    TndveError,
    __version__,
    cli,
    generate,
)
from . import _tndve

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "DegenerateDataError",
    "DomainError",
    "IdentifiabilityError",
    "IoError",
    "PreconditionError",
    "Sample",
    "SchemaError",
    "TndveError",
    "cli",
    "estimate",
    "fit_bridge",
    "generate",
    "oracle_bridge",
    "simulate",
]


def fit_bridge(sample, form="auto", features=(), moment=()):
    """Fit q(A, Z, X) by the bridge moment equation; returns the fit as a dict.

    form is "auto", "saturated", "logistic-gaussian" or "custom". moment is a
    list of terms such as ["1", "W", "A", "A*W"], or ["linear"] / ["interactions"].
    """
    return json.loads(_tndve._fit_bridge(sample, form, list(features), list(moment)))


def estimate(sample, estimator="nc", alpha=0.05, form="auto", features=(), moment=(), bridge=None):
    """Estimate VE; returns the report as a dict (see the JSON report schema).

    estimator is "nc", "nc-conditional" or "logistic". A dict from fit_bridge
    may be passed as bridge to skip refitting.
    """
    bridge_json = json.dumps(bridge) if bridge is not None else ""
    return json.loads(
        _tndve._estimate(sample, estimator, alpha, form, list(features), list(moment), bridge_json)
    )


def oracle_bridge(setting="binary"):
    """True bridge of a simulation setting's default parameters."""
    if setting.startswith("binary"):
        return json.loads(_tndve._oracle_bridge_binary(setting))
    return json.loads(_tndve._oracle_bridge_continuous(setting))


def simulate(config, threads=1):
    """Run a Monte Carlo scenario given as config text; returns (summary dict, summary CSV)."""
    summary, csv = _tndve._simulate(config, threads)
    return json.loads(summary), csv
