# Copyright 2026 The robust-shift Authors
# SPDX-License-Identifier: Apache-2.0
"""Python bindings for the robust_shift graph OOD training library."""

import json as _json

from ._core import (
    Config,
    ConfigError,
    Dataset,
    DomainError,
    ParseError,
    ShapeError,
    chisq_weights,
    cressie_read_f,
    cvar_loss,
    divergence,
    method_names,
    nnr_weights,
    project_divergence_ball,
    project_simplex,
    report_csv,
)
from . import _core


def run_experiment(config, dataset=None):
    """Train every seed of ``config`` and return the summary document as a dict."""
    if dataset is None:
        dataset = Dataset.generate(config)
    return _json.loads(_core._run_experiment(config, dataset))


def report(directory):
    """Aggregate the run files in ``directory`` into a report dict."""
    return _json.loads(_core._report_json(str(directory)))


__all__ = [
    "Config",
    "ConfigError",
    "Dataset",
    "DomainError",
    "ParseError",
    "ShapeError",
    "chisq_weights",
    "cressie_read_f",
    "cvar_loss",
    "divergence",
    "method_names",
    "nnr_weights",
    "project_divergence_ball",
    "project_simplex",
    "report",
    "report_csv",
    "run_experiment",
]
