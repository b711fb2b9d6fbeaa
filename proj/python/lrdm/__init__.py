# Copyright 2026 The lrdm-lab Authors
# SPDX-License-Identifier: Apache-2.0
"""Python bindings for the lrdm experiment pipeline."""

import json
import os

from ._lrdm import (
    Config,
    LrdmError,
    average_precision_at_k,
    dare,
    endpoint_loss,
    load_config,
    map_at_k,
    merge_checkpoint,
    recall_at_k,
    sha256_hex,
    ties_merge,
)
from ._lrdm import Pipeline as _Pipeline
from ._lrdm import _build_report, _evaluate

__all__ = [
    "Config",
    "LrdmError",
    "Pipeline",
    "average_precision_at_k",
    "build_report",
    "dare",
    "endpoint_loss",
    "evaluate",
    "load_config",
    "map_at_k",
    "merge_checkpoint",
    "recall_at_k",
    "sha256_hex",
    "ties_merge",
]


class Pipeline(_Pipeline):
    """Stage runner bound to one output directory."""

    def __init__(self, config=None, output_dir=None):
        config = Config() if config is None else config
        super().__init__(config, os.fspath(output_dir or config.output_dir))

    def ablate(self):
        return json.loads(self._ablate())

    def report(self):
        return json.loads(self._report())

    def run_all(self):
        return json.loads(self._run_all())


def build_report(run_dir):
    return json.loads(_build_report(os.fspath(run_dir)))


def evaluate(benchmark, checkpoint, branch="end", alpha=None, max_queries=0):
    """Metrics of a checkpoint on a saved benchmark.

    `alpha` folds an LRDM mix of both branches; otherwise `branch` picks one.
    """
    a = -1.0 if alpha is None else float(alpha)
    return json.loads(_evaluate(os.fspath(benchmark), os.fspath(checkpoint), branch, a, max_queries))
