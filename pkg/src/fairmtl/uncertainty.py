"""Monte-Carlo dropout ensemble inference.

Runs T stochastic forward passes with seeded masks and reduces them to a
posterior predictive mean and a per-sample uncertainty (the population
variance of the T outputs, divisor T). Each pass is a pure function of
(params, seed, pass index), so passes can run in any order or in
parallel and the reduction still comes out identical.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .errors import ContractError, ShapeError


@dataclass
class McEnsembleResult:
    per_sample_outputs: np.ndarray  # (N, T), each in (0, 1)
    posterior_mean: np.ndarray      # (N,)
    uncertainty: np.ndarray         # (N,)
    passes: int


@dataclass
class UncertaintySummary:
    mean: float
    max: float
    bin_edges: np.ndarray
    bin_counts: np.ndarray


def posterior_stats(outputs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-row predictive mean and population variance of the T passes.

    Rows are reduced in sorted order after shifting by the row minimum,
    which makes the result independent of pass ordering and exactly zero
    variance when all passes agree.
    """
    o = np.ascontiguousarray(outputs, dtype=np.float64)
    if o.ndim != 2 or o.shape[1] < 1:
        raise ShapeError("expected an (N, T) output matrix with T >= 1")
    s = np.ascontiguousarray(np.sort(o, axis=1))
    lo = s[:, :1]
    mean = lo[:, 0] + np.mean(s - lo, axis=1)
    dev = s - mean[:, None]
    var = np.mean(dev * dev, axis=1)
    return mean, var


def mc_predict(params: nn.NetworkParams, inputs: np.ndarray, passes: int, seed: int | None = None) -> McEnsembleResult:
    """Collect T stochastic passes and reduce them.

    Pass i uses the mask set derived from (seed, i). seed=None uses the
    network's own dropout seed. With dropout rate 0 every pass is the
    deterministic forward and the uncertainty is exactly zero.
    """
    if passes < 1:
        raise ContractError(f"need at least one pass, got {passes}")
    X = np.asarray(inputs, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    net = params
    if seed is not None and seed != params.dropout.seed:
        net = params.clone()
        net.dropout = nn.DropoutSpec(
            rate=params.dropout.rate,
            placement=params.dropout.placement,
            seed=seed,
        )
    cols = []
    for i in range(passes):
        out, _ = nn.forward(net, X, pass_index=i)
        cols.append(np.atleast_1d(out))
    matrix = np.stack(cols, axis=1)
    mean, var = posterior_stats(matrix)
    return McEnsembleResult(
        per_sample_outputs=matrix,
        posterior_mean=mean,
        uncertainty=var,
        passes=passes,
    )


def uncertainty_summary(result: McEnsembleResult, bins: int = 10) -> UncertaintySummary:
    """Aggregate statistics of the per-sample uncertainties."""
    c = result.uncertainty
    hi = float(c.max())
    edges = np.linspace(0.0, hi if hi > 0 else 1.0, bins + 1)
    counts, _ = np.histogram(c, bins=edges)
    return UncertaintySummary(mean=float(c.mean()), max=hi, bin_edges=edges, bin_counts=counts)


def ensemble_to_csv(result: McEnsembleResult, path: str | Path, verbose: bool = False):
    """Tabular export: sample_id, p, c, and all T outputs when verbose."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["sample_id", "p", "c"]
        if verbose:
            header += [f"pass_{i}" for i in range(result.passes)]
        writer.writerow(header)
        for i in range(result.per_sample_outputs.shape[0]):
            row = [i, repr(float(result.posterior_mean[i])), repr(float(result.uncertainty[i]))]
            if verbose:
                row += [repr(float(v)) for v in result.per_sample_outputs[i]]
            writer.writerow(row)
