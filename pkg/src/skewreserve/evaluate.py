"""Probabilistic scoring, standardized residuals and chain diagnostics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .mcmc import ChainOutput
from .triangle import LogTriangle, OBSERVED

__all__ = [
    "DegenerateChainError",
    "ScoreReport",
    "rmspe",
    "interval_score",
    "wci",
    "crps_from_draws",
    "score_report",
    "bayesian_residuals",
    "geweke_cd",
    "ess",
    "chain_diagnostics",
]


class DegenerateChainError(ValueError):
    """The chain carries no usable information (e.g. constant draws)."""


# ---------------------------------------------------------------------------
# scoring rules
# ---------------------------------------------------------------------------


def rmspe(predicted, actual) -> float:
    """Root mean squared prediction error over aligned cell values."""
    p = np.asarray(predicted, dtype=float)
    a = np.asarray(actual, dtype=float)
    if p.shape != a.shape:
        raise ValueError(f"cell sets differ: {p.shape} vs {a.shape}")
    if p.size == 0:
        raise ValueError("no cells to score")
    return float(np.sqrt(np.mean((a - p) ** 2)))


def interval_score(l: float, u: float, z: float, psi: float = 0.05) -> float:
    """Width plus 2/psi times the distance by which z escapes [l, u]."""
    if l > u:
        raise ValueError(f"interval bounds out of order: ({l}, {u})")
    if not 0.0 < psi < 1.0:
        raise ValueError(f"psi must lie in (0, 1), got {psi}")
    out = u - l
    if z < l:
        out += (2.0 / psi) * (l - z)
    elif z > u:
        out += (2.0 / psi) * (z - u)
    return out


def wci(l: float, u: float) -> float:
    """Width of the credible interval."""
    if l > u:
        raise ValueError(f"interval bounds out of order: ({l}, {u})")
    return u - l


def crps_from_draws(samples, z: float, literal: bool = False) -> float:
    """Sample CRPS: mean |X - z| - 1/2 mean |X - X'|.

    The pair term splits the sample into independent halves. ``literal=True``
    evaluates the reversed-orientation variant (mean |X - X'| - 1/2 mean
    |X - z|), kept only for table-reproduction experiments; it is not a
    proper score.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValueError("CRPS needs at least two samples")
    half = x.size // 2
    pair = float(np.mean(np.abs(x[:half] - x[half : 2 * half])))
    err = float(np.mean(np.abs(x - z)))
    if literal:
        return pair - 0.5 * err
    return err - 0.5 * pair


@dataclass
class ScoreReport:
    """Per-cell and aggregate prediction scores for one model run."""

    per_cell: dict
    psi: float
    scale: str
    aggregates: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.aggregates:
            cells = list(self.per_cell.values())
            self.aggregates = {
                "average_is": float(np.mean([c["is"] for c in cells])),
                "average_wci": float(np.mean([c["wci"] for c in cells])),
                "average_crps": float(np.mean([c["crps"] for c in cells])),
                "rmspe": rmspe(
                    [c["median"] for c in cells], [c["actual"] for c in cells]
                ),
            }

    def to_json(self) -> str:
        payload = {
            "psi": self.psi,
            "scale": self.scale,
            "aggregates": self.aggregates,
            "cells": {f"{i},{j}": v for (i, j), v in sorted(self.per_cell.items())},
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    def to_csv(self) -> str:
        lines = ["i,j,is,wci,crps,median,actual"]
        for (i, j), c in sorted(self.per_cell.items()):
            lines.append(
                f"{i},{j},{c['is']!r},{c['wci']!r},{c['crps']!r},{c['median']!r},{c['actual']!r}"
            )
        return "\n".join(lines) + "\n"


def score_report(pred, actual: dict, psi: float = 0.05, scale: str = "log") -> ScoreReport:
    """Score a PredictiveDraws object against actual amounts.

    ``actual`` maps (i, j) to the realized amount on the currency scale. The
    default scores on the log-claim scale; ``scale="currency"`` scores raw
    amounts. Cell sets must match exactly.
    """
    pred_cells = set(pred.cells)
    act_cells = set(actual)
    if pred_cells != act_cells:
        missing = sorted(act_cells - pred_cells)[:6]
        extra = sorted(pred_cells - act_cells)[:6]
        raise ValueError(f"cell sets differ; missing={missing} extra={extra}")
    if scale == "log":
        draws = pred.z
        obs = {c: math.log(v) for c, v in actual.items()}
    elif scale == "currency":
        draws = pred.amounts
        obs = dict(actual)
    else:
        raise ValueError(f"unknown scoring scale {scale!r}")

    per_cell = {}
    lo_q, hi_q = psi / 2.0, 1.0 - psi / 2.0
    for c, cell in enumerate(pred.cells):
        x = draws[:, c]
        l, u = np.quantile(x, [lo_q, hi_q])
        z = obs[cell]
        per_cell[cell] = {
            "is": interval_score(float(l), float(u), z, psi),
            "wci": wci(float(l), float(u)),
            "crps": crps_from_draws(x, z),
            "median": float(np.median(x)),
            "actual": z,
        }
    return ScoreReport(per_cell=per_cell, psi=psi, scale=scale)


# ---------------------------------------------------------------------------
# residuals
# ---------------------------------------------------------------------------


def bayesian_residuals(chain: ChainOutput, logtri: LogTriangle | None = None):
    """Standardized residual draws on the training cells.

    Per draw, r = (z - mu - alpha_i - beta_ij - gamma_t - rho T) /
    sqrt(sigma2 (1 - rho^2) / lambda). Requires a chain run with latent
    storage. Returns (cells, residual draws (K, N), per-cell medians,
    fraction of medians outside [-2, 2]).
    """
    if chain.T is None or chain.lam is None:
        raise DegenerateChainError(
            "latent fields not stored; re-run the fit with store_latents=True"
        )
    data = chain.data
    z = data.z
    stat = chain.statics
    K = chain.n_draws
    res = np.empty((K, data.N))
    for k in range(K):
        rho = stat["rho"][k] if "rho" in stat else 0.0
        mean = (
            stat["mu"][k]
            + chain.alpha[k][data.i_idx]
            + _beta_cellvalues(chain, k)
            + chain.gamma[k][data.t_idx]
            + rho * chain.T[k]
        )
        sd = np.sqrt(stat["sigma2"][k] * (1.0 - rho**2) / chain.lam[k])
        res[k] = (z - mean) / sd
    medians = np.median(res, axis=0)
    frac_outside = float(np.mean(np.abs(medians) > 2.0))
    cells = list(zip(data.i_idx.tolist(), data.j_idx.tolist()))
    return cells, res, medians, frac_outside


def _beta_cellvalues(chain: ChainOutput, k: int) -> np.ndarray:
    vals = np.zeros(chain.data.N)
    if chain.data.n_beta:
        vals[chain.data.beta_cell] = chain.beta[k]
    return vals


# ---------------------------------------------------------------------------
# chain diagnostics
# ---------------------------------------------------------------------------


def _spectral_var(x: np.ndarray) -> float:
    # Bartlett-windowed long-run variance (spectral density at frequency zero)
    m = x.size
    c = x - x.mean()
    lag_max = int(math.sqrt(m))
    var = float(np.dot(c, c)) / m
    s = var
    for k in range(1, lag_max + 1):
        cov = float(np.dot(c[:-k], c[k:])) / m
        s += 2.0 * (1.0 - k / (lag_max + 1.0)) * cov
    return max(s, 1e-300)


def geweke_cd(draws) -> float:
    """Standardized mean difference between the first 10% and last 50% of a chain."""
    x = np.asarray(draws, dtype=float)
    if x.size < 100:
        raise ValueError("Geweke CD needs at least 100 draws")
    n_a = max(int(0.1 * x.size), 10)
    n_b = max(int(0.5 * x.size), 10)
    a = x[:n_a]
    b = x[-n_b:]
    if np.ptp(x) == 0.0:
        raise DegenerateChainError("constant chain has no convergence diagnostic")
    return float((a.mean() - b.mean()) / math.sqrt(_spectral_var(a) / n_a + _spectral_var(b) / n_b))


def ess(draws) -> float:
    """Effective sample size with initial-positive-sequence truncation."""
    x = np.asarray(draws, dtype=float)
    if x.size < 100:
        raise ValueError("ESS needs at least 100 draws")
    c = x - x.mean()
    var = float(np.dot(c, c)) / x.size
    if var == 0.0:
        raise DegenerateChainError("constant chain has undefined ESS")
    n = x.size
    # autocorrelations via FFT
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(c, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n].real / n
    rho = acov / acov[0]
    tau = 1.0
    k = 1
    while k + 1 < n:
        pair = rho[k] + rho[k + 1]
        if pair <= 0.0:
            break
        tau += 2.0 * pair
        k += 2
    return float(n / tau)


def chain_diagnostics(chain: ChainOutput) -> dict:
    """Geweke CD and ESS for every static parameter of a chain."""
    out = {}
    for name, draws in chain.statics.items():
        try:
            out[name] = {"cd": geweke_cd(draws), "ess": ess(draws)}
        except DegenerateChainError:
            out[name] = {"cd": math.nan, "ess": math.nan}
    return out
