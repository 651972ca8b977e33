"""Posterior-predictive reserve simulation and the chain-ladder baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import distributions as dist
from .mcmc import ChainOutput, sample_mixing
from .model import POINT
from .triangle import FUTURE, HOLDOUT, OBSERVED, Triangle, TriangleError, cumulative

__all__ = [
    "PredictiveDraws",
    "predictive_draws",
    "reserve_quantiles",
    "ChainLadderResult",
    "chain_ladder",
    "DEFAULT_RESERVE_PROBS",
]

DEFAULT_RESERVE_PROBS = (0.20, 0.35, 0.50, 0.65, 0.80)

_TARGETS = {"lower_triangle": (FUTURE,), "holdout": (HOLDOUT,), "both": (HOLDOUT, FUTURE)}


@dataclass
class PredictiveDraws:
    """Per-cell predictive samples (currency scale) and the reserve-total draws.

    ``amounts[k, c]`` is draw k for cell ``cells[c]``; ``z`` holds the same
    draws on the log scale. ``reserve_totals[k]`` sums draw k over all cells.
    """

    cells: list
    amounts: np.ndarray
    z: np.ndarray
    reserve_totals: np.ndarray
    target: str

    @property
    def n_draws(self) -> int:
        return self.amounts.shape[0]

    def cell_samples(self, i: int, j: int) -> np.ndarray:
        return self.amounts[:, self.cells.index((i, j))]

    def to_csv(self) -> str:
        lines = ["i,j,draw,amount"]
        for c, (i, j) in enumerate(self.cells):
            for k in range(self.n_draws):
                lines.append(f"{i},{j},{k},{repr(float(self.amounts[k, c]))}")
        return "\n".join(lines) + "\n"


def _prediction_cells(tri: Triangle, target: str) -> list:
    try:
        tags = _TARGETS[target]
    except KeyError:
        raise ValueError(f"unknown prediction target {target!r}") from None
    return [
        (i, j)
        for i in range(1, tri.n + 1)
        for j in range(1, tri.n + 1)
        if tri.mask[i - 1, j - 1] in tags
    ]


def predictive_draws(chain: ChainOutput, tri: Triangle, target: str = "lower_triangle", rng=None) -> PredictiveDraws:
    """Composition sampling of the unobserved cells, one pass per stored draw.

    Per draw: the mixing variable, then the truncated-normal latent, then the
    log amount are simulated for every target cell; dynamic effects beyond the
    fitted range are extended by their random walks using that draw's
    evolution variances. Amounts are exp of the log draws.
    """
    cells = _prediction_cells(tri, target)
    if not cells:
        raise TriangleError(f"prediction target {target!r} selects no cells")
    data = chain.data
    trained = set(zip(data.i_idx.tolist(), data.j_idx.tolist()))
    overlap = sorted(set(cells) & trained)
    if overlap:
        raise TriangleError(f"prediction cells overlap training cells: {overlap[:8]}")
    rng = dist.make_rng(chain.config.seed + 1 if rng is None else rng)
    spec = chain.spec

    n_cells = len(cells)
    i_arr = np.array([c[0] for c in cells])
    j_arr = np.array([c[1] for c in cells])
    t_arr = i_arr + j_arr - 1
    i_need = int(i_arr.max())
    t_need = int(t_arr.max())

    # chain-instantiated development interactions, keyed per column
    fitted_beta = {}
    for b in range(data.n_beta):
        fitted_beta.setdefault(int(data.beta_j[b]), []).append((int(data.beta_i[b]), b))
    pred_cols = {}
    for i, j in cells:
        if i >= 2 and j >= 2:
            pred_cols.setdefault(j, []).append(i)

    stat = chain.statics
    K = chain.n_draws
    z_out = np.empty((K, n_cells))
    for k in range(K):
        sigma2 = stat["sigma2"][k]
        rho = stat["rho"][k] if "rho" in stat else 0.0
        nu = stat["nu"][k] if "nu" in stat else None

        alpha = np.zeros(max(i_need, data.i_max) + 1)
        alpha[: data.i_max + 1] = chain.alpha[k]
        sd_a = math.sqrt(stat["sigma2_alpha"][k])
        for i in range(data.i_max + 1, i_need + 1):
            alpha[i] = alpha[i - 1] + sd_a * rng.standard_normal()

        gamma = np.zeros(max(t_need, data.t_max) + 1)
        gamma[: data.t_max + 1] = chain.gamma[k]
        sd_g = math.sqrt(stat["sigma2_gamma"][k])
        for t in range(data.t_max + 1, t_need + 1):
            gamma[t] = gamma[t - 1] + sd_g * rng.standard_normal()

        sd_b = math.sqrt(stat["sigma2_beta"][k])
        beta_val = {}
        for j in sorted(pred_cols):
            anchors = fitted_beta.get(j, [])
            for ii, bb in anchors:
                beta_val[(ii, j)] = chain.beta[k][bb]
            if anchors:
                i0, b0 = max(anchors)
                val = chain.beta[k][b0]
            else:
                i0, val = 1, 0.0  # never-instantiated column roots at the zero constraint
            for i in range(i0 + 1, max(pred_cols[j]) + 1):
                val = val + sd_b * rng.standard_normal()
                beta_val[(i, j)] = val

        beta_arr = np.array([beta_val.get((i, j), 0.0) for i, j in cells])
        mean = stat["mu"][k] + alpha[i_arr] + beta_arr + gamma[t_arr]
        if spec.mixing == POINT:
            lam = np.ones(n_cells)
        else:
            lam = np.asarray(sample_mixing(rng, spec.mixing, nu, size=n_cells), dtype=float)
        if spec.skew:
            t_lat = dist.sample_truncated_normal_lower(rng, np.zeros(n_cells), sigma2 / lam, 0.0)
        else:
            t_lat = np.zeros(n_cells)
        sd_z = np.sqrt(sigma2 * (1.0 - rho**2) / lam)
        z_out[k] = mean + rho * t_lat + sd_z * rng.standard_normal(n_cells)

    amounts = np.exp(z_out)
    return PredictiveDraws(
        cells=cells,
        amounts=amounts,
        z=z_out,
        reserve_totals=amounts.sum(axis=1),
        target=target,
    )


def reserve_quantiles(pred: PredictiveDraws, probs=DEFAULT_RESERVE_PROBS) -> dict:
    """Empirical quantiles (type-7 interpolation) of the reserve-total draws."""
    if pred.reserve_totals.size == 0:
        raise ValueError("no reserve draws to summarize")
    for p in probs:
        if not 0.0 < p < 1.0:
            raise ValueError(f"quantile probability {p} outside (0, 1)")
    qs = np.quantile(pred.reserve_totals, probs)
    return {f"{100 * p:g}%": float(q) for p, q in zip(probs, qs)}


# ---------------------------------------------------------------------------
# chain ladder
# ---------------------------------------------------------------------------


@dataclass
class ChainLadderResult:
    """Deterministic baseline: development factors, projections and reserves."""

    factors: np.ndarray
    projections: dict
    reserve_by_row: dict
    total: float

    def projection_csv(self) -> str:
        lines = ["i,j,amount"]
        for (i, j), v in sorted(self.projections.items()):
            lines.append(f"{i},{j},{repr(float(v))}")
        return "\n".join(lines) + "\n"


def chain_ladder(tri: Triangle, target: str = "lower_triangle") -> ChainLadderResult:
    """Project the requested cells with column development factors.

    Factors f_j = sum_i C_{i,j+1} / sum_i C_{i,j} come from rows where both
    entries are observed. Projection runs row by row from the latest observed
    cumulative through the largest development year that has any data;
    requested cells beyond that horizon (or in rows with no observed cells)
    are not projectable and are excluded.
    """
    obs_rows = [i for i in range(1, tri.n + 1) if np.any(tri.mask[i - 1] == OBSERVED)]
    if len(obs_rows) < 2:
        raise TriangleError("chain ladder needs at least two accident years with data")
    cum = cumulative(tri)
    last_obs = {
        i: max(j for j in range(1, tri.n + 1) if tri.mask[i - 1, j - 1] == OBSERVED)
        for i in obs_rows
    }
    dev_max = max(last_obs.values())

    factors = np.empty(dev_max - 1)
    for j in range(1, dev_max):
        rows = [i for i in obs_rows if last_obs[i] >= j + 1]
        den = sum(cum.amounts[i - 1, j - 1] for i in rows)
        num = sum(cum.amounts[i - 1, j] for i in rows)
        if den == 0:
            raise TriangleError(f"zero cumulative total in development column {j}")
        factors[j - 1] = num / den

    wanted = set(_prediction_cells(tri, target))
    projections = {}
    reserve_by_row = {}
    total = 0.0
    for i in obs_rows:
        j0 = last_obs[i]
        latest = cum.amounts[i - 1, j0 - 1]
        cur = latest
        prev = latest
        for j in range(j0 + 1, dev_max + 1):
            cur = cur * factors[j - 2]
            if (i, j) in wanted:
                projections[(i, j)] = cur - prev
                total += cur - prev
            prev = cur
        reserve_by_row[i] = cur - latest
    return ChainLadderResult(
        factors=factors,
        projections=projections,
        reserve_by_row=reserve_by_row,
        total=float(total),
    )
