"""Synthetic run-off triangle generation under any model variant."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import distributions as dist
from .mcmc import sample_mixing
from .model import POINT, ModelSpec
from .triangle import FUTURE, OBSERVED, Triangle

__all__ = ["TruthConfig", "SEC31_PRESET", "simulate_triangle", "truth_to_json"]


@dataclass(frozen=True)
class TruthConfig:
    """Generating parameters of a synthetic triangle."""

    n: int
    mu: float
    rho: float
    sigma2: float
    nu: float | None
    sigma2_alpha: float
    sigma2_beta: float
    sigma2_gamma: float

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need n >= 2")
        if not -1.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (-1, 1)")
        for name in ("sigma2", "sigma2_alpha", "sigma2_beta", "sigma2_gamma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


# reference configuration of the simulation study: a 16 x 16 skew-t triangle
SEC31_PRESET = TruthConfig(
    n=16,
    mu=9.0,
    rho=-0.89,
    sigma2=0.14,
    nu=3.0,
    sigma2_alpha=0.13,
    sigma2_beta=0.05,
    sigma2_gamma=0.13,
)


def simulate_triangle(cfg: TruthConfig, spec: ModelSpec, rng) -> tuple[Triangle, dict]:
    """Generate a full n x n square, mask the lower wedge as future.

    Returns the Triangle (upper wedge observed) and a truth record holding
    every latent path, the full square of amounts and the true total of the
    future cells, so recovery experiments can score against exact truth.
    """
    rng = dist.make_rng(rng)
    n = cfg.n
    rho = cfg.rho if spec.skew else 0.0
    sd_a, sd_b, sd_g = (
        math.sqrt(cfg.sigma2_alpha),
        math.sqrt(cfg.sigma2_beta),
        math.sqrt(cfg.sigma2_gamma),
    )

    alpha = np.zeros(n + 1)
    for i in range(2, n + 1):
        alpha[i] = alpha[i - 1] + sd_a * rng.standard_normal()
    gamma = np.zeros(2 * n)
    for t in range(2, 2 * n):
        gamma[t] = gamma[t - 1] + sd_g * rng.standard_normal()
    beta = np.zeros((n + 1, n + 1))
    for i in range(2, n + 1):
        for j in range(2, n + 1):
            beta[i, j] = beta[i - 1, j] + sd_b * rng.standard_normal()

    if spec.mixing == POINT:
        lam = np.ones((n, n))
    else:
        lam = np.asarray(sample_mixing(rng, spec.mixing, cfg.nu, size=(n, n)), dtype=float)
    if spec.skew:
        t_lat = dist.sample_truncated_normal_lower(
            rng, np.zeros((n, n)), cfg.sigma2 / lam, 0.0
        )
    else:
        t_lat = np.zeros((n, n))

    ii = np.arange(1, n + 1)[:, None]
    jj = np.arange(1, n + 1)[None, :]
    tt = ii + jj - 1
    mean = cfg.mu + alpha[ii] + beta[1:, 1:] + gamma[tt] + rho * t_lat
    sd_z = np.sqrt(cfg.sigma2 * (1.0 - rho**2) / lam)
    z = mean + sd_z * rng.standard_normal((n, n))
    y = np.exp(z)

    mask = np.where(jj <= n - ii + 1, OBSERVED, FUTURE).astype(np.uint8)
    amounts = np.where(mask == OBSERVED, y, np.nan)
    tri = Triangle(n=n, amounts=amounts, mask=mask, origin_year=1)

    future = mask == FUTURE
    truth = {
        "config": asdict(cfg),
        "model_code": spec.code,
        "alpha": alpha[1:].tolist(),
        "gamma": gamma[1:].tolist(),
        "beta": beta[1:, 1:].tolist(),
        "lambda": lam.tolist(),
        "T": t_lat.tolist(),
        "z": z.tolist(),
        "amounts": y.tolist(),
        "true_total": float(y[future].sum()),
    }
    return tri, truth


def truth_to_json(truth: dict) -> str:
    return json.dumps(truth, sort_keys=True, indent=2)
