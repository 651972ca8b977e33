"""Gibbs sampler with adaptive Metropolis steps for the reserving model.

One sweep updates, in order, the accident effects, the development
interactions, the calendar effects, the static block (mu, sigma2, rho, the
three evolution variances, nu), the truncated-normal latents T and the mixing
field lambda. Conjugate blocks are exact Gibbs draws; rho and the t/VG tail
parameter use random-walk Metropolis on transformed scales with global
adaptive scaling tuned toward a 0.234 acceptance rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import distributions as dist
from .model import (
    BETA_SLASH,
    GAMMA_T,
    INVGAMMA_VG,
    POINT,
    ModelSpec,
    NuPrior,
    ParameterState,
    init_state,
)
from .triangle import OBSERVED, LogTriangle

__all__ = [
    "FitData",
    "AdaptiveState",
    "ChainConfig",
    "ChainOutput",
    "NumericalAbortError",
    "DEFAULT_CHAIN_CONFIG",
    "run_chain",
    "log_joint",
    "sample_state_from_prior",
    "redraw_data",
    "step_mu",
    "step_sigma2",
    "step_rho",
    "step_variance_hyper",
    "step_dynamic",
    "step_T",
    "step_lambda",
    "step_nu",
    "step_recenter",
    "step_rho_collapsed",
    "step_sigma2_collapsed",
    "step_rescale_walk",
    "Adaptation",
    "sweep",
    "sample_mixing",
    "sample_nu_from_prior",
]


class NumericalAbortError(RuntimeError):
    """A sweep produced a non-finite value; carries the iteration and block."""

    def __init__(self, iteration: int, block: str):
        self.iteration = iteration
        self.block = block
        super().__init__(f"non-finite value in block {block!r} at iteration {iteration}")


# floors keeping degenerate conditionals inside the samplers' stable domain
_RATE_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# likelihood-cell indexing
# ---------------------------------------------------------------------------


@dataclass
class FitData:
    """Flat view of the likelihood cells plus the index structure the sweeps need.

    Cells are sorted by (i, j). ``z`` stays writable so joint-validation
    simulators can redraw the data in place; everything else is fixed at
    construction. Development interactions are instantiated for likelihood
    cells with i >= 2 and j >= 2; each links to its nearest instantiated
    ancestor in the same column (gap > 1 only when drops punch holes), with
    the root at the beta_[1j] = 0 constraint.
    """

    n: int
    z: np.ndarray
    i_idx: np.ndarray
    j_idx: np.ndarray
    t_idx: np.ndarray
    i_max: int
    t_max: int
    row_cells: list
    diag_cells: list
    n_beta: int
    beta_cell: np.ndarray
    beta_parent: np.ndarray
    beta_gap: np.ndarray
    beta_child: np.ndarray
    beta_child_gap: np.ndarray
    beta_rows: list
    beta_i: np.ndarray
    beta_j: np.ndarray

    @property
    def N(self) -> int:
        return self.z.size

    @classmethod
    def from_logtriangle(cls, logtri: LogTriangle) -> "FitData":
        cells = sorted(logtri.cells(tags=(OBSERVED,)))
        if not cells:
            raise ValueError("no likelihood cells (observed, non-dropped)")
        return cls.from_cells(logtri.n, cells)

    @classmethod
    def from_cells(cls, n: int, cells: list) -> "FitData":
        i_idx = np.array([c[0] for c in cells], dtype=np.intp)
        j_idx = np.array([c[1] for c in cells], dtype=np.intp)
        z = np.array([c[2] for c in cells], dtype=float)
        t_idx = i_idx + j_idx - 1
        i_max = int(i_idx.max())
        t_max = int(t_idx.max())
        row_cells = [np.flatnonzero(i_idx == i) for i in range(i_max + 1)]
        diag_cells = [np.flatnonzero(t_idx == t) for t in range(t_max + 1)]

        beta_mask = (i_idx >= 2) & (j_idx >= 2)
        beta_cell = np.flatnonzero(beta_mask)
        n_beta = beta_cell.size
        beta_i = i_idx[beta_cell]
        beta_j = j_idx[beta_cell]
        by_pos = {(int(bi), int(bj)): b for b, (bi, bj) in enumerate(zip(beta_i, beta_j))}
        beta_parent = np.full(n_beta, -1, dtype=np.intp)
        beta_gap = np.empty(n_beta)
        beta_child = np.full(n_beta, -1, dtype=np.intp)
        beta_child_gap = np.ones(n_beta)
        for b in range(n_beta):
            bi, bj = int(beta_i[b]), int(beta_j[b])
            for up in range(bi - 1, 1, -1):
                if (up, bj) in by_pos:
                    beta_parent[b] = by_pos[(up, bj)]
                    break
            anchor = int(beta_i[beta_parent[b]]) if beta_parent[b] >= 0 else 1
            beta_gap[b] = bi - anchor
        for b in range(n_beta):
            if beta_parent[b] >= 0:
                p = beta_parent[b]
                beta_child[p] = b
                beta_child_gap[p] = beta_gap[b]
        beta_rows = [np.flatnonzero(beta_i == i) for i in range(i_max + 1)]
        return cls(
            n=n,
            z=z,
            i_idx=i_idx,
            j_idx=j_idx,
            t_idx=t_idx,
            i_max=i_max,
            t_max=t_max,
            row_cells=row_cells,
            diag_cells=diag_cells,
            n_beta=n_beta,
            beta_cell=beta_cell,
            beta_parent=beta_parent,
            beta_gap=beta_gap,
            beta_child=beta_child,
            beta_child_gap=beta_child_gap,
            beta_rows=beta_rows,
            beta_i=beta_i,
            beta_j=beta_j,
        )

    @classmethod
    def synthetic(cls, n: int) -> "FitData":
        """Full n x n upper triangle with zero data; handy for simulator tests."""
        cells = [(i, j, 0.0) for i in range(1, n + 1) for j in range(1, n - i + 2)]
        return cls.from_cells(n, cells)

    def beta_percell(self, state: ParameterState) -> np.ndarray:
        vals = np.zeros(self.N)
        if self.n_beta:
            vals[self.beta_cell] = state.beta
        return vals

    def beta_names(self) -> list:
        return [f"beta[{i},{j}]" for i, j in zip(self.beta_i, self.beta_j)]


def _mean_wo_T(state: ParameterState, data: FitData) -> np.ndarray:
    return state.mu + state.alpha[data.i_idx] + data.beta_percell(state) + state.gamma[data.t_idx]


# ---------------------------------------------------------------------------
# adaptive Metropolis bookkeeping
# ---------------------------------------------------------------------------


@dataclass
class AdaptiveState:
    """Global adaptive scaling state for one random-walk MH block.

    Robbins-Monro recursions with step (iter+1)^(-a_decay) drive the log
    proposal scale toward the 0.234 target acceptance rate while tracking a
    running mean/variance of the transformed chain. Updates happen whether
    the proposal is accepted or not.
    """

    mu_a: float = 0.0
    sigma2_a: float = 1.0
    kappa_a: float = 2.38
    iter: int = 0
    a_decay: float = 0.8
    alpha_star: float = 0.234
    accepted: int = 0
    proposed: int = 0

    def propose(self, x: float, rng) -> float:
        sd = math.sqrt(max(self.kappa_a * self.sigma2_a, 1e-12))
        return x + sd * rng.standard_normal()

    def update(self, x_new: float, alpha_prob: float) -> None:
        self.iter += 1
        g = self.iter ** (-self.a_decay)
        self.kappa_a = math.exp(math.log(self.kappa_a) + g * (alpha_prob - self.alpha_star))
        self.mu_a += g * (x_new - self.mu_a)
        self.sigma2_a = max(self.sigma2_a + g * ((x_new - self.mu_a) ** 2 - self.sigma2_a), 1e-8)

    def rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else math.nan


def _mh_step(x, logtarget, adaptive, rng):
    """One adaptive random-walk MH step on an unconstrained scale."""
    prop = adaptive.propose(x, rng)
    lt_cur = logtarget(x)
    lt_prop = logtarget(prop) if abs(prop) < 700.0 else -math.inf
    if lt_prop - lt_cur >= 0:
        alpha_prob = 1.0
    else:
        alpha_prob = math.exp(lt_prop - lt_cur) if lt_prop > -math.inf else 0.0
    accept = rng.random() < alpha_prob
    x_new = prop if accept else x
    adaptive.proposed += 1
    adaptive.accepted += int(accept)
    adaptive.update(x_new, alpha_prob)
    return x_new


# ---------------------------------------------------------------------------
# full-conditional updates (Gibbs blocks)
# ---------------------------------------------------------------------------


def step_mu(state: ParameterState, data: FitData, spec: ModelSpec, rng) -> None:
    denom = state.sigma2 * (1.0 - state.rho**2)
    partial = (
        data.z
        - state.alpha[data.i_idx]
        - data.beta_percell(state)
        - state.gamma[data.t_idx]
        - state.rho * state.T
    )
    prec = float(state.lam.sum()) / denom + 1.0 / spec.priors.s2_mu
    mean = float(np.sum(state.lam * partial)) / denom / prec
    state.mu = mean + rng.standard_normal() / math.sqrt(prec)


def step_sigma2(state: ParameterState, data: FitData, spec: ModelSpec, rng) -> None:
    a, b = spec.priors.var_ig
    r = data.z - _mean_wo_T(state, data) - state.rho * state.T
    if spec.skew:
        # both the observation and the latent-T densities carry a sigma^2 factor
        shape = a + data.N
        rate = b + 0.5 * float(np.sum(state.lam * (r**2 / (1.0 - state.rho**2) + state.T**2)))
    else:
        shape = a + 0.5 * data.N
        rate = b + 0.5 * float(np.sum(state.lam * r**2))
    state.sigma2 = dist.sample_inverse_gamma(rng, shape, rate)


def _rho_logtarget_parts(state: ParameterState, data: FitData):
    r0 = data.z - _mean_wo_T(state, data)
    lam = state.lam
    return (
        float(np.sum(lam * r0**2)),
        float(np.sum(lam * r0 * state.T)),
        float(np.sum(lam * state.T**2)),
    )


def _rho_logtarget(rho, qa, qb, qc, n_cells, sigma2, c, d):
    # includes the atanh-transform Jacobian log(1 - rho^2)
    one = 1.0 - rho * rho
    if one <= 0.0:
        return -math.inf
    return (
        -(0.5 * n_cells) * math.log(one)
        - (qa - 2.0 * rho * qb + rho * rho * qc) / (2.0 * sigma2 * one)
        + (c - 1.0) * math.log1p(rho)
        + (d - 1.0) * math.log1p(-rho)
        + math.log(one)
    )


def step_rho(state: ParameterState, adaptive: AdaptiveState, data: FitData, spec: ModelSpec, rng) -> None:
    if not spec.skew:
        return
    qa, qb, qc = _rho_logtarget_parts(state, data)
    c, d = spec.priors.rho_beta

    def logtarget(zeta):
        return _rho_logtarget(math.tanh(zeta), qa, qb, qc, data.N, state.sigma2, c, d)

    zeta_new = _mh_step(math.atanh(state.rho), logtarget, adaptive, rng)
    state.rho = math.tanh(zeta_new)


def step_variance_hyper(state: ParameterState, which: str, data: FitData, spec: ModelSpec, rng) -> None:
    a, b = spec.priors.var_ig
    if which == "alpha":
        incs2 = np.diff(state.alpha[1:]) ** 2
        count = data.i_max - 1
    elif which == "gamma":
        incs2 = np.diff(state.gamma[1:]) ** 2
        count = data.t_max - 1
    elif which == "beta":
        parent_vals = np.where(data.beta_parent >= 0, state.beta[data.beta_parent], 0.0)
        incs2 = (state.beta - parent_vals) ** 2 / data.beta_gap
        count = data.n_beta
    else:
        raise ValueError(f"unknown hyper block {which!r}")
    if count == 0:
        draw = dist.sample_inverse_gamma(rng, a, b)
    else:
        draw = dist.sample_inverse_gamma(rng, a + 0.5 * count, b + 0.5 * float(np.sum(incs2)))
    setattr(state, f"sigma2_{which}", draw)


def step_dynamic(state: ParameterState, which: str, data: FitData, spec: ModelSpec, rng) -> None:
    """Single-site Gibbs sweep over the free effects of one random-walk block."""
    denom = state.sigma2 * (1.0 - state.rho**2)
    if which == "alpha":
        base = (
            data.z
            - state.mu
            - data.beta_percell(state)
            - state.gamma[data.t_idx]
            - state.rho * state.T
        )
        s2e = state.sigma2_alpha
        for i in range(2, data.i_max + 1):
            cells = data.row_cells[i]
            lam_c = state.lam[cells]
            has_next = i + 1 <= data.i_max
            prec = float(lam_c.sum()) / denom + (1.0 + has_next) / s2e
            m = (
                float(np.sum(lam_c * base[cells])) / denom
                + (state.alpha[i - 1] + (state.alpha[i + 1] if has_next else 0.0)) / s2e
            ) / prec
            state.alpha[i] = m + rng.standard_normal() / math.sqrt(prec)
    elif which == "gamma":
        base = (
            data.z
            - state.mu
            - state.alpha[data.i_idx]
            - data.beta_percell(state)
            - state.rho * state.T
        )
        s2e = state.sigma2_gamma
        for t in range(2, data.t_max + 1):
            cells = data.diag_cells[t]
            lam_c = state.lam[cells]
            has_next = t + 1 <= data.t_max
            prec = float(lam_c.sum()) / denom + (1.0 + has_next) / s2e
            m = (
                float(np.sum(lam_c * base[cells])) / denom
                + (state.gamma[t - 1] + (state.gamma[t + 1] if has_next else 0.0)) / s2e
            ) / prec
            state.gamma[t] = m + rng.standard_normal() / math.sqrt(prec)
    elif which == "beta":
        if data.n_beta == 0:
            return
        base = (
            data.z
            - state.mu
            - state.alpha[data.i_idx]
            - state.gamma[data.t_idx]
            - state.rho * state.T
        )
        s2e = state.sigma2_beta
        for i in range(2, data.i_max + 1):
            ids = data.beta_rows[i]
            if ids.size == 0:
                continue
            cells = data.beta_cell[ids]
            lam_c = state.lam[cells]
            parent = data.beta_parent[ids]
            parent_vals = np.where(parent >= 0, state.beta[np.maximum(parent, 0)], 0.0)
            child = data.beta_child[ids]
            has_child = child >= 0
            child_vals = np.where(has_child, state.beta[np.maximum(child, 0)], 0.0)
            pg = data.beta_gap[ids] * s2e
            cg = data.beta_child_gap[ids] * s2e
            prec = lam_c / denom + 1.0 / pg + has_child / cg
            m = (lam_c * base[cells] / denom + parent_vals / pg + has_child * child_vals / cg) / prec
            state.beta[ids] = m + rng.standard_normal(ids.size) / np.sqrt(prec)
    else:
        raise ValueError(f"unknown dynamic block {which!r}")


def step_recenter(state: ParameterState, data: FitData, spec: ModelSpec, rng) -> None:
    """Exact Gibbs moves on the level trade-offs mu <-> gamma and mu <-> alpha.

    The likelihood pins the overall level split between mu and the random
    walks only through the first row / first diagonal, which makes single-site
    sweeps mix the level glacially. Shifting (mu + c, gamma_t - c) is a
    unit-Jacobian reparameterization whose conditional for c is Gaussian:
    drawing it exactly leaves the posterior invariant and decorrelates mu.
    """
    pr = spec.priors
    denom = state.sigma2 * (1.0 - state.rho**2)
    if data.t_max >= 2:
        cells = data.diag_cells[1]
        lam_c = state.lam[cells]
        r = (data.z - _mean_wo_T(state, data) - state.rho * state.T)[cells]
        prec = 1.0 / pr.s2_mu + 1.0 / state.sigma2_gamma + float(lam_c.sum()) / denom
        mean = (
            -state.mu / pr.s2_mu
            + state.gamma[2] / state.sigma2_gamma
            + float(np.sum(lam_c * r)) / denom
        ) / prec
        shift = mean + rng.standard_normal() / math.sqrt(prec)
        state.mu += shift
        state.gamma[2:] -= shift
    if data.i_max >= 2:
        cells = data.row_cells[1]
        lam_c = state.lam[cells]
        r = (data.z - _mean_wo_T(state, data) - state.rho * state.T)[cells]
        prec = 1.0 / pr.s2_mu + 1.0 / state.sigma2_alpha + float(lam_c.sum()) / denom
        mean = (
            -state.mu / pr.s2_mu
            + state.alpha[2] / state.sigma2_alpha
            + float(np.sum(lam_c * r)) / denom
        ) / prec
        shift = mean + rng.standard_normal() / math.sqrt(prec)
        state.mu += shift
        state.alpha[2:] -= shift


def step_rho_collapsed(state: ParameterState, adaptive: AdaptiveState, data: FitData, spec: ModelSpec, rng) -> None:
    """Adaptive MH on rho with the truncated-normal latents integrated out.

    Given lambda, the log amount is marginally skew-normal with a rho-free
    location and scale, so the collapsed target is the skewing factor alone.
    Must be followed by a fresh draw of T before anything else conditions on
    it (the sweep places the T update immediately after).
    """
    if not spec.skew:
        return
    r0 = data.z - _mean_wo_T(state, data)
    w = np.sqrt(state.lam / state.sigma2) * r0
    c, d = spec.priors.rho_beta

    def logtarget(zeta):
        rho = math.tanh(zeta)
        one = 1.0 - rho * rho
        if one <= 0.0:
            return -math.inf
        kappa = rho / math.sqrt(one)
        return (
            float(np.sum(special.log_ndtr(kappa * w)))
            + (c - 1.0) * math.log1p(rho)
            + (d - 1.0) * math.log1p(-rho)
            + math.log(one)
        )

    state.rho = math.tanh(_mh_step(math.atanh(state.rho), logtarget, adaptive, rng))


def step_rescale_walk(state: ParameterState, which: str, adaptive: AdaptiveState, data: FitData, spec: ModelSpec, rng) -> None:
    """Joint MH move on one evolution variance and its whole path.

    In innovation units u = increments / scale the path is ancillary, so the
    log variance can move with the path rescaling as path = scale * pattern.
    This breaks the slow variance <-> path coupling of the plain sweeps; the
    likelihood term is quadratic in the scale, so the target is cheap.
    """
    denom = state.sigma2 * (1.0 - state.rho**2)
    if which == "alpha":
        if data.i_max < 2:
            return
        var_cur = state.sigma2_alpha
        pattern = state.alpha / math.sqrt(var_cur)
        a_cell = pattern[data.i_idx]
        r_other = (
            data.z
            - state.mu
            - data.beta_percell(state)
            - state.gamma[data.t_idx]
            - state.rho * state.T
        )
    elif which == "gamma":
        if data.t_max < 2:
            return
        var_cur = state.sigma2_gamma
        pattern = state.gamma / math.sqrt(var_cur)
        a_cell = pattern[data.t_idx]
        r_other = (
            data.z
            - state.mu
            - state.alpha[data.i_idx]
            - data.beta_percell(state)
            - state.rho * state.T
        )
    elif which == "beta":
        if data.n_beta == 0:
            return
        var_cur = state.sigma2_beta
        pattern = state.beta / math.sqrt(var_cur)
        a_cell = np.zeros(data.N)
        a_cell[data.beta_cell] = pattern
        r_other = (
            data.z
            - state.mu
            - state.alpha[data.i_idx]
            - state.gamma[data.t_idx]
            - state.rho * state.T
        )
    else:
        raise ValueError(f"unknown walk {which!r}")

    lam = state.lam
    p1 = float(np.sum(lam * r_other * a_cell))
    p2 = float(np.sum(lam * a_cell**2))
    a, b = spec.priors.var_ig

    def logtarget(xi):
        if abs(xi) > 300.0:
            return -math.inf
        s = math.exp(0.5 * xi)
        return (2.0 * s * p1 - s * s * p2) / (2.0 * denom) - (a + 1.0) * xi - b * math.exp(-xi) + xi

    xi_new = _mh_step(math.log(var_cur), logtarget, adaptive, rng)
    scale_new = math.exp(0.5 * xi_new)
    if which == "alpha":
        state.sigma2_alpha = math.exp(xi_new)
        state.alpha = pattern * scale_new
    elif which == "gamma":
        state.sigma2_gamma = math.exp(xi_new)
        state.gamma = pattern * scale_new
    else:
        state.sigma2_beta = math.exp(xi_new)
        state.beta = pattern * scale_new


def step_sigma2_collapsed(state: ParameterState, adaptive: AdaptiveState, data: FitData, spec: ModelSpec, rng) -> None:
    """Adaptive MH on log sigma2 with the truncated-normal latents integrated out.

    Near-boundary rho makes sigma2 and the T field move in lockstep under the
    exact conjugate draw; the collapsed target breaks that anchor. As with the
    collapsed rho move, T is redrawn right after in the sweep.
    """
    if not spec.skew:
        return
    r0 = data.z - _mean_wo_T(state, data)
    lam = state.lam
    quad = float(np.sum(lam * r0**2))
    w0 = np.sqrt(lam) * r0
    kappa = state.rho / math.sqrt(1.0 - state.rho**2)
    a, b = spec.priors.var_ig
    half_n = 0.5 * data.N

    def logtarget(xi):
        if abs(xi) > 300.0:
            return -math.inf
        s2 = math.exp(xi)
        return (
            -half_n * xi
            - quad / (2.0 * s2)
            + float(np.sum(special.log_ndtr(kappa * w0 / math.sqrt(s2))))
            - (a + 1.0) * xi
            - b / s2
            + xi
        )

    state.sigma2 = math.exp(_mh_step(math.log(state.sigma2), logtarget, adaptive, rng))


def step_T(state: ParameterState, data: FitData, spec: ModelSpec, rng) -> None:
    if not spec.skew:
        return
    r0 = data.z - _mean_wo_T(state, data)
    m = state.rho * r0
    s2 = state.sigma2 * (1.0 - state.rho**2) / state.lam
    state.T = dist.sample_truncated_normal_lower(rng, m, s2, 0.0)


def step_lambda(state: ParameterState, data: FitData, spec: ModelSpec, rng) -> None:
    if spec.mixing == POINT:
        return
    r = data.z - _mean_wo_T(state, data) - state.rho * state.T
    if spec.skew:
        # observation and latent-T densities each contribute a lambda^(1/2)
        q = (r**2 / (1.0 - state.rho**2) + state.T**2) / (2.0 * state.sigma2)
        extra = 1.0
    else:
        q = r**2 / (2.0 * state.sigma2)
        extra = 0.5
    q = np.maximum(q, _RATE_FLOOR)
    nu = state.nu
    if spec.mixing == GAMMA_T:
        state.lam = rng.gamma(0.5 * nu + extra, 1.0 / (0.5 * nu + q))
    elif spec.mixing == BETA_SLASH:
        state.lam = np.minimum(
            dist.sample_gamma_right_truncated(rng, nu + extra, q, 1.0),
            np.nextafter(1.0, 0.0),
        )
    else:  # INVGAMMA_VG
        omega = extra - 0.5 * nu
        state.lam = np.array(
            [dist.sample_gig(rng, dist.GigParams(omega, nu, 2.0 * qc)) for qc in q]
        )


def _mixing_logpdf_sum(family, nu, lam) -> float:
    """Sum over cells of log p(lambda | nu); -inf outside the nu support."""
    n_cells = lam.size
    if family == POINT:
        return 0.0
    if nu is None or nu <= 0:
        return -math.inf
    if family == GAMMA_T:
        h = 0.5 * nu
        return float(
            n_cells * (h * math.log(h) - special.gammaln(h))
            + (h - 1.0) * np.sum(np.log(lam))
            - h * np.sum(lam)
        )
    if family == BETA_SLASH:
        if nu <= 1.0:
            return -math.inf
        return float(n_cells * math.log(nu) + (nu - 1.0) * np.sum(np.log(lam)))
    h = 0.5 * nu
    return float(
        n_cells * (h * math.log(h) - special.gammaln(h))
        - (h + 1.0) * np.sum(np.log(lam))
        - h * np.sum(1.0 / lam)
    )


def step_nu(state: ParameterState, adaptive: AdaptiveState, data: FitData, spec: ModelSpec, rng) -> None:
    if not spec.has_nu:
        return
    prior = spec.priors.nu(spec.mixing)
    if spec.mixing == BETA_SLASH:
        _step_nu_slash(state, data, prior, rng)
        return
    lam = state.lam

    def logtarget(xi):
        nu = math.exp(xi)
        return _mixing_logpdf_sum(spec.mixing, nu, lam) + prior.logpdf(nu) + xi

    state.nu = math.exp(_mh_step(math.log(state.nu), logtarget, adaptive, rng))


def _step_nu_slash(state: ParameterState, data: FitData, prior: NuPrior, rng) -> None:
    # exact left-truncated gamma draw; the Beta(nu, 1) likelihood contributes
    # nu^N exp(nu * sum(log lambda)) on top of the (truncated) prior
    sum_log = float(np.sum(np.log(state.lam)))
    lo, hi = 1.0, math.inf
    if prior.kind == "gamma":
        shape, rate = prior.a + data.N, prior.b - sum_log
    elif prior.kind == "exponential":
        shape, rate = 1.0 + data.N, prior.a - sum_log
    else:  # uniform
        shape, rate = 1.0 + data.N, -sum_log
        lo, hi = max(1.0, prior.a), prior.b
    state.nu = dist.sample_gamma_left_truncated(rng, shape, max(rate, _RATE_FLOOR), lo, hi)


# ---------------------------------------------------------------------------
# joint density (Eq.-level target, used by validation tests and MH checks)
# ---------------------------------------------------------------------------


def log_joint(state: ParameterState, data: FitData, spec: ModelSpec) -> float:
    """Log kernel of the joint posterior; additive constants in the data dropped."""
    pr = spec.priors
    rho, sigma2 = state.rho, state.sigma2
    if not -1 < rho < 1 or sigma2 <= 0:
        return -math.inf
    for v in (state.sigma2_alpha, state.sigma2_beta, state.sigma2_gamma):
        if v <= 0:
            return -math.inf
    lam = state.lam
    r = data.z - _mean_wo_T(state, data) - rho * state.T
    one = 1.0 - rho * rho
    out = float(
        0.5 * np.sum(np.log(lam))
        - 0.5 * data.N * math.log(sigma2 * one)
        - np.sum(lam * r**2) / (2.0 * sigma2 * one)
    )
    if spec.skew:
        if np.any(state.T < 0):
            return -math.inf
        out += float(
            0.5 * np.sum(np.log(lam))
            - 0.5 * data.N * math.log(sigma2)
            - np.sum(lam * state.T**2) / (2.0 * sigma2)
        )
        c, d = pr.rho_beta
        out += (c - 1.0) * math.log1p(rho) + (d - 1.0) * math.log1p(-rho)
    out += _mixing_logpdf_sum(spec.mixing, state.nu, lam)
    if spec.has_nu:
        lp = pr.nu(spec.mixing).logpdf(state.nu)
        if spec.mixing == BETA_SLASH and state.nu <= 1.0:
            lp = -math.inf
        out += lp

    # random-walk priors of the dynamic effects
    a_inc2 = np.diff(state.alpha[1:]) ** 2
    g_inc2 = np.diff(state.gamma[1:]) ** 2
    out += -0.5 * a_inc2.size * math.log(state.sigma2_alpha) - float(np.sum(a_inc2)) / (
        2.0 * state.sigma2_alpha
    )
    out += -0.5 * g_inc2.size * math.log(state.sigma2_gamma) - float(np.sum(g_inc2)) / (
        2.0 * state.sigma2_gamma
    )
    if data.n_beta:
        parent_vals = np.where(data.beta_parent >= 0, state.beta[np.maximum(data.beta_parent, 0)], 0.0)
        b_inc2 = (state.beta - parent_vals) ** 2 / data.beta_gap
        out += -0.5 * data.n_beta * math.log(state.sigma2_beta) - float(np.sum(b_inc2)) / (
            2.0 * state.sigma2_beta
        )

    # static priors
    out += -state.mu**2 / (2.0 * pr.s2_mu)
    a, b = pr.var_ig
    for v in (sigma2, state.sigma2_alpha, state.sigma2_beta, state.sigma2_gamma):
        out += -(a + 1.0) * math.log(v) - b / v
    return out


# ---------------------------------------------------------------------------
# simulators used by joint-distribution validation and prediction
# ---------------------------------------------------------------------------


def sample_mixing(rng, family, nu, size=None):
    """Draws from the mixing prior p(lambda | nu)."""
    if family == POINT:
        return np.ones(size) if size is not None else 1.0
    if family == GAMMA_T:
        return rng.gamma(0.5 * nu, 2.0 / nu, size)
    if family == BETA_SLASH:
        return np.minimum(rng.beta(nu, 1.0, size), np.nextafter(1.0, 0.0))
    if family == INVGAMMA_VG:
        return 1.0 / rng.gamma(0.5 * nu, 2.0 / nu, size)
    raise ValueError(f"unknown mixing family {family!r}")


def sample_nu_from_prior(rng, spec: ModelSpec) -> float | None:
    if not spec.has_nu:
        return None
    prior = spec.priors.nu(spec.mixing)
    lo = 1.0 if spec.mixing == BETA_SLASH else 0.0
    if prior.kind == "uniform":
        return float(rng.uniform(max(prior.a, lo), prior.b))
    shape, rate = (prior.a, prior.b) if prior.kind == "gamma" else (1.0, prior.a)
    if lo > 0.0:
        return dist.sample_gamma_left_truncated(rng, shape, rate, lo)
    return float(rng.gamma(shape, 1.0 / rate))


def sample_state_from_prior(spec: ModelSpec, data: FitData, rng) -> ParameterState:
    """Exact draw of all unknowns from the hierarchical prior."""
    pr = spec.priors
    a, b = pr.var_ig
    s2 = dist.sample_inverse_gamma(rng, a, b)
    s2a = dist.sample_inverse_gamma(rng, a, b)
    s2b = dist.sample_inverse_gamma(rng, a, b)
    s2g = dist.sample_inverse_gamma(rng, a, b)
    rho = 2.0 * rng.beta(*pr.rho_beta) - 1.0 if spec.skew else 0.0
    nu = sample_nu_from_prior(rng, spec)

    alpha = np.zeros(data.i_max + 1)
    for i in range(2, data.i_max + 1):
        alpha[i] = alpha[i - 1] + math.sqrt(s2a) * rng.standard_normal()
    gamma = np.zeros(data.t_max + 1)
    for t in range(2, data.t_max + 1):
        gamma[t] = gamma[t - 1] + math.sqrt(s2g) * rng.standard_normal()
    beta = np.zeros(data.n_beta)
    for bix in range(data.n_beta):  # cell order puts parents before children
        parent_val = beta[data.beta_parent[bix]] if data.beta_parent[bix] >= 0 else 0.0
        beta[bix] = parent_val + math.sqrt(data.beta_gap[bix] * s2b) * rng.standard_normal()

    lam = np.asarray(sample_mixing(rng, spec.mixing, nu, size=data.N), dtype=float)
    if spec.skew:
        T = dist.sample_truncated_normal_lower(rng, 0.0, s2 / lam, 0.0)
    else:
        T = np.zeros(data.N)
    return ParameterState(
        mu=math.sqrt(pr.s2_mu) * rng.standard_normal(),
        rho=rho,
        sigma2=s2,
        sigma2_alpha=s2a,
        sigma2_beta=s2b,
        sigma2_gamma=s2g,
        nu=nu,
        alpha=alpha,
        beta=beta,
        gamma=gamma,
        T=T,
        lam=lam,
    )


def redraw_data(state: ParameterState, data: FitData, spec: ModelSpec, rng) -> None:
    """Replace the observations with a draw from the model given the state."""
    m = _mean_wo_T(state, data) + state.rho * state.T
    var = state.sigma2 * (1.0 - state.rho**2) / state.lam
    data.z[:] = m + np.sqrt(var) * rng.standard_normal(data.N)


# ---------------------------------------------------------------------------
# chain driver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainConfig:
    """Iteration schedule of a single chain."""

    n_iter: int = 600_000
    burn_in: int = 100_000
    thin: int = 100
    seed: int = 20240811
    target_ess: int = 5000
    store_latents: bool = False

    def __post_init__(self):
        if not (0 <= self.burn_in < self.n_iter):
            raise ValueError("need 0 <= burn_in < n_iter")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")

    @property
    def n_draws(self) -> int:
        return (self.n_iter - self.burn_in) // self.thin


DEFAULT_CHAIN_CONFIG = ChainConfig()


@dataclass
class ChainOutput:
    """Thinned post-burn-in draws plus adaptation and provenance metadata."""

    spec: ModelSpec
    config: ChainConfig
    data: FitData
    statics: dict
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    T: np.ndarray | None
    lam: np.ndarray | None
    acceptance: dict

    @property
    def n_draws(self) -> int:
        return self.alpha.shape[0]

    def static_names(self) -> list:
        return list(self.statics.keys())

    def param_names(self) -> list:
        names = self.static_names()
        names += [f"alpha[{i}]" for i in range(2, self.data.i_max + 1)]
        names += self.data.beta_names()
        names += [f"gamma[{t}]" for t in range(2, self.data.t_max + 1)]
        return names

    def param_matrix(self) -> np.ndarray:
        cols = [self.statics[k] for k in self.statics]
        cols += [self.alpha[:, i] for i in range(2, self.data.i_max + 1)]
        cols += [self.beta[:, b] for b in range(self.data.n_beta)]
        cols += [self.gamma[:, t] for t in range(2, self.data.t_max + 1)]
        return np.column_stack(cols) if cols else np.empty((self.n_draws, 0))

    def state_at(self, k: int) -> ParameterState:
        """Reconstruct the k-th stored draw as a ParameterState."""
        s = self.statics
        return ParameterState(
            mu=float(s["mu"][k]),
            rho=float(s["rho"][k]) if "rho" in s else 0.0,
            sigma2=float(s["sigma2"][k]),
            sigma2_alpha=float(s["sigma2_alpha"][k]),
            sigma2_beta=float(s["sigma2_beta"][k]),
            sigma2_gamma=float(s["sigma2_gamma"][k]),
            nu=float(s["nu"][k]) if "nu" in s else None,
            alpha=self.alpha[k].copy(),
            beta=self.beta[k].copy(),
            gamma=self.gamma[k].copy(),
            T=self.T[k].copy() if self.T is not None else np.zeros(self.data.N),
            lam=self.lam[k].copy() if self.lam is not None else np.ones(self.data.N),
        )

    def to_csv(self) -> str:
        header = ",".join(self.param_names())
        mat = self.param_matrix()
        lines = [header]
        for row in mat:
            lines.append(",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


def _static_fields(spec: ModelSpec) -> list:
    names = ["mu", "sigma2", "sigma2_alpha", "sigma2_beta", "sigma2_gamma"]
    if spec.skew:
        names.append("rho")
    if spec.has_nu:
        names.append("nu")
    return names


def _guard(iteration: int, block: str, *values) -> None:
    for v in values:
        if np.isscalar(v) or isinstance(v, float):
            ok = math.isfinite(v)
        else:
            ok = bool(np.isfinite(v).all())
        if not ok:
            raise NumericalAbortError(iteration, block)


@dataclass
class Adaptation:
    """Adaptive-scaling states of the three MH blocks."""

    rho: AdaptiveState = field(default_factory=AdaptiveState)
    nu: AdaptiveState = field(default_factory=AdaptiveState)
    rho_collapsed: AdaptiveState = field(default_factory=AdaptiveState)
    sigma2_collapsed: AdaptiveState = field(default_factory=AdaptiveState)
    scale_alpha: AdaptiveState = field(default_factory=AdaptiveState)
    scale_beta: AdaptiveState = field(default_factory=AdaptiveState)
    scale_gamma: AdaptiveState = field(default_factory=AdaptiveState)

    def items(self):
        return (
            ("rho", self.rho),
            ("nu", self.nu),
            ("rho_collapsed", self.rho_collapsed),
            ("sigma2_collapsed", self.sigma2_collapsed),
            ("scale_alpha", self.scale_alpha),
            ("scale_beta", self.scale_beta),
            ("scale_gamma", self.scale_gamma),
        )

    def snapshot(self) -> dict:
        return {name: (st.accepted, st.proposed) for name, st in self.items()}


def sweep(state, data, spec, rng, adapt: Adaptation, iteration=0) -> None:
    """One Algorithm-1 pass (effects, static block, latent T, mixing field)
    plus the recentering and collapsed-rho mixing moves."""
    step_dynamic(state, "alpha", data, spec, rng)
    _guard(iteration, "alpha", state.alpha)
    step_dynamic(state, "beta", data, spec, rng)
    _guard(iteration, "beta", state.beta)
    step_dynamic(state, "gamma", data, spec, rng)
    _guard(iteration, "gamma", state.gamma)
    step_recenter(state, data, spec, rng)
    _guard(iteration, "recenter", state.mu, state.alpha, state.gamma)
    step_mu(state, data, spec, rng)
    step_sigma2(state, data, spec, rng)
    _guard(iteration, "theta", state.mu, state.sigma2)
    step_rho(state, adapt.rho, data, spec, rng)
    step_variance_hyper(state, "alpha", data, spec, rng)
    step_variance_hyper(state, "beta", data, spec, rng)
    step_variance_hyper(state, "gamma", data, spec, rng)
    step_rescale_walk(state, "alpha", adapt.scale_alpha, data, spec, rng)
    step_rescale_walk(state, "beta", adapt.scale_beta, data, spec, rng)
    step_rescale_walk(state, "gamma", adapt.scale_gamma, data, spec, rng)
    _guard(
        iteration,
        "hyper",
        state.rho,
        state.sigma2_alpha,
        state.sigma2_beta,
        state.sigma2_gamma,
    )
    step_nu(state, adapt.nu, data, spec, rng)
    if spec.has_nu:
        _guard(iteration, "nu", state.nu)
    step_rho_collapsed(state, adapt.rho_collapsed, data, spec, rng)
    _guard(iteration, "rho_collapsed", state.rho)
    step_sigma2_collapsed(state, adapt.sigma2_collapsed, data, spec, rng)
    _guard(iteration, "sigma2_collapsed", state.sigma2)
    step_T(state, data, spec, rng)
    _guard(iteration, "T", state.T)
    step_lambda(state, data, spec, rng)
    _guard(iteration, "lambda", state.lam)


def run_chain(spec: ModelSpec, logtri, config: ChainConfig, rng=None) -> ChainOutput:
    """Run the Gibbs sampler and collect thinned post-burn-in draws.

    ``logtri`` may be a LogTriangle or a prebuilt FitData. With a fixed seed
    the output is bit-identical across runs.
    """
    data = logtri if isinstance(logtri, FitData) else FitData.from_logtriangle(logtri)
    rng = dist.make_rng(config.seed if rng is None else rng)
    state = init_state(spec, data, rng)
    adapt = Adaptation()

    keep = config.n_draws
    fields = _static_fields(spec)
    statics = {k: np.empty(keep) for k in fields}
    alpha = np.empty((keep, data.i_max + 1))
    gamma = np.empty((keep, data.t_max + 1))
    beta = np.empty((keep, data.n_beta))
    t_field = np.empty((keep, data.N)) if config.store_latents else None
    l_field = np.empty((keep, data.N)) if config.store_latents else None

    pre_counts = {}
    k = 0
    for it in range(1, config.n_iter + 1):
        sweep(state, data, spec, rng, adapt, iteration=it)
        if it == config.burn_in:
            pre_counts = adapt.snapshot()
        if it > config.burn_in and (it - config.burn_in) % config.thin == 0:
            for name in fields:
                statics[name][k] = getattr(state, name)
            alpha[k] = state.alpha
            gamma[k] = state.gamma
            beta[k] = state.beta
            if config.store_latents:
                t_field[k] = state.T
                l_field[k] = state.lam
            k += 1

    def _rate(acc, prop):
        return acc / prop if prop else math.nan

    acceptance = {}
    for name, st in adapt.items():
        pa, pp = pre_counts.get(name, (0, 0))
        acceptance[name] = {
            "overall": st.rate(),
            "burn_in": _rate(pa, pp),
            "post": _rate(st.accepted - pa, st.proposed - pp),
        }
    return ChainOutput(
        spec=spec,
        config=config,
        data=data,
        statics=statics,
        alpha=alpha,
        beta=beta,
        gamma=gamma,
        T=t_field,
        lam=l_field,
        acceptance=acceptance,
    )
