"""Model-family specification, priors, parameter state and moment formulas.

Eight model variants arise from crossing the skew flag with four mixing
families for the latent scale variable:

====== =============================== ==========================
code   mixing law                      marginal law of the log claim
====== =============================== ==========================
n/sn   point mass at 1                 (skew-)normal
st/sst Gamma(nu/2, nu/2)               (skew-)Student-t
s/ss   Beta(nu, 1)                     (skew-)slash
vg/svg InverseGamma(nu/2, nu/2)        (skew-)variance-gamma
====== =============================== ==========================
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from .triangle import LogTriangle

__all__ = [
    "MixingFamily",
    "POINT",
    "GAMMA_T",
    "BETA_SLASH",
    "INVGAMMA_VG",
    "NuPrior",
    "Priors",
    "ModelSpec",
    "ParameterState",
    "MomentNotDefinedError",
    "MODEL_CODES",
    "spec_from_code",
    "prior_scenario",
    "rho_to_kappa",
    "kappa_to_rho",
    "mixing_prior_logdensity",
    "e_lambda_pow",
    "marginal_mean",
    "marginal_variance",
    "marginal_skewness",
    "marginal_kurtosis",
    "init_state",
]

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)

# mixing family tags
POINT = "point"
GAMMA_T = "gamma_t"
BETA_SLASH = "beta_slash"
INVGAMMA_VG = "invgamma_vg"

MixingFamily = str
_FAMILIES = (POINT, GAMMA_T, BETA_SLASH, INVGAMMA_VG)


class MomentNotDefinedError(ValueError):
    """Requested mixing moment does not exist at this tail parameter."""


@dataclass(frozen=True)
class NuPrior:
    """Prior for the tail parameter: gamma(a, b), uniform(lo, hi) or exponential(rate)."""

    kind: str = "gamma"
    a: float = 12.0
    b: float = 0.8

    def __post_init__(self):
        if self.kind not in ("gamma", "uniform", "exponential"):
            raise ValueError(f"unknown nu prior kind {self.kind!r}")
        if self.a <= 0 or self.b <= 0 or (self.kind == "uniform" and self.b <= self.a):
            raise ValueError(f"invalid nu prior parameters {self}")

    def mean(self) -> float:
        if self.kind == "gamma":
            return self.a / self.b
        if self.kind == "uniform":
            return 0.5 * (self.a + self.b)
        return 1.0 / self.a  # exponential(rate=a)

    def logpdf(self, nu: float) -> float:
        """Unnormalized log prior density (support violations give -inf)."""
        if nu <= 0:
            return -math.inf
        if self.kind == "gamma":
            return (self.a - 1.0) * math.log(nu) - self.b * nu
        if self.kind == "uniform":
            return 0.0 if self.a <= nu <= self.b else -math.inf
        return -self.a * nu


def _default_nu_prior(family: MixingFamily) -> NuPrior:
    if family == BETA_SLASH:
        return NuPrior("gamma", 0.2, 0.05)
    return NuPrior("gamma", 12.0, 0.8)


@dataclass(frozen=True)
class Priors:
    """Hyperparameters of the vague independent priors on the statics.

    mu ~ N(0, s2_mu); (1 + rho)/2 ~ Beta(c, d); each variance parameter
    ~ InverseGamma(a, b); nu per family-specific NuPrior. The slash nu prior
    is truncated to (1, inf) to match its full-conditional support.
    """

    s2_mu: float = 100.0
    rho_beta: tuple[float, float] = (1.0, 1.0)
    var_ig: tuple[float, float] = (0.001, 0.001)
    nu_prior: NuPrior | None = None

    def __post_init__(self):
        for v in (self.s2_mu, *self.rho_beta, *self.var_ig):
            if v <= 0:
                raise ValueError("prior hyperparameters must be strictly positive")

    def nu(self, family: MixingFamily) -> NuPrior:
        return self.nu_prior if self.nu_prior is not None else _default_nu_prior(family)


@dataclass(frozen=True)
class ModelSpec:
    """One of the eight model variants plus its prior configuration."""

    skew: bool
    mixing: MixingFamily
    priors: Priors = field(default_factory=Priors)

    def __post_init__(self):
        if self.mixing not in _FAMILIES:
            raise ValueError(f"unknown mixing family {self.mixing!r}")

    @property
    def has_nu(self) -> bool:
        return self.mixing != POINT

    @property
    def code(self) -> str:
        return {v: k for k, v in MODEL_CODES.items()}[(self.skew, self.mixing)]


MODEL_CODES = {
    "n": (False, POINT),
    "st": (False, GAMMA_T),
    "s": (False, BETA_SLASH),
    "vg": (False, INVGAMMA_VG),
    "sn": (True, POINT),
    "sst": (True, GAMMA_T),
    "ss": (True, BETA_SLASH),
    "svg": (True, INVGAMMA_VG),
}


def spec_from_code(code: str, priors: Priors | None = None) -> ModelSpec:
    """Build a ModelSpec from one of the eight short model codes."""
    try:
        skew, mixing = MODEL_CODES[code.lower()]
    except KeyError:
        raise ValueError(f"unknown model code {code!r}; valid: {sorted(MODEL_CODES)}") from None
    return ModelSpec(skew=skew, mixing=mixing, priors=priors or Priors())


def prior_scenario(number: int, base: Priors | None = None) -> Priors:
    """Named prior-sensitivity scenarios for the case study (skew-t).

    1: variance hyperpriors IG(0.01, 0.01); 2: the defaults; 3: Beta(1/2, 1/2)
    on (1 + rho)/2; 4: nu ~ Uniform(2, 40); 5: nu ~ Exponential(0.3);
    6: Jeffreys prior on nu -- documented stub, not implemented.
    """
    base = base or Priors()
    if number == 1:
        return replace(base, var_ig=(0.01, 0.01))
    if number == 2:
        return base
    if number == 3:
        return replace(base, rho_beta=(0.5, 0.5))
    if number == 4:
        return replace(base, nu_prior=NuPrior("uniform", 2.0, 40.0))
    if number == 5:
        return replace(base, nu_prior=NuPrior("exponential", 0.3))
    if number == 6:
        raise NotImplementedError("scenario 6 (Jeffreys prior on nu) is a documented stub")
    raise ValueError(f"unknown prior scenario {number}")


# ---------------------------------------------------------------------------
# skewness parameter maps
# ---------------------------------------------------------------------------


def rho_to_kappa(rho: float) -> float:
    if not -1.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (-1, 1), got {rho}")
    return rho / math.sqrt(1.0 - rho**2)


def kappa_to_rho(kappa: float) -> float:
    return kappa / math.sqrt(1.0 + kappa**2)


# ---------------------------------------------------------------------------
# mixing-family moments and densities
# ---------------------------------------------------------------------------


def mixing_prior_logdensity(family: MixingFamily, nu, lam) -> float:
    """log p(lambda | nu) for the family's mixing law."""
    if family == POINT:
        if lam != 1.0:
            raise ValueError("point mixing has support {1}")
        return 0.0
    if nu is None or nu <= 0:
        raise ValueError(f"nu must be > 0 for family {family}")
    if family == GAMMA_T:
        if lam <= 0:
            raise ValueError("gamma_t mixing has support (0, inf)")
        h = 0.5 * nu
        return h * math.log(h) - special.gammaln(h) + (h - 1.0) * math.log(lam) - h * lam
    if family == BETA_SLASH:
        if not 0.0 < lam < 1.0:
            raise ValueError("beta_slash mixing has support (0, 1)")
        if nu <= 1.0:
            raise ValueError("slash nu must exceed 1")
        return math.log(nu) + (nu - 1.0) * math.log(lam)
    if family == INVGAMMA_VG:
        if lam <= 0:
            raise ValueError("invgamma_vg mixing has support (0, inf)")
        h = 0.5 * nu
        return h * math.log(h) - special.gammaln(h) - (h + 1.0) * math.log(lam) - h / lam
    raise ValueError(f"unknown mixing family {family!r}")


# smallest nu at which E(lambda^k) exists, per family, keyed by -2k
_NU_FLOOR = {
    GAMMA_T: {1: 1.0, 2: 2.0, 3: 3.0, 4: 4.0},
    BETA_SLASH: {1: 0.5, 2: 1.0, 3: 1.5, 4: 2.0},
}


def e_lambda_pow(family: MixingFamily, nu, k) -> float:
    """E(lambda^k) for k in {-1/2, -1, -3/2, -2}.

    Raises MomentNotDefinedError when the moment does not exist at this nu.
    """
    if k not in (-0.5, -1.0, -1.5, -2.0):
        raise ValueError(f"unsupported moment order k={k}")
    if family == POINT:
        return 1.0
    if nu is None or nu <= 0:
        raise ValueError(f"nu must be > 0 for family {family}")
    key = int(round(-2 * k))
    if family == GAMMA_T:
        if nu <= _NU_FLOOR[GAMMA_T][key]:
            raise MomentNotDefinedError(f"E(lambda^{k}) of gamma_t needs nu > {-2 * k}")
        h = 0.5 * nu
        return math.exp(special.gammaln(h + k) - special.gammaln(h)) * h ** (-k)
    if family == BETA_SLASH:
        if nu <= _NU_FLOOR[BETA_SLASH][key]:
            raise MomentNotDefinedError(f"E(lambda^{k}) of beta_slash needs nu > {-k}")
        return nu / (nu + k)
    if family == INVGAMMA_VG:
        h = 0.5 * nu
        return math.exp(special.gammaln(h - k) - special.gammaln(h)) * h**k
    raise ValueError(f"unknown mixing family {family!r}")


def _eps_moments(rho: float) -> tuple[float, float, float, float]:
    # raw moments of the standard skew-normal shock rho|T1| + sqrt(1-rho^2) T2
    return (
        rho * SQRT_2_OVER_PI,
        1.0,
        SQRT_2_OVER_PI * (3.0 * rho - rho**3),
        3.0,
    )


def marginal_mean(spec: ModelSpec, mu_ij: float, sigma2: float, rho: float, nu=None) -> float:
    """E(Z) = mu_ij + sigma rho sqrt(2/pi) E(lambda^(-1/2))."""
    m1 = e_lambda_pow(spec.mixing, nu, -0.5)
    return mu_ij + math.sqrt(sigma2) * rho * SQRT_2_OVER_PI * m1


def marginal_variance(spec: ModelSpec, sigma2: float, rho: float, nu=None) -> float:
    """Var(Z) = sigma^2 (E(lambda^-1) - rho^2 (2/pi) E^2(lambda^(-1/2)))."""
    m1 = e_lambda_pow(spec.mixing, nu, -0.5)
    m2 = e_lambda_pow(spec.mixing, nu, -1.0)
    return sigma2 * (m2 - rho**2 * (2.0 / math.pi) * m1**2)


def _central_moments(spec: ModelSpec, rho: float, nu):
    e1, e2, e3, e4 = _eps_moments(rho)
    m1 = e_lambda_pow(spec.mixing, nu, -0.5)
    m2 = e_lambda_pow(spec.mixing, nu, -1.0)
    m3 = e_lambda_pow(spec.mixing, nu, -1.5)
    m4 = e_lambda_pow(spec.mixing, nu, -2.0)
    c1 = m1 * e1
    eta2 = m2 * e2 - c1**2
    eta3 = m3 * e3 - 3.0 * m2 * e2 * c1 + 2.0 * c1**3
    eta4 = m4 * e4 - 4.0 * m3 * e3 * c1 + 6.0 * m2 * e2 * c1**2 - 3.0 * c1**4
    return eta2, eta3, eta4


def marginal_skewness(spec: ModelSpec, rho: float, nu=None) -> float:
    """Standardized third moment, assembled from the scale-mixture representation."""
    eta2, eta3, _ = _central_moments(spec, rho, nu)
    return eta3 / eta2**1.5


def marginal_kurtosis(spec: ModelSpec, rho: float, nu=None) -> float:
    """Standardized fourth moment (3 for the Gaussian reduction)."""
    eta2, _, eta4 = _central_moments(spec, rho, nu)
    return eta4 / eta2**2


# ---------------------------------------------------------------------------
# parameter state
# ---------------------------------------------------------------------------

_SIGMA2_FLOOR = 1e-6


@dataclass
class ParameterState:
    """One MCMC state: statics, dynamic effects and latent fields.

    ``alpha`` has slot i (1-based) for accident effects with alpha[1] = 0
    pinned and slot 0 unused; ``gamma`` likewise over calendar indices.
    ``beta``, ``T`` and ``lam`` are flat arrays aligned with the fit's
    likelihood-cell ordering (beta only over its instantiated cells).
    """

    mu: float
    rho: float
    sigma2: float
    sigma2_alpha: float
    sigma2_beta: float
    sigma2_gamma: float
    nu: float | None
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    T: np.ndarray
    lam: np.ndarray

    def copy(self) -> "ParameterState":
        return ParameterState(
            mu=self.mu,
            rho=self.rho,
            sigma2=self.sigma2,
            sigma2_alpha=self.sigma2_alpha,
            sigma2_beta=self.sigma2_beta,
            sigma2_gamma=self.sigma2_gamma,
            nu=self.nu,
            alpha=self.alpha.copy(),
            beta=self.beta.copy(),
            gamma=self.gamma.copy(),
            T=self.T.copy(),
            lam=self.lam.copy(),
        )

    def check(self, spec: ModelSpec) -> None:
        """Assert every state invariant; raises ValueError on violation."""
        if not -1.0 < self.rho < 1.0:
            raise ValueError(f"rho={self.rho} outside (-1, 1)")
        for name in ("sigma2", "sigma2_alpha", "sigma2_beta", "sigma2_gamma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if not spec.skew and (self.rho != 0.0 or np.any(self.T != 0.0)):
            raise ValueError("non-skew spec requires rho = 0 and T = 0")
        if np.any(self.T < 0):
            raise ValueError("T field must be nonnegative")
        if np.any(self.lam <= 0):
            raise ValueError("lambda field must be positive")
        if spec.mixing == POINT and np.any(self.lam != 1.0):
            raise ValueError("point mixing pins lambda = 1")
        if spec.mixing == BETA_SLASH:
            if np.any(self.lam >= 1.0):
                raise ValueError("slash lambda must lie in (0, 1)")
            if self.nu is None or self.nu <= 1.0:
                raise ValueError("slash nu must exceed 1")
        if spec.has_nu and (self.nu is None or self.nu <= 0):
            raise ValueError("nu must be > 0 for heavy-tailed families")
        if self.alpha[1] != 0.0 or self.gamma[1] != 0.0:
            raise ValueError("alpha and gamma initial conditions must stay pinned at 0")
        for v in (self.mu, self.sigma2):
            if not np.isfinite(v):
                raise ValueError("non-finite static parameter")


def init_state(spec: ModelSpec, logtri: LogTriangle, rng=None) -> ParameterState:
    """Deterministic starting state built from the likelihood cells.

    mu and sigma2 come from the sample mean/variance of the log data (with a
    small variance floor for degenerate constant triangles), dynamic effects
    start at zero, rho at zero, nu at its prior mean, lambda at 1 (0.99 for
    the slash family whose support is open at 1) and T at the half-normal
    mean sqrt(2/pi) sigma.
    """
    from .mcmc import FitData  # deferred: mcmc depends on model

    data = logtri if isinstance(logtri, FitData) else FitData.from_logtriangle(logtri)
    z = data.z
    if z.size == 0:
        raise ValueError("no likelihood cells to initialize from")
    sigma2 = max(float(np.var(z)), _SIGMA2_FLOOR)
    nu = None
    if spec.has_nu:
        nu = spec.priors.nu(spec.mixing).mean()
        if spec.mixing == BETA_SLASH:
            nu = max(nu, 1.05)
    lam0 = 0.99 if spec.mixing == BETA_SLASH else 1.0
    n_cells = z.size
    state = ParameterState(
        mu=float(np.mean(z)),
        rho=0.0,
        sigma2=sigma2,
        sigma2_alpha=0.1,
        sigma2_beta=0.1,
        sigma2_gamma=0.1,
        nu=nu,
        alpha=np.zeros(data.i_max + 1),
        beta=np.zeros(data.n_beta),
        gamma=np.zeros(data.t_max + 1),
        T=np.full(n_cells, SQRT_2_OVER_PI * math.sqrt(sigma2)) if spec.skew else np.zeros(n_cells),
        lam=np.full(n_cells, lam0),
    )
    return state
