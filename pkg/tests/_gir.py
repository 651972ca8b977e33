"""Shared joint-distribution (getting-it-right) test machinery.

Compares two ways of sampling (parameters, data) from the same hierarchical
joint: exact prior draws versus repeated full-conditional sweeps with the
data redrawn between sweeps. Any error in any conditional makes the two
parameter marginals diverge.
"""

import numpy as np
from scipy import stats

from skewreserve import distributions as dist
from skewreserve import mcmc
from skewreserve.model import NuPrior, Priors, spec_from_code

GIR_PRIORS = Priors(
    s2_mu=1.0,
    rho_beta=(2.0, 2.0),
    var_ig=(3.0, 2.0),
    nu_prior=NuPrior("gamma", 8.0, 2.0),
)


def collect_params(spec, data, state):
    names = ["mu", "sigma2", "sigma2_alpha", "sigma2_beta", "sigma2_gamma",
             "alpha[2]", "alpha[last]", "gamma[2]", "gamma[last]"]
    out = [state.mu, state.sigma2, state.sigma2_alpha, state.sigma2_beta,
           state.sigma2_gamma, state.alpha[2], state.alpha[data.i_max],
           state.gamma[2], state.gamma[data.t_max]]
    if data.n_beta:
        names.append("beta[first]")
        out.append(state.beta[0])
    if spec.skew:
        names.append("rho")
        out.append(state.rho)
    if spec.has_nu:
        names.append("nu")
        out.append(state.nu)
    names += ["T[first]", "lambda[first]"]
    out += [state.T[0], state.lam[0]]
    return names, out


def getting_it_right(code, n_keep, thin, seed, n=4):
    """Run both simulators; returns {param: KS p-value}."""
    spec = spec_from_code(code, GIR_PRIORS)
    rng = dist.make_rng(seed)
    data = mcmc.FitData.synthetic(n)

    marginal = []
    for _ in range(n_keep):
        st = mcmc.sample_state_from_prior(spec, data, rng)
        names, row = collect_params(spec, data, st)
        marginal.append(row)
    marginal = np.array(marginal)

    st = mcmc.sample_state_from_prior(spec, data, rng)
    mcmc.redraw_data(st, data, spec, rng)
    adapt = mcmc.Adaptation()
    successive = []
    for it in range(n_keep * thin):
        mcmc.sweep(st, data, spec, rng, adapt, it)
        mcmc.redraw_data(st, data, spec, rng)
        if (it + 1) % thin == 0:
            successive.append(collect_params(spec, data, st)[1])
    successive = np.array(successive)

    return {
        name: stats.ks_2samp(marginal[:, k], successive[:, k]).pvalue
        for k, name in enumerate(names)
    }
