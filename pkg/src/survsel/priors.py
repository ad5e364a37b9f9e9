"""Coefficient and model-space priors.

Three coefficient-prior families share a group-Zellner structure on the
spline blocks and differ on the linear coefficients:

* ``zellner``: Normal(0, g_L * n / (x_j' x_j)), a local prior.
* ``pmom``: quadratic-MOM density (alpha_j^2 / g_M) * Normal(0, g_M),
  vanishing at zero.
* ``pemom``: exp(sqrt(2) - g_E / alpha_j^2) * Normal(0, g_E), vanishing
  at zero with all derivatives.

Densities are expressed in the (alpha, kappa, rho) parameterization used
by the optimizer, rho = log(tau); the scale factor carries the inverse
gamma prior on sigma^2 = exp(-2 rho) with its change-of-variable terms.
Spline-block Gram matrices use all rows of the design.

The model prior factorizes over the number of active covariates and the
number of non-linear effects; Beta-Binomial, Binomial and Complexity
variants are supported, all up to one global constant that is never
needed because only prior ratios enter posterior quantities.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate, optimize, special

from .design import DesignBundle
from .likelihoods import ModelIndex

FAMILIES = ("zellner", "pmom", "pemom")
MODEL_PRIORS = ("betabinomial", "binomial", "complexity")

# defaults elicited from practical-significance thresholds (t = 1.15 for
# survival backends; 0.05 success-probability shift for probit)
DEFAULT_G_M = 0.192
DEFAULT_G_E = 0.091
PROBIT_G_M = 0.139
PROBIT_G_E = 0.048


class PriorError(ValueError):
    pass


class SingularPriorPoint(ArithmeticError):
    """Derivative of a non-local prior requested at alpha_j = 0."""


@dataclass(frozen=True)
class PriorSpec:
    family: str = "pmom"
    g_L: float = 1.0
    g_M: float = DEFAULT_G_M
    g_E: float = DEFAULT_G_E
    g_S: float | None = None  # None resolves to 1/r at evaluation time
    a_sigma: float = 3.0
    b_sigma: float = 3.0
    model_prior: str = "betabinomial"
    model_prior_params: tuple = (1.0, 1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise PriorError(f"unknown prior family {self.family!r}")
        if self.model_prior not in MODEL_PRIORS:
            raise PriorError(f"unknown model prior {self.model_prior!r}")
        for name in ("g_L", "g_M", "g_E", "a_sigma", "b_sigma"):
            if getattr(self, name) <= 0:
                raise PriorError(f"{name} must be positive")
        if self.g_S is not None and self.g_S <= 0:
            raise PriorError("g_S must be positive")

    @classmethod
    def defaults(cls, family="pmom", backend="aft_normal", **kw):
        if backend == "probit":
            kw.setdefault("g_M", PROBIT_G_M)
            kw.setdefault("g_E", PROBIT_G_E)
        return cls(family=family, **kw)

    def with_family(self, family):
        return replace(self, family=family)

    def block_dispersion(self, width: int) -> float:
        return self.g_S if self.g_S is not None else 1.0 / width

    def linear_g(self) -> float:
        return {"zellner": self.g_L, "pmom": self.g_M, "pemom": self.g_E}[self.family]


def _backend_layout(model: ModelIndex, design: DesignBundle, backend: str):
    """Coefficient layout: (has_intercept, linear js, nonlinear js, has_scale)."""
    if backend in ("aft_normal", "aft_laplace"):
        return True, model.active_linear(), model.active_nonlinear(), True
    if backend == "probit":
        return True, model.active_linear(), model.active_nonlinear(), False
    if backend == "cox":
        return False, model.active_linear(), model.active_nonlinear(), False
    raise PriorError(f"unknown backend {backend!r}")


def _split_theta(theta, model, design, backend, param):
    has_int, lin, nonlin, has_scale = _backend_layout(model, design, backend)
    theta = np.asarray(theta, dtype=float)
    expect = int(has_int) + len(lin) + sum(design.block_width(j) for j in nonlin)
    expect += int(has_scale)
    if len(theta) != expect:
        raise PriorError("parameter dimension mismatch")
    pos = 0
    intercept = None
    if has_int:
        intercept = theta[0]
        pos = 1
    alphas = theta[pos : pos + len(lin)]
    pos += len(lin)
    kappas = []
    for j in nonlin:
        w = design.block_width(j)
        kappas.append(theta[pos : pos + w])
        pos += w
    scale = None
    if has_scale:
        if param == "rho":
            scale = float(theta[-1])
        elif param == "tau":
            t = float(theta[-1])
            if t <= 0:
                raise PriorError("tau must be positive")
            scale = np.log(t)
        else:
            raise PriorError(f"unknown parameterization {param!r}")
    return intercept, alphas, kappas, lin, nonlin, scale


def _log_normal_pdf(x, var):
    return -0.5 * np.log(2 * np.pi * var) - 0.5 * x * x / var


def prior_logdens(theta, model, design, spec, backend="aft_normal", param="rho"):
    """Log prior density at theta; -inf at alpha_j = 0 for non-local families."""
    a0, alphas, kappas, lin, nonlin, rho = _split_theta(
        theta, model, design, backend, param
    )
    n = design.n
    out = 0.0
    if a0 is not None:
        out += _log_normal_pdf(a0, spec.g_L)  # Zellner with x = intercept column
    for a, j in zip(alphas, lin):
        if spec.family == "zellner":
            out += _log_normal_pdf(a, spec.g_L * n / design.xtx_all[j])
        elif spec.family == "pmom":
            if a == 0.0:
                return -np.inf
            out += np.log(a * a / spec.g_M) + _log_normal_pdf(a, spec.g_M)
        else:
            if a == 0.0:
                return -np.inf
            out += np.sqrt(2.0) - spec.g_E / (a * a) + _log_normal_pdf(a, spec.g_E)
    for kap, j in zip(kappas, nonlin):
        StS = design.sts_all[j]
        w = len(kap)
        gs = spec.block_dispersion(w) * n
        sign, logdet = np.linalg.slogdet(StS)
        if sign <= 0:
            raise PriorError(f"singular block Gram matrix for covariate {j}")
        out += -0.5 * w * np.log(2 * np.pi * gs) + 0.5 * logdet
        out += -0.5 * float(kap @ StS @ kap) / gs
    if rho is not None:
        a_s, b_s = spec.a_sigma, spec.b_sigma
        out += (
            0.5 * a_s * np.log(0.5 * b_s)
            - special.gammaln(0.5 * a_s)
            + np.log(2.0)
            + a_s * rho
            - 0.5 * b_s * np.exp(2.0 * rho)
        )
        if param == "tau":
            out -= rho  # change of variables back to the tau density
    return float(out)


def prior_grad(theta, model, design, spec, backend="aft_normal", param="rho",
               smooth_only=False):
    """Gradient of the log prior in the same coordinates as theta.

    Raises SingularPriorPoint when a non-local factor is evaluated at
    alpha_j = 0.  With smooth_only=True the singular MOM factors are
    dropped and only each family's Gaussian component remains (used for
    quadratic expansions at the origin).  With param="tau" the scale
    coordinate derivative is with respect to tau itself.
    """
    a0, alphas, kappas, lin, nonlin, rho = _split_theta(
        theta, model, design, backend, param
    )
    n = design.n
    parts = []
    if a0 is not None:
        parts.append(np.array([-a0 / spec.g_L]))
    g_lin = np.empty(len(alphas))
    for i, (a, j) in enumerate(zip(alphas, lin)):
        if spec.family == "zellner":
            g_lin[i] = -a / (spec.g_L * n / design.xtx_all[j])
        elif spec.family == "pmom":
            if smooth_only:
                g_lin[i] = -a / spec.g_M
                continue
            if a == 0.0:
                raise SingularPriorPoint("pmom gradient at alpha = 0")
            g_lin[i] = 2.0 / a - a / spec.g_M
        else:
            if smooth_only:
                g_lin[i] = -a / spec.g_E
                continue
            if a == 0.0:
                raise SingularPriorPoint("pemom gradient at alpha = 0")
            g_lin[i] = 2.0 * spec.g_E / a**3 - a / spec.g_E
    parts.append(g_lin)
    for kap, j in zip(kappas, nonlin):
        gs = spec.block_dispersion(len(kap)) * n
        parts.append(-(design.sts_all[j] @ kap) / gs)
    if rho is not None:
        if param == "tau":
            tau = np.exp(rho)
            g_scale = (spec.a_sigma - 1.0) / tau - spec.b_sigma * tau
        else:
            g_scale = spec.a_sigma - spec.b_sigma * np.exp(2.0 * rho)
        parts.append(np.array([g_scale]))
    return np.concatenate(parts) if parts else np.empty(0)


def prior_hess(theta, model, design, spec, backend="aft_normal", param="rho",
               smooth_only=False):
    """Hessian of the log prior (block diagonal across coordinate groups)."""
    a0, alphas, kappas, lin, nonlin, rho = _split_theta(
        theta, model, design, backend, param
    )
    n = design.n
    d = len(np.asarray(theta))
    H = np.zeros((d, d))
    pos = 0
    if a0 is not None:
        H[0, 0] = -1.0 / spec.g_L
        pos = 1
    for a, j in zip(alphas, lin):
        if spec.family == "zellner":
            H[pos, pos] = -design.xtx_all[j] / (spec.g_L * n)
        elif spec.family == "pmom":
            if smooth_only:
                H[pos, pos] = -1.0 / spec.g_M
            elif a == 0.0:
                raise SingularPriorPoint("pmom hessian at alpha = 0")
            else:
                H[pos, pos] = -2.0 / a**2 - 1.0 / spec.g_M
        else:
            if smooth_only:
                H[pos, pos] = -1.0 / spec.g_E
            elif a == 0.0:
                raise SingularPriorPoint("pemom hessian at alpha = 0")
            else:
                H[pos, pos] = -6.0 * spec.g_E / a**4 - 1.0 / spec.g_E
        pos += 1
    for kap, j in zip(kappas, nonlin):
        w = len(kap)
        gs = spec.block_dispersion(w) * n
        H[pos : pos + w, pos : pos + w] = -design.sts_all[j] / gs
        pos += w
    if rho is not None:
        if param == "rho":
            H[pos, pos] = -2.0 * spec.b_sigma * np.exp(2.0 * rho)
        else:
            tau = np.exp(rho)
            H[pos, pos] = -(spec.a_sigma - 1.0) / tau**2 - spec.b_sigma
    return H


def model_logprior(model: ModelIndex, design: DesignBundle, spec: PriorSpec, n: int):
    """Unnormalized log model prior.

    Models whose parameter count (excluding intercept and scale) exceeds
    n get probability zero, as they would interpolate the data.
    """
    p = model.p
    p_g, s_g = model.p_gamma, model.s_gamma
    d_active = p_g + sum(design.block_width(j) for j in model.active_nonlinear())
    if d_active > n:
        return -np.inf
    if spec.model_prior == "betabinomial":
        a1, b1, a2, b2 = spec.model_prior_params
        out = special.betaln(p_g + a1, p - p_g + b1) - special.betaln(a1, b1)
        out += special.betaln(s_g + a2, p - s_g + b2) - special.betaln(a2, b2)
        return float(out)
    if spec.model_prior == "binomial":
        a1, a2 = spec.model_prior_params[:2]
        for a in (a1, a2):
            if not 0.0 < a < 1.0:
                raise PriorError("binomial success probabilities must be in (0,1)")
        return float(
            p_g * np.log(a1)
            + (p - p_g) * np.log1p(-a1)
            + s_g * np.log(a2)
            + (p - s_g) * np.log1p(-a2)
        )
    a1, a2 = spec.model_prior_params[:2]
    return float(-(a1 * p_g + a2 * s_g) * np.log(max(p, 2)))


# ---------------------------------------------------------------------------
# marginal priors on beta_j (sigma^2 integrated out) and elicitation

def _ig_mgf(t, shape, scale):
    """Moment generating function of an inverse gamma at t <= 0."""
    if t == 0.0:
        return 1.0
    u = -t
    return float(
        2.0
        * (scale * u) ** (shape / 2.0)
        * special.kv(shape, 2.0 * np.sqrt(u * scale))
        / special.gamma(shape)
    )


def marginal_density(b, family, g, a_sigma, b_sigma):
    """Marginal prior density of a linear coefficient at value b."""
    b = float(b)
    if family == "pmom":
        c = (
            2.0
            * special.gamma((a_sigma + 3.0) / 2.0)
            / (special.gamma(a_sigma / 2.0) * np.sqrt(np.pi) * (b_sigma * g) ** 1.5)
        )
        return c * b * b / (1.0 + b * b / (g * b_sigma)) ** ((a_sigma + 3.0) / 2.0)
    if family == "pemom":
        if b == 0.0:
            return 0.0
        c = (
            np.exp(np.sqrt(2.0))
            * special.gamma((a_sigma + 1.0) / 2.0)
            / (special.gamma(a_sigma / 2.0) * np.sqrt(np.pi * g * b_sigma))
        )
        m = _ig_mgf(-g / b**2, (a_sigma + 1.0) / 2.0, (b_sigma + b**2 / g) / 2.0)
        return c * m / (1.0 + b * b / (g * b_sigma)) ** ((a_sigma + 1.0) / 2.0)
    raise PriorError(f"no marginal density for family {family!r}")


def marginal_prior_cdf(b, family, g, a_sigma=3.0, b_sigma=3.0, tol=1e-6):
    """P(|beta_j| <= b) under the sigma-marginalized prior, by quadrature."""
    if b <= 0:
        raise PriorError("threshold b must be positive")
    cuts = [c for c in (0.5, 5.0, 50.0, 1e3, 1e5) if c < b]
    edges = [0.0] + cuts + [float(b)]
    total, err = 0.0, 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        v, e = integrate.quad(
            marginal_density, lo, hi, args=(family, g, a_sigma, b_sigma),
            epsabs=tol / (4 * len(edges)), limit=200,
        )
        total += v
        err += e
    if err > tol:
        raise PriorError(f"quadrature accuracy {err:.2e} worse than {tol:.0e}")
    return min(2.0 * total, 1.0)


def elicit_dispersion(t, family, a_sigma=3.0, b_sigma=3.0, target=0.99):
    """Dispersion g such that P(|beta_j| > log t) = target.

    `t` is the practical significance threshold on the survival-time
    ratio scale; larger t gives larger g.
    """
    if t <= 1.0:
        raise PriorError("threshold t must exceed 1")
    if not 0.0 < target < 1.0:
        raise PriorError("target must be in (0,1)")
    thr = np.log(t)

    def excess(g):
        return (1.0 - marginal_prior_cdf(thr, family, g, a_sigma, b_sigma)) - target

    lo, hi = 1e-6, 1.0
    while excess(hi) < 0 and hi < 1e6:
        hi *= 10.0
    if excess(lo) > 0 or excess(hi) < 0:
        raise PriorError("failed to bracket the dispersion root")
    return float(optimize.brentq(excess, lo, hi, xtol=1e-10, rtol=1e-12))
