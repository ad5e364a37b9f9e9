"""Log-likelihoods, gradients and Hessians for the four model backends.

Backends: additive AFT with Normal errors, additive AFT with Laplace
errors, probit (via reduction to the Normal AFT), and the Cox partial
likelihood.  AFT evaluations are parameterized either as (alpha, kappa,
tau) with tau = 1/sigma, or as (alpha, kappa, rho) with rho = log tau so
the domain is unconstrained.

The uncensored part of the Normal AFT likelihood is quadratic in the
parameters and is evaluated from sufficient statistics (column Gram
entries) whenever the operation-count comparison favors it; censored
terms always require per-row evaluation of log Phi and its derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import specfun
from .design import DesignBundle, GramCache, SurvivalDataset
from .specfun import FAST, ApproxProfile

BACKENDS = ("aft_normal", "aft_laplace", "probit", "cox")

KINK_TOL = 1e-12


class LikelihoodError(ValueError):
    pass


def _sym(M):
    """Exactly symmetric copy of a numerically symmetric product."""
    return 0.5 * (M + M.T)


class NonDifferentiablePoint(ArithmeticError):
    """Raised when a Laplace-error derivative is requested on a kink."""


@dataclass(frozen=True)
class ModelIndex:
    """Per-covariate effect code: 0 none, 1 linear, 2 linear + spline."""

    gamma: tuple

    def __post_init__(self):
        g = tuple(int(v) for v in self.gamma)
        if any(v not in (0, 1, 2) for v in g):
            raise LikelihoodError("gamma entries must be in {0, 1, 2}")
        object.__setattr__(self, "gamma", g)

    @property
    def p(self) -> int:
        return len(self.gamma)

    @property
    def p_gamma(self) -> int:
        return sum(1 for v in self.gamma if v != 0)

    @property
    def s_gamma(self) -> int:
        return sum(1 for v in self.gamma if v == 2)

    def active_linear(self):
        return [j for j, v in enumerate(self.gamma) if v >= 1]

    def active_nonlinear(self):
        return [j for j, v in enumerate(self.gamma) if v == 2]

    def validate(self, design: DesignBundle):
        if len(self.gamma) != design.p:
            raise LikelihoodError("gamma length does not match design")
        for j in self.active_nonlinear():
            if design.blocks[j] is None:
                raise LikelihoodError(
                    f"covariate {j} is a binary dummy and cannot take a spline block"
                )

    def col_ids(self, design: DesignBundle, intercept: bool = True):
        """Column ids into the design: intercept, linear columns, blocks."""
        ids = [0] if intercept else []
        ids.extend(1 + j for j in self.active_linear())
        for j in self.active_nonlinear():
            ids.extend(design.block_col_ids(j))
        return ids

    def n_coef(self, design: DesignBundle, intercept: bool = True) -> int:
        return len(self.col_ids(design, intercept=intercept))

    def dim(self, design: DesignBundle, backend: str) -> int:
        """Number of free parameters under `backend`.

        AFT backends add the scale coordinate; the Cox backend has no
        intercept (absorbed by the baseline hazard).
        """
        if backend in ("aft_normal", "aft_laplace"):
            return self.n_coef(design, intercept=True) + 1
        if backend == "probit":
            return self.n_coef(design, intercept=True)
        if backend == "cox":
            return self.n_coef(design, intercept=False)
        raise LikelihoodError(f"unknown backend {backend!r}")


@dataclass(frozen=True)
class ParamVector:
    """Structured view of a parameter point for one model.

    `coef` stacks the intercept (where present), linear coefficients, and
    spline-block coefficients in column order; `rho` is log(tau) for AFT
    backends and None otherwise.
    """

    coef: np.ndarray
    rho: float | None = None

    def flat(self) -> np.ndarray:
        if self.rho is None:
            return np.asarray(self.coef, dtype=float).copy()
        return np.concatenate([self.coef, [self.rho]])

    @classmethod
    def from_flat(cls, theta, has_scale: bool) -> "ParamVector":
        theta = np.asarray(theta, dtype=float)
        if has_scale:
            return cls(coef=theta[:-1].copy(), rho=float(theta[-1]))
        return cls(coef=theta.copy(), rho=None)

    @property
    def tau(self) -> float | None:
        return None if self.rho is None else float(np.exp(self.rho))


def _scale_from(theta_last, param):
    if param == "rho":
        return float(np.exp(theta_last))
    if param == "tau":
        tau = float(theta_last)
        if tau <= 0:
            raise LikelihoodError("tau must be positive")
        return tau
    raise LikelihoodError(f"unknown parameterization {param!r}")


class AftNormalEvaluator:
    """Normal-error AFT log-likelihood for one model.

    Parameters are flat vectors [coef..., scale]; `fixed_scale` drops the
    scale coordinate (used by the probit reduction, where tau plays no
    role because the reduced response is identically zero).
    """

    def __init__(
        self,
        model: ModelIndex,
        data: SurvivalDataset,
        design: DesignBundle,
        profile: ApproxProfile = FAST,
        gram: GramCache | None = None,
        use_gram: bool | None = None,
        fixed_scale: bool = False,
    ):
        model.validate(design)
        self.model = model
        self.profile = profile
        self.fixed_scale = fixed_scale
        cols = model.col_ids(design)
        self.k = len(cols)
        cens = data.d == 0
        obs = ~cens
        self.n = data.n
        self.n_o = int(obs.sum())
        n_c = self.n - self.n_o
        self.Zc = design.matrix(cols, cens)
        self.yc = data.y[cens]
        d_full = self.k + (0 if fixed_scale else 1)
        if use_gram is None:
            use_gram = (n_c + 1) * d_full + d_full * (d_full + 1) // 2 < self.n * d_full
        self.use_gram = bool(use_gram)
        if self.use_gram:
            if gram is not None:
                self.G = gram.submatrix(cols)
                self.Zty = gram.crossvec(cols)
                self.yy = gram.get_yy()
            else:
                Zo = design.matrix(cols, obs)
                yo = data.y[obs]
                self.G = _sym(Zo.T @ Zo)
                self.Zty = Zo.T @ yo
                self.yy = float(yo @ yo)
            self.Zo = self.yo = None
        else:
            self.Zo = design.matrix(cols, obs)
            self.yo = data.y[obs]
            self.G = _sym(self.Zo.T @ self.Zo)
            self.Zty = self.Zo.T @ self.yo
            self.yy = float(self.yo @ self.yo)

    @property
    def dim(self) -> int:
        return self.k + (0 if self.fixed_scale else 1)

    def _split(self, theta, param):
        theta = np.asarray(theta, dtype=float)
        if self.fixed_scale:
            if len(theta) != self.k:
                raise LikelihoodError("parameter dimension mismatch")
            return theta, 1.0
        if len(theta) != self.k + 1:
            raise LikelihoodError("parameter dimension mismatch")
        return theta[:-1], _scale_from(theta[-1], param)

    def loglik(self, theta, param="rho") -> float:
        coef, tau = self._split(theta, param)
        if self.use_gram or self.Zo is None:
            ssr = tau * tau * self.yy - 2.0 * tau * float(coef @ self.Zty)
            ssr += float(coef @ self.G @ coef)
        else:
            e = tau * self.yo - self.Zo @ coef
            ssr = float(e @ e)
        out = self.n_o * np.log(tau) - 0.5 * self.n_o * np.log(2 * np.pi) - 0.5 * ssr
        if len(self.yc):
            u = self.Zc @ coef - tau * self.yc
            out += float(np.sum(self.profile.norm_logcdf(u)))
        return float(out)

    def grad(self, theta, param="rho") -> np.ndarray:
        coef, tau = self._split(theta, param)
        g_coef = tau * self.Zty - self.G @ coef
        g_tau = self.n_o / tau - (tau * self.yy - float(coef @ self.Zty))
        if len(self.yc):
            u = self.Zc @ coef - tau * self.yc
            r = self.profile.inv_mills(u)
            g_coef = g_coef + self.Zc.T @ r
            g_tau -= float(self.yc @ r)
        if self.fixed_scale:
            return g_coef
        g = np.concatenate([g_coef, [g_tau]])
        if param == "rho":
            g[-1] *= tau
        return g

    def hess(self, theta, param="rho") -> np.ndarray:
        coef, tau = self._split(theta, param)
        k = self.k
        d = self.dim
        H = np.zeros((d, d))
        H[:k, :k] = -self.G
        if not self.fixed_scale:
            H[:k, k] = H[k, :k] = self.Zty
            H[k, k] = -self.n_o / tau**2 - self.yy
        if len(self.yc):
            u = self.Zc @ coef - tau * self.yc
            Dw = self.profile.info_discount(-u)
            H[:k, :k] -= _sym((self.Zc * Dw[:, None]).T @ self.Zc)
            if not self.fixed_scale:
                yD = self.yc * Dw
                H[:k, k] += self.Zc.T @ yD
                H[k, :k] = H[:k, k]
                H[k, k] -= float(self.yc @ yD)
        if not self.fixed_scale and param == "rho":
            g_tau = self.grad(np.concatenate([coef, [tau]]), param="tau")[-1]
            H[:k, k] *= tau
            H[k, :k] = H[:k, k]
            H[k, k] = tau * tau * H[k, k] + tau * g_tau
        return H


class AftLaplaceEvaluator:
    """Laplace-error AFT log-likelihood for one model.

    The uncensored contribution is piecewise linear, so only censored
    rows enter the Hessian.  Derivatives are undefined on the kink set
    where some uncensored residual is zero; by default this raises
    NonDifferentiablePoint, and `on_kink="subgradient"` instead assigns
    those rows zero sign weight.
    """

    def __init__(self, model, data, design, profile: ApproxProfile = FAST):
        model.validate(design)
        self.model = model
        self.profile = profile
        cols = model.col_ids(design)
        self.k = len(cols)
        cens = data.d == 0
        obs = ~cens
        self.n_o = int(obs.sum())
        self.Zo = design.matrix(cols, obs)
        self.yo = data.y[obs]
        self.Zc = design.matrix(cols, cens)
        self.yc = data.y[cens]

    @property
    def dim(self) -> int:
        return self.k + 1

    def _split(self, theta, param):
        theta = np.asarray(theta, dtype=float)
        if len(theta) != self.k + 1:
            raise LikelihoodError("parameter dimension mismatch")
        return theta[:-1], _scale_from(theta[-1], param)

    def loglik(self, theta, param="rho") -> float:
        coef, tau = self._split(theta, param)
        e = tau * self.yo - self.Zo @ coef
        out = self.n_o * np.log(tau / 2.0) - float(np.sum(np.abs(e)))
        if len(self.yc):
            u = self.Zc @ coef - tau * self.yc
            out += float(np.sum(specfun.laplace_logcdf(u)))
        return float(out)

    def _signs(self, e, on_kink):
        kinks = np.abs(e) < KINK_TOL
        if np.any(kinks):
            if on_kink == "raise":
                raise NonDifferentiablePoint(
                    "uncensored residual on the non-differentiable set"
                )
            if on_kink != "subgradient":
                raise LikelihoodError(f"unknown on_kink policy {on_kink!r}")
        w = np.sign(e)
        w[kinks] = 0.0
        return w

    def grad(self, theta, param="rho", on_kink="raise") -> np.ndarray:
        coef, tau = self._split(theta, param)
        e = tau * self.yo - self.Zo @ coef
        w = self._signs(e, on_kink)
        g_coef = self.Zo.T @ w
        g_tau = self.n_o / tau - float(w @ self.yo)
        if len(self.yc):
            u = self.Zc @ coef - tau * self.yc
            r = specfun.laplace_inv_mills(u)
            g_coef = g_coef + self.Zc.T @ r
            g_tau -= float(self.yc @ r)
        g = np.concatenate([g_coef, [g_tau]])
        if param == "rho":
            g[-1] *= tau
        return g

    def hess(self, theta, param="rho", on_kink="raise") -> np.ndarray:
        coef, tau = self._split(theta, param)
        e = tau * self.yo - self.Zo @ coef
        self._signs(e, on_kink)  # kink detection only
        k = self.k
        H = np.zeros((k + 1, k + 1))
        H[k, k] = -self.n_o / tau**2
        if len(self.yc):
            u = self.Zc @ coef - tau * self.yc
            Dw = specfun.laplace_discount(-u)
            H[:k, :k] -= _sym((self.Zc * Dw[:, None]).T @ self.Zc)
            yD = self.yc * Dw
            H[:k, k] = H[k, :k] = self.Zc.T @ yD
            H[k, k] -= float(self.yc @ yD)
        if param == "rho":
            theta_tau = np.concatenate([coef, [tau]])
            g_tau = self.grad(theta_tau, param="tau", on_kink="subgradient")[-1]
            H[:k, k] *= tau
            H[k, :k] = H[:k, k]
            H[k, k] = tau * tau * H[k, k] + tau * g_tau
        return H


def probit_reduce(omega, design: DesignBundle):
    """Reduce a binary regression to a fully censored Normal AFT problem.

    Returns a dataset with zero log-times and all rows censored, plus a
    row-signed design: rows with omega = 0 flip sign, so the AFT censored
    terms log Phi(z~' theta) reproduce the probit log-likelihood exactly
    at any fixed scale.
    """
    omega = np.asarray(omega)
    if not np.all((omega == 0) | (omega == 1)):
        raise LikelihoodError("omega must be binary")
    s = np.where(omega == 1, 1.0, -1.0)
    flipped = design.signed(s)
    n = len(omega)
    data = SurvivalDataset(y=np.zeros(n), d=np.zeros(n, dtype=int), X_raw=flipped.X)
    return data, flipped


class ProbitEvaluator(AftNormalEvaluator):
    """Probit log-likelihood through the AFT reduction; no scale coordinate."""

    def __init__(self, model, omega, design, profile: ApproxProfile = FAST):
        data, flipped = probit_reduce(omega, design)
        super().__init__(model, data, flipped, profile=profile, fixed_scale=True)


class CoxEvaluator:
    """Breslow partial log-likelihood for one model (no intercept, no scale)."""

    def __init__(self, model, data: SurvivalDataset, design: DesignBundle):
        model.validate(design)
        self.model = model
        cols = model.col_ids(design, intercept=False)
        self.k = len(cols)
        if data.n_obs == 0:
            raise LikelihoodError("no events; partial likelihood undefined")
        order = np.argsort(-data.y, kind="stable")
        self.Z = design.matrix(cols)[order]
        y = data.y[order]
        self.events = data.d[order] == 1
        # risk-set boundary: each row's risk set is the prefix of rows with
        # y >= its own y; ties share the full tied prefix
        boundary = np.empty(len(y), dtype=int)
        i = 0
        while i < len(y):
            j = i
            while j + 1 < len(y) and y[j + 1] == y[i]:
                j += 1
            boundary[i : j + 1] = j + 1
            i = j + 1
        self.boundary = boundary

    @property
    def dim(self) -> int:
        return self.k

    def _risk_stats(self, theta, need_hess=False):
        theta = np.asarray(theta, dtype=float)
        if len(theta) != self.k:
            raise LikelihoodError("parameter dimension mismatch")
        eta = self.Z @ theta
        m = float(eta.max()) if len(eta) else 0.0
        w = np.exp(eta - m)
        S0 = np.cumsum(w)
        S1 = np.cumsum(w[:, None] * self.Z, axis=0)
        S2 = None
        if need_hess:
            outer = self.Z[:, :, None] * self.Z[:, None, :]
            S2 = np.cumsum(w[:, None, None] * outer, axis=0)
        return eta, m, S0, S1, S2

    def loglik(self, theta, param=None) -> float:
        eta, m, S0, S1, _ = self._risk_stats(theta)
        idx = self.boundary[self.events] - 1
        return float(np.sum(eta[self.events]) - np.sum(m + np.log(S0[idx])))

    def grad(self, theta, param=None) -> np.ndarray:
        eta, m, S0, S1, _ = self._risk_stats(theta)
        idx = self.boundary[self.events] - 1
        zbar = S1[idx] / S0[idx, None]
        return self.Z[self.events].sum(axis=0) - zbar.sum(axis=0)

    def hess(self, theta, param=None) -> np.ndarray:
        eta, m, S0, S1, S2 = self._risk_stats(theta, need_hess=True)
        idx = self.boundary[self.events] - 1
        H = np.zeros((self.k, self.k))
        for i in idx:
            zbar = S1[i] / S0[i]
            H -= S2[i] / S0[i] - np.outer(zbar, zbar)
        return _sym(H)


# Convenience one-shot wrappers for the individual operations.

def aftn_loglik(theta, model, data, design, profile=FAST, param="rho", gram=None):
    return AftNormalEvaluator(model, data, design, profile, gram=gram).loglik(
        theta, param=param
    )


def aftn_grad(theta, model, data, design, profile=FAST, param="rho", gram=None):
    return AftNormalEvaluator(model, data, design, profile, gram=gram).grad(
        theta, param=param
    )


def aftn_hess(theta, model, data, design, profile=FAST, param="rho", gram=None):
    return AftNormalEvaluator(model, data, design, profile, gram=gram).hess(
        theta, param=param
    )


def aftl_loglik(theta, model, data, design, param="rho"):
    return AftLaplaceEvaluator(model, data, design).loglik(theta, param=param)


def aftl_grad(theta, model, data, design, param="rho", on_kink="raise"):
    return AftLaplaceEvaluator(model, data, design).grad(
        theta, param=param, on_kink=on_kink
    )


def aftl_hess(theta, model, data, design, param="rho", on_kink="raise"):
    return AftLaplaceEvaluator(model, data, design).hess(
        theta, param=param, on_kink=on_kink
    )


def cox_ploglik(theta, model, data, design):
    return CoxEvaluator(model, data, design).loglik(theta)


def cox_grad(theta, model, data, design):
    return CoxEvaluator(model, data, design).grad(theta)


def cox_hess(theta, model, data, design):
    return CoxEvaluator(model, data, design).hess(theta)


def make_evaluator(backend, model, data, design, profile=FAST, gram=None):
    """Factory used by the inference layer; `data.d` holds the binary
    outcome when backend is "probit"."""
    if backend == "aft_normal":
        return AftNormalEvaluator(model, data, design, profile, gram=gram)
    if backend == "aft_laplace":
        return AftLaplaceEvaluator(model, data, design, profile)
    if backend == "probit":
        return ProbitEvaluator(model, data.d, design, profile)
    if backend == "cox":
        return CoxEvaluator(model, data, design)
    raise LikelihoodError(f"unknown backend {backend!r}")
