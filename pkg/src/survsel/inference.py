"""Within-model inference: MAP optimization and Laplace-approximated
log marginal likelihoods.

Each model's posterior mode is found by damped Newton for small parameter
counts and cyclic coordinate descent for larger ones, both operating in
the unconstrained (alpha, kappa, rho) coordinates.  The marginal
likelihood is the Laplace approximation

    log p(y | gamma) ~= logpost(map) + (d/2) log(2 pi) - 0.5 log|A|,

with A the negated Hessian of the log posterior at the mode.  Fits are
memoized per model so a search pays for each model once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .design import DesignBundle, GramCache, SurvivalDataset
from .likelihoods import (
    AftLaplaceEvaluator,
    ModelIndex,
    ParamVector,
    make_evaluator,
)
from .priors import PriorSpec, model_logprior, prior_grad, prior_hess, prior_logdens
from .specfun import FAST, ApproxProfile

NEWTON_DIM_LIMIT = 15
SEPARATION_NORM = 1e3


class InferenceError(RuntimeError):
    pass


@dataclass
class FitResult:
    """Converged (or flagged) MAP fit of a single model."""

    model: ModelIndex
    backend: str
    theta: np.ndarray
    logpost: float
    log_marglik: float
    neg_hess_logpost: np.ndarray
    iterations: int
    optimizer: str
    converged: bool
    degenerate: bool = False
    separation: bool = False

    @property
    def eta_map(self) -> ParamVector:
        has_scale = self.backend in ("aft_normal", "aft_laplace")
        return ParamVector.from_flat(self.theta, has_scale=has_scale)


class _Objective:
    """Log posterior with gradient and Hessian for one model."""

    def __init__(self, fitter, model):
        self.fitter = fitter
        self.model = model
        self.backend = fitter.backend
        self.ev = make_evaluator(
            fitter.backend,
            model,
            fitter.data,
            fitter.design,
            profile=fitter.profile,
            gram=fitter.gram,
        )
        self.dim = self.ev.dim
        self._lap = isinstance(self.ev, AftLaplaceEvaluator)

    def _prior_args(self):
        f = self.fitter
        return self.model, f.design, f.spec, f.backend

    def value(self, theta) -> float:
        ll = self.ev.loglik(theta, param="rho")
        return ll + prior_logdens(theta, *self._prior_args())

    def grad(self, theta, smooth_only=False) -> np.ndarray:
        if self._lap:
            g = self.ev.grad(theta, param="rho", on_kink="subgradient")
        else:
            g = self.ev.grad(theta, param="rho")
        return g + prior_grad(theta, *self._prior_args(), smooth_only=smooth_only)

    def hess(self, theta, smooth_only=False) -> np.ndarray:
        if self._lap:
            H = self.ev.hess(theta, param="rho", on_kink="subgradient")
        else:
            H = self.ev.hess(theta, param="rho")
        return H + prior_hess(theta, *self._prior_args(), smooth_only=smooth_only)


def _solve_ascent(H, g):
    """Newton direction from the negated Hessian; None when not PD."""
    try:
        L = np.linalg.cholesky(-H)
    except np.linalg.LinAlgError:
        return None
    z = np.linalg.solve(L, g)
    return np.linalg.solve(L.T, z)


def init_guess(obj: _Objective, warm: FitResult | None = None) -> np.ndarray:
    """Starting point: quadratic-expansion step from the origin, or the
    previous model's optimum embedded into this model, whichever has the
    higher log posterior.

    The origin expansion drops the singular non-local prior factors
    (their Gaussian components remain), since non-local densities are
    unbounded below at alpha = 0.  Embedded coordinates missing from the
    previous model start at zero.
    """
    d = obj.dim
    origin = np.zeros(d)
    g = obj.grad(origin, smooth_only=True)
    H = obj.hess(origin, smooth_only=True)
    step = _solve_ascent(H, g)
    if step is None:
        step = g / max(1.0, float(np.abs(g).max()))
    cand = origin + step
    t = 1.0
    while not np.isfinite(obj.value(cand)) and t > 1e-8:
        t *= 0.5
        cand = origin + t * step
    candidates = [cand]
    if warm is not None:
        candidates.append(
            embed_theta(warm.theta, warm.model, obj.model, obj.fitter.design, obj.backend)
        )
    scores = [obj.value(c) for c in candidates]
    best = int(np.argmax(scores))
    return candidates[best]


def embed_theta(theta, src: ModelIndex, dst: ModelIndex, design, backend) -> np.ndarray:
    """Map a parameter vector between models, matching by covariate.

    Shared linear coefficients and spline blocks carry over; coordinates
    new to `dst` start at zero; the intercept and scale always carry.
    """
    has_int = backend != "cox"
    has_scale = backend in ("aft_normal", "aft_laplace")

    def layout(model):
        pos = {}
        i = 1 if has_int else 0
        for j in model.active_linear():
            pos[("lin", j)] = (i, 1)
            i += 1
        for j in model.active_nonlinear():
            w = design.block_width(j)
            pos[("blk", j)] = (i, w)
            i += w
        return pos, i

    src_pos, src_len = layout(src)
    dst_pos, dst_len = layout(dst)
    out = np.zeros(dst_len + (1 if has_scale else 0))
    theta = np.asarray(theta, dtype=float)
    if has_int:
        out[0] = theta[0]
    if has_scale:
        out[-1] = theta[-1]
    for key, (dpos, w) in dst_pos.items():
        if key in src_pos:
            spos, _ = src_pos[key]
            out[dpos : dpos + w] = theta[spos : spos + w]
    return out


def map_newton(obj: _Objective, start, grad_tol=1e-6, obj_tol=1e-8, max_iter=200,
               value_stall_ok=False):
    """Damped Newton ascent with step halving.

    Falls back to a scaled gradient step when the negated Hessian is not
    positive definite.  Stops when the gradient max-norm drops below
    grad_tol or the objective increase falls below obj_tol.

    When no step can improve the value, the fit still counts as converged
    if the quadratic-model gain 0.5 g'A^{-1}g is below the value's
    numerical resolution (the mode is located to within the accuracy of
    the objective itself; with fast-mode distribution approximations the
    analytic gradient cannot be driven arbitrarily small).  With
    `value_stall_ok` any stall counts as convergence; Laplace-error
    posteriors peak at kinks where no gradient criterion applies.
    """
    theta = np.asarray(start, dtype=float).copy()
    f = obj.value(theta)
    if not np.isfinite(f):
        raise InferenceError("non-finite objective at the starting point")
    separation = False
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        g = obj.grad(theta)
        if np.abs(g).max() < grad_tol:
            converged = True
            break
        H = obj.hess(theta)
        step = _solve_ascent(H, g)
        predicted_gain = 0.5 * float(g @ step) if step is not None else np.inf
        if step is None:
            step = g / max(1.0, float(np.abs(g).max()))
        t = 1.0
        new_f = obj.value(theta + t * step)
        while not (new_f > f) and t > 1e-14:
            t *= 0.5
            new_f = obj.value(theta + t * step)
        if not (new_f > f):
            converged = bool(
                np.abs(g).max() < grad_tol
                or value_stall_ok
                or predicted_gain < 1e-9 * (1.0 + abs(f))
            )
            break
        theta = theta + t * step
        if np.abs(theta).max() > SEPARATION_NORM:
            separation = True
        gain, f = new_f - f, new_f
        if gain < obj_tol:
            g = obj.grad(theta)
            converged = bool(
                np.abs(g).max() < grad_tol
                or value_stall_ok
                or gain < 1e-9 * (1.0 + abs(f))
            )
            if converged:
                break
    return theta, f, it, converged, separation


def map_cda(obj: _Objective, start, backtrack=0.5, obj_tol=1e-2, max_sweeps=200,
            grad_tol=1e-6):
    """Cyclic coordinate ascent with single-coordinate Newton steps.

    Each coordinate takes a Newton step -f'_i/f''_i, shrunk by the factor
    `backtrack` until the objective increases; sweeps stop when a full
    pass gains less than obj_tol.  The full Hessian is only assembled by
    the caller once at the optimum.
    """
    theta = np.asarray(start, dtype=float).copy()
    f = obj.value(theta)
    if not np.isfinite(f):
        raise InferenceError("non-finite objective at the starting point")
    d = len(theta)
    separation = False
    sweeps = 0
    converged = False
    for sweeps in range(1, max_sweeps + 1):
        f_sweep_start = f
        for i in range(d):
            gi = obj.grad(theta)[i]
            hi = obj.hess(theta)[i, i]
            if not np.isfinite(gi):
                continue
            step = -gi / hi if hi < -1e-12 else np.sign(gi)
            cand = theta.copy()
            cand[i] += step
            new_f = obj.value(cand)
            tries = 0
            while not (new_f > f) and tries < 60:
                step *= backtrack
                cand[i] = theta[i] + step
                new_f = obj.value(cand)
                tries += 1
            if new_f > f:
                theta, f = cand, new_f
        if np.abs(theta).max() > SEPARATION_NORM:
            separation = True
        if f - f_sweep_start < obj_tol:
            converged = True
            break
    return theta, f, sweeps, converged, separation


class ModelFitter:
    """Fits models on demand and memoizes the results.

    The memo makes repeated visits from a model-space search free; fits
    for distinct models may be requested concurrently (each FitResult is
    immutable once stored).
    """

    def __init__(
        self,
        data: SurvivalDataset,
        design: DesignBundle,
        spec: PriorSpec,
        backend: str = "aft_normal",
        profile: ApproxProfile = FAST,
        newton_dim_limit: int = NEWTON_DIM_LIMIT,
        grad_tol: float = 1e-6,
        newton_obj_tol: float = 1e-8,
        cda_obj_tol: float = 1e-2,
        cda_backtrack: float = 0.5,
        max_iter: int = 200,
    ):
        self.data = data
        self.design = design
        self.spec = spec
        self.backend = backend
        self.profile = profile
        self.newton_dim_limit = newton_dim_limit
        self.grad_tol = grad_tol
        self.newton_obj_tol = newton_obj_tol
        self.cda_obj_tol = cda_obj_tol
        self.cda_backtrack = cda_backtrack
        self.max_iter = max_iter
        self.gram = (
            GramCache(design, data.d == 1, data.y)
            if backend == "aft_normal"
            else None
        )
        self.memo: dict = {}
        self.n_fits = 0

    def objective(self, model: ModelIndex) -> _Objective:
        return _Objective(self, model)

    def fit(self, model, warm: FitResult | None = None) -> FitResult:
        model = model if isinstance(model, ModelIndex) else ModelIndex(tuple(model))
        key = model.gamma
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        obj = self.objective(model)
        start = init_guess(obj, warm)
        use_newton = obj.dim <= self.newton_dim_limit
        if obj.dim == 0:
            theta = np.zeros(0)
            f = obj.value(theta)
            it, converged, separation = 0, True, False
            optimizer = "newton"
        elif use_newton:
            theta, f, it, converged, separation = map_newton(
                obj, start, self.grad_tol, self.newton_obj_tol, self.max_iter,
                value_stall_ok=self.backend == "aft_laplace",
            )
            optimizer = "newton"
        else:
            theta, f, it, converged, separation = map_cda(
                obj, start, self.cda_backtrack, self.cda_obj_tol, self.max_iter,
                self.grad_tol,
            )
            optimizer = "cda"
        A = -obj.hess(theta) if obj.dim else np.zeros((0, 0))
        A = 0.5 * (A + A.T)
        log_marglik, degenerate = _laplace_from_mode(f, A)
        result = FitResult(
            model=model,
            backend=self.backend,
            theta=theta,
            logpost=f,
            log_marglik=log_marglik,
            neg_hess_logpost=A,
            iterations=it,
            optimizer=optimizer,
            converged=converged,
            degenerate=degenerate,
            separation=separation,
        )
        self.memo[key] = result
        self.n_fits += 1
        return result

    def log_marglik(self, model, warm=None) -> float:
        return self.fit(model, warm=warm).log_marglik

    def model_logprior(self, model) -> float:
        model = model if isinstance(model, ModelIndex) else ModelIndex(tuple(model))
        return model_logprior(model, self.design, self.spec, self.data.n)

    def log_unnorm_posterior(self, model, warm=None) -> float:
        lp = self.model_logprior(model)
        if lp == -np.inf:
            return -np.inf
        return self.log_marglik(model, warm=warm) + lp

    def bayes_factor(self, model_a, model_b) -> float:
        """Log Bayes factor of model_a against model_b."""
        return self.log_marglik(model_a) - self.log_marglik(model_b)


def _laplace_from_mode(logpost, A):
    """Laplace log marginal from the mode value and negated Hessian A."""
    d = A.shape[0]
    if d == 0:
        return float(logpost), False
    for jitter in (0.0, 1e-8):
        try:
            L = np.linalg.cholesky(A + jitter * np.eye(d))
            logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
            return float(logpost + 0.5 * d * np.log(2 * np.pi) - 0.5 * logdet), False
        except np.linalg.LinAlgError:
            continue
    return -np.inf, True
