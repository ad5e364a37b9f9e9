"""Model-space exploration and posterior summarization.

The trinary model space (per covariate: none / linear / linear+spline) is
explored exactly by enumeration when feasible and otherwise by a Gibbs
sampler on an augmented space of 2p binary indicators: gt[j] flags a
linear effect and gt[j+p] a non-linear effect for covariate j, with the
hierarchy constraint that gt[j+p] = 1 requires gt[j] = 1.  Sampling the
non-linear indicator is skipped outright whenever the linear indicator is
off, which is where the augmentation saves work on sparse data.

Posterior summaries report two estimators: renormalized unnormalized
posteriors over the set of visited models, and MCMC visit frequencies.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .inference import FitResult, ModelFitter
from .likelihoods import ModelIndex

DEFAULT_ENUM_LIMIT = 3**8
DEFAULT_ITERATIONS = 10_000


class SearchError(RuntimeError):
    pass


def philox_key(seed, extra) -> list:
    """Two-word Philox key from an int or short tuple seed.

    The user seed fills the first 64-bit word; stream selectors (the
    replicate index, chain index, and a per-purpose tag) pack into
    disjoint 21-bit fields of the second word, so distinct selectors give
    distinct streams.
    """
    parts = [int(v) for v in np.atleast_1d(np.asarray(seed, dtype=np.int64))]
    if len(parts) > 3:
        raise SearchError("seed tuples may have at most three components")
    w0 = parts[0] % 2**64
    w1 = 0
    for v in parts[1:] + [int(extra)]:
        if not 0 <= v < 2**21:
            raise SearchError("stream selectors must lie in [0, 2^21)")
        w1 = (w1 << 21) | v
    return [w0, w1]


@dataclass(frozen=True)
class AugmentedState:
    """2p binary indicators with the hierarchy constraint enforced."""

    gtilde: tuple

    def __post_init__(self):
        g = tuple(int(v) for v in self.gtilde)
        if len(g) % 2:
            raise SearchError("augmented state length must be even")
        p = len(g) // 2
        for j in range(p):
            if g[j] == 0 and g[j + p] == 1:
                raise SearchError("non-linear indicator without linear indicator")
        object.__setattr__(self, "gtilde", g)

    @property
    def p(self) -> int:
        return len(self.gtilde) // 2

    def to_gamma(self) -> tuple:
        p = self.p
        return tuple(
            2 if self.gtilde[j + p] else self.gtilde[j] for j in range(p)
        )

    @classmethod
    def from_gamma(cls, gamma) -> "AugmentedState":
        gt = [1 if g >= 1 else 0 for g in gamma] + [1 if g == 2 else 0 for g in gamma]
        return cls(tuple(gt))


@dataclass
class PosteriorSummary:
    """Posterior over the visited model set.

    renorm_probs renormalizes exp(log unnormalized posterior) over the
    visited models; visit_freq holds MCMC visit proportions (None for
    exact enumeration).  Marginal inclusion probabilities use the
    renormalized estimator, with frequency-based versions alongside for
    chains.
    """

    method: str
    p: int
    models: list
    log_unnorm: np.ndarray
    renorm_probs: np.ndarray
    visit_freq: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        order = np.argsort(-self.renorm_probs, kind="stable")
        # deterministic tie-break: lexicographically smallest gamma first
        order = sorted(order, key=lambda i: (-self.renorm_probs[i], self.models[i]))
        self.models = [self.models[i] for i in order]
        self.log_unnorm = self.log_unnorm[order]
        self.renorm_probs = self.renorm_probs[order]
        if self.visit_freq is not None:
            self.visit_freq = self.visit_freq[order]

    def _marginal(self, probs, code) -> np.ndarray:
        out = np.zeros(self.p)
        for gamma, pr in zip(self.models, probs):
            for j, g in enumerate(gamma):
                if g == code:
                    out[j] += pr
        return np.clip(out, 0.0, 1.0)

    def marginal_linear(self, estimator="renorm") -> np.ndarray:
        return self._marginal(self._probs(estimator), 1)

    def marginal_nonlinear(self, estimator="renorm") -> np.ndarray:
        return self._marginal(self._probs(estimator), 2)

    def marginal_active(self, estimator="renorm") -> np.ndarray:
        total = self.marginal_linear(estimator) + self.marginal_nonlinear(estimator)
        return np.clip(total, 0.0, 1.0)

    def _probs(self, estimator):
        if estimator == "renorm":
            return self.renorm_probs
        if estimator == "freq":
            if self.visit_freq is None:
                raise SearchError("no visit frequencies for an exact enumeration")
            return self.visit_freq
        raise SearchError(f"unknown estimator {estimator!r}")

    def top(self, k=10):
        return [
            (self.models[i], float(self.renorm_probs[i]))
            for i in range(min(k, len(self.models)))
        ]

    @property
    def top_model(self) -> tuple:
        return self.models[0]

    def prob_of(self, gamma) -> float:
        gamma = tuple(gamma)
        for m, pr in zip(self.models, self.renorm_probs):
            if m == gamma:
                return float(pr)
        return 0.0


def _gt_to_gamma(gt, p) -> tuple:
    """Model index from raw augmented indicators (non-linear dominates)."""
    return tuple(2 if gt[j + p] else gt[j] for j in range(p))


def _two_way(s_on, s_off) -> float:
    """P(indicator = 1) from two log unnormalized posteriors."""
    if s_on == -np.inf and s_off == -np.inf:
        return 0.0
    if s_on == -np.inf:
        return 0.0
    if s_off == -np.inf:
        return 1.0
    return 1.0 / (1.0 + np.exp(min(s_off - s_on, 700.0)))


def _renormalize(log_unnorm: np.ndarray) -> np.ndarray:
    finite = np.isfinite(log_unnorm)
    probs = np.zeros_like(log_unnorm)
    if np.any(finite):
        m = log_unnorm[finite].max()
        w = np.exp(log_unnorm[finite] - m)
        probs[finite] = w / w.sum()
    return probs


def summarize(models, log_unnorm, p, method, visit_counts=None, diagnostics=None):
    """Assemble a PosteriorSummary from visited models.

    `visit_counts` maps model -> target-chain visit count (post burn-in).
    """
    log_unnorm = np.asarray(log_unnorm, dtype=float)
    if len(models) == 0:
        raise SearchError("no models visited")
    probs = _renormalize(log_unnorm)
    freq = None
    if visit_counts is not None:
        total = sum(visit_counts.values())
        freq = np.array([visit_counts.get(m, 0) / max(total, 1) for m in models])
    return PosteriorSummary(
        method=method,
        p=p,
        models=list(models),
        log_unnorm=log_unnorm,
        renorm_probs=probs,
        visit_freq=freq,
        diagnostics=diagnostics or {},
    )


class ModelSearch:
    """Exploration driver over a ModelFitter."""

    def __init__(self, fitter: ModelFitter, enum_limit: int = DEFAULT_ENUM_LIMIT):
        self.fitter = fitter
        self.enum_limit = enum_limit
        self.design = fitter.design
        self.p = fitter.design.p
        self._last_fit: FitResult | None = None
        self._score_cache: dict = {}

    def _score(self, gamma) -> float:
        """Log unnormalized posterior with warm-started fitting."""
        gamma = tuple(gamma)
        cached = self._score_cache.get(gamma)
        if cached is not None:
            return cached
        model = ModelIndex(gamma)
        lp = self.fitter.model_logprior(model)
        if lp == -np.inf:
            score = -np.inf
        else:
            fit = self.fitter.fit(model, warm=self._last_fit)
            self._last_fit = fit
            score = fit.log_marglik + lp
        self._score_cache[gamma] = score
        return score

    def _covariate_codes(self, j) -> tuple:
        return (0, 1) if self.design.blocks[j] is None else (0, 1, 2)

    def model_space_size(self) -> int:
        size = 1
        for j in range(self.p):
            size *= len(self._covariate_codes(j))
        return size

    # -- exact enumeration ----------------------------------------------

    def enumerate_all(self) -> PosteriorSummary:
        size = self.model_space_size()
        if size > self.enum_limit:
            raise SearchError(
                f"model space has {size} models; exceeds limit {self.enum_limit}"
            )
        models, scores = [], []
        for gamma in itertools.product(
            *[self._covariate_codes(j) for j in range(self.p)]
        ):
            s = self._score(gamma)
            if s == -np.inf:
                continue
            models.append(tuple(gamma))
            scores.append(s)
        return summarize(models, scores, self.p, "enumerate")

    # -- greedy initialization and Gibbs --------------------------------

    def greedy_init(self, max_sweeps=50, start=None) -> AugmentedState:
        """Coordinate-wise argmax over the augmented indicators.

        Unlike the sampling kernel, the greedy pass may switch a
        non-linear indicator on while the linear one is off: under the
        state-to-model map the non-linear flag alone already yields the
        full effect, and a final reconciliation step lifts the linear
        flag afterwards.  This lets strong non-monotone effects, whose
        linear projection is negligible, be discovered directly.
        """
        p = self.p
        gt = [0] * (2 * p) if start is None else list(start.gtilde)
        for _ in range(max_sweeps):
            changed = False
            for j in range(2 * p):
                if j < p:
                    if gt[j + p] == 1:
                        new = 1  # model unchanged by the linear flag; lift it
                    else:
                        on, off = list(gt), list(gt)
                        on[j], off[j] = 1, 0
                        s_on = self._score(_gt_to_gamma(on, p))
                        s_off = self._score(_gt_to_gamma(off, p))
                        new = int(s_on > s_off)
                else:
                    if self.design.blocks[j - p] is None:
                        new = 0
                    else:
                        on, off = list(gt), list(gt)
                        on[j], off[j] = 1, 0
                        s_on = self._score(_gt_to_gamma(on, p))
                        s_off = self._score(_gt_to_gamma(off, p))
                        new = int(s_on > s_off)
                if new != gt[j]:
                    gt[j] = new
                    changed = True
            if not changed:
                break
        # reconciliation: a non-linear flag implies the linear flag
        for j in range(p):
            if gt[j + p] == 1:
                gt[j] = 1
        return AugmentedState(tuple(gt))

    def gibbs(
        self,
        iterations: int = DEFAULT_ITERATIONS,
        seed: int = 0,
        chains: int = 1,
        burn_frac: float = 0.1,
        init: AugmentedState | None = None,
    ) -> PosteriorSummary:
        """Augmented-space Gibbs sampling.

        Sweeps the linear indicators 1..p then the non-linear indicators
        p+1..2p each iteration; one state is recorded per iteration.
        Multiple chains run sequentially on independent streams and pool
        their draws; the renormalized estimator uses every visited model
        while visit frequencies drop the first `burn_frac` of each chain.
        """
        if iterations < 1:
            raise SearchError("iterations must be positive")
        start = self.greedy_init() if init is None else init
        p = self.p
        visit_counts: dict = {}
        flips = 0
        updates = 0
        nl_evals = np.zeros(p, dtype=int)
        chains_states = []
        burn = int(np.floor(burn_frac * iterations))
        score = self._score
        no_block = [self.design.blocks[j] is None for j in range(p)]
        for chain in range(chains):
            rng = np.random.Generator(np.random.Philox(key=philox_key(seed, chain)))
            gamma = list(start.to_gamma())
            states = []
            for _ in range(iterations):
                # linear indicators; forced on while the block is active
                for j in range(p):
                    if gamma[j] == 2:
                        continue
                    old = gamma[j]
                    gamma[j] = 1
                    s_on = score(tuple(gamma))
                    gamma[j] = 0
                    s_off = score(tuple(gamma))
                    new = 1 if rng.random() < _two_way(s_on, s_off) else 0
                    gamma[j] = new
                    updates += 1
                    flips += new != old
                # non-linear indicators; forced off without the linear term
                for j in range(p):
                    if gamma[j] == 0 or no_block[j]:
                        continue
                    old = gamma[j]
                    nl_evals[j] += 1
                    gamma[j] = 2
                    s_on = score(tuple(gamma))
                    gamma[j] = 1
                    s_off = score(tuple(gamma))
                    new = 2 if rng.random() < _two_way(s_on, s_off) else 1
                    gamma[j] = new
                    updates += 1
                    flips += new != old
                states.append(tuple(gamma))
            chains_states.append(states)
            for g in states[burn:]:
                visit_counts[g] = visit_counts.get(g, 0) + 1
        models = sorted({g for states in chains_states for g in states})
        scores = [self._score(g) for g in models]
        diagnostics = {
            "iterations": iterations,
            "chains": chains,
            "burn_in": burn,
            "flip_rate": flips / max(updates, 1),
            "nonlinear_eval_fraction": (nl_evals / (iterations * chains)).tolist(),
            "ess_inclusion": _inclusion_ess(chains_states, p),
            "n_visited": len(models),
            "n_fits": self.fitter.n_fits,
        }
        return summarize(
            models, scores, p, "gibbs", visit_counts=visit_counts,
            diagnostics=diagnostics,
        )

    def run(self, iterations=DEFAULT_ITERATIONS, seed=0, chains=1) -> PosteriorSummary:
        """Enumerate when the model space fits the limit, else Gibbs."""
        if self.model_space_size() <= self.enum_limit:
            return self.enumerate_all()
        return self.gibbs(iterations=iterations, seed=seed, chains=chains)


def _inclusion_ess(chains_states, p) -> list:
    """Effective sample size of each covariate's inclusion indicator."""
    out = []
    for j in range(p):
        ess_total = 0.0
        for states in chains_states:
            x = np.array([1.0 if g[j] != 0 else 0.0 for g in states])
            n = len(x)
            v = x.var()
            if v == 0.0:
                ess_total += float(n)
                continue
            xc = x - x.mean()
            # sum autocorrelations until the first negative lag
            rho_sum = 0.0
            for lag in range(1, min(n - 1, 1000)):
                r = float(xc[:-lag] @ xc[lag:]) / ((n - lag) * v)
                if r <= 0:
                    break
                rho_sum += r
            ess_total += n / (1.0 + 2.0 * rho_sum)
        out.append(float(ess_total))
    return out
