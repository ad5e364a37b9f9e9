"""Design construction: standardized covariates, orthogonalized spline
blocks, and a lazily filled cache of column cross-products.

Each continuous covariate j contributes a linear column x_j plus, per
basis level r, an n-by-r block spanning the cubic-spline deviations from
linearity.  The block is built from a clamped cubic B-spline basis with
r + 2 functions on equi-spaced knots; since that basis reproduces
constants and linear functions exactly, projecting out (1, x_j) leaves
exactly r independent directions, which are kept as an orthonormal block.
Model evidence is invariant to this within-block reparameterization
because the group prior is Zellner-structured.

Binary dummy covariates are centered, never scaled, and never receive a
spline block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline


class DesignError(ValueError):
    """Raised for ill-posed design requests (constant columns, bad rank)."""


@dataclass(frozen=True)
class SurvivalDataset:
    """Right-censored outcome data on the log-time scale.

    y : observed log-times, y_i = min(log o_i, log c_i)
    d : event indicators, 1 = event observed, 0 = censored
    X_raw : n-by-p covariate matrix
    """

    y: np.ndarray
    d: np.ndarray
    X_raw: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        d = np.asarray(self.d)
        X = np.asarray(self.X_raw, dtype=float)
        if X.ndim != 2:
            raise DesignError("X_raw must be two-dimensional")
        if not (len(y) == len(d) == X.shape[0]):
            raise DesignError("y, d and X_raw must have matching lengths")
        if not np.all(np.isfinite(y)):
            raise DesignError("y must be finite")
        if not np.all((d == 0) | (d == 1)):
            raise DesignError("d must be 0/1")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "d", d.astype(int))
        object.__setattr__(self, "X_raw", X)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def p(self) -> int:
        return self.X_raw.shape[1]

    @property
    def n_obs(self) -> int:
        """Number of uncensored (event) observations."""
        return int(self.d.sum())


@dataclass(frozen=True)
class StandardizeMeta:
    """Back-transform information for standardized columns."""

    mean: np.ndarray
    scale: np.ndarray  # 1.0 for binary columns
    binary: np.ndarray  # bool mask


def detect_binary(X: np.ndarray) -> np.ndarray:
    """Columns whose observed values are exactly {0, 1} (both present)."""
    out = np.zeros(X.shape[1], dtype=bool)
    for j in range(X.shape[1]):
        vals = np.unique(X[:, j])
        out[j] = len(vals) == 2 and set(vals) <= {0.0, 1.0}
    return out


def standardize(X_raw, binary=None):
    """Center and scale covariates.

    Continuous columns become mean 0, sample SD 1 (ddof 0).  Binary dummy
    columns are centered only.  Returns (X, StandardizeMeta).

    Raises
    ------
    DesignError
        If a column is constant, naming the offending column.
    """
    X = np.asarray(X_raw, dtype=float)
    if binary is None:
        binary = detect_binary(X)
    else:
        binary = np.asarray(binary, dtype=bool)
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    for j in range(X.shape[1]):
        if sd[j] == 0.0:
            raise DesignError(f"covariate column {j} is constant")
    scale = np.where(binary, 1.0, sd)
    Xs = (X - mean) / scale
    return Xs, StandardizeMeta(mean=mean, scale=scale, binary=binary)


def spline_block(x, r: int) -> np.ndarray:
    """Clamped cubic B-spline basis with r columns, equi-spaced knots.

    Knots span [min(x), max(x)] with boundary knots repeated (order 4);
    rows sum to one on the full range.
    """
    x = np.asarray(x, dtype=float)
    if r < 4:
        raise DesignError("cubic B-spline basis needs r >= 4 columns")
    n_distinct = len(np.unique(x))
    if n_distinct < r + 4:
        raise DesignError(
            f"covariate has {n_distinct} distinct values; "
            f"need at least {r + 4} for r = {r} (use a smaller r)"
        )
    a, b = float(x.min()), float(x.max())
    if a == b:
        raise DesignError("covariate is constant; no spline basis exists")
    interior = np.linspace(a, b, r - 2)[1:-1]
    knots = np.concatenate([np.repeat(a, 4), interior, np.repeat(b, 4)])
    return BSpline.design_matrix(x, knots, 3).toarray()


def orthogonalize(S_tilde, Z) -> np.ndarray:
    """Residualize the columns of S_tilde against the column space of Z.

    Computed via a reduced QR of Z for stability; returns S with
    Z.T @ S = 0 and span(Z, S) = span(Z, S_tilde).
    """
    S_tilde = np.asarray(S_tilde, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[1] == 0:
        return S_tilde.copy()
    Q, R = np.linalg.qr(Z)
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-10 * max(diag.max(), 1.0):
        raise DesignError("Z is rank deficient; cannot orthogonalize against it")
    return S_tilde - Q @ (Q.T @ S_tilde)


def _deviation_block(x, r, lower, base_extra=0):
    """Orthonormal rank-r basis of the spline deviations from `lower`.

    `lower` holds the columns already in the model family for this
    covariate (intercept, linear term, previous levels).  The raw basis
    starts at r + 2 + base_extra functions: two of its directions fall
    inside span(1, x), and later levels pass base_extra = 2 because the
    global cubic directions are already captured by the coarsest level.
    If the deviation space is still rank deficient on the observed points
    (empty extreme knot cells, knot collisions across levels) the basis
    is widened until r independent directions exist.
    """
    for extra in range(base_extra, base_extra + 9):
        try:
            raw = spline_block(x, r + 2 + extra)
        except DesignError:
            break
        resid = orthogonalize(raw, lower)
        u, s, _ = np.linalg.svd(resid, full_matrices=False)
        if s[r - 1] > 1e-8 * s[0]:
            return u[:, :r]
    raise DesignError(
        f"spline deviation space has rank < {r}; "
        "covariate has too little variation (use a smaller r)"
    )


@dataclass
class DesignBundle:
    """Standardized linear columns plus per-covariate spline blocks.

    Column ids for the Gram cache: 0 is the intercept, 1..p the linear
    columns, then block columns in covariate order (level-major within a
    covariate).  Immutable after construction; share freely.
    """

    X: np.ndarray
    intercept: np.ndarray
    blocks: list  # per covariate: (n, total_width) array or None for dummies
    level_slices: list  # per covariate: list of slice objects into its block
    r_levels: tuple
    meta: StandardizeMeta
    xtx_all: np.ndarray = field(init=False)
    sts_all: list = field(init=False)
    _block_offset: list = field(init=False)

    def __post_init__(self):
        n, p = self.X.shape
        self.xtx_all = np.einsum("ij,ij->j", self.X, self.X)
        self.sts_all = [None if B is None else B.T @ B for B in self.blocks]
        off = []
        nxt = 1 + p
        for B in self.blocks:
            off.append(nxt)
            nxt += 0 if B is None else B.shape[1]
        self._block_offset = off
        self.n_columns = nxt

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def block_width(self, j: int) -> int:
        B = self.blocks[j]
        return 0 if B is None else B.shape[1]

    def block_col_ids(self, j: int):
        return range(self._block_offset[j], self._block_offset[j] + self.block_width(j))

    def column(self, cid: int) -> np.ndarray:
        if cid == 0:
            return self.intercept
        if cid <= self.p:
            return self.X[:, cid - 1]
        for j in range(self.p):
            w = self.block_width(j)
            if self._block_offset[j] <= cid < self._block_offset[j] + w:
                return self.blocks[j][:, cid - self._block_offset[j]]
        raise KeyError(f"no column with id {cid}")

    def matrix(self, col_ids, rows=None) -> np.ndarray:
        cols = [self.column(c) for c in col_ids]
        M = np.column_stack(cols) if cols else np.empty((self.n, 0))
        return M if rows is None else M[rows]

    def signed(self, s: np.ndarray) -> "DesignBundle":
        """Row-signed copy (used by the probit-to-AFT reduction).

        Sign flips leave every all-row cross-product unchanged.
        """
        s = np.asarray(s, dtype=float).reshape(-1, 1)
        return DesignBundle(
            X=self.X * s,
            intercept=self.intercept * s.ravel(),
            blocks=[None if B is None else B * s for B in self.blocks],
            level_slices=self.level_slices,
            r_levels=self.r_levels,
            meta=self.meta,
        )

    def subset(self, rows) -> "DesignBundle":
        """Row-subset view sharing the basis built on the full data.

        Used by cross-validation: the covariate transform and spline
        basis stay fixed while models are fit on a subset of rows.
        """
        return DesignBundle(
            X=self.X[rows],
            intercept=self.intercept[rows],
            blocks=[None if B is None else B[rows] for B in self.blocks],
            level_slices=self.level_slices,
            r_levels=self.r_levels,
            meta=self.meta,
        )


def build_design(X_raw, r_levels=(5,), binary=None) -> DesignBundle:
    """Standardize covariates and build orthogonalized spline blocks.

    For sequential levels (r_1, r_2, ...), each level's block is built
    orthogonal to the intercept, the linear column, and all previous
    levels' blocks for that covariate.
    """
    r_levels = tuple(int(r) for r in r_levels)
    if any(r < 1 for r in r_levels):
        raise DesignError("r levels must be positive")
    Xs, meta = standardize(X_raw, binary=binary)
    n, p = Xs.shape
    ones = np.ones(n)
    blocks, level_slices = [], []
    for j in range(p):
        if meta.binary[j] or not r_levels:
            blocks.append(None)
            level_slices.append([])
            continue
        lower = np.column_stack([ones, Xs[:, j]])
        parts, slices, start = [], [], 0
        for lvl, r in enumerate(r_levels):
            S = _deviation_block(Xs[:, j], r, lower, base_extra=0 if lvl == 0 else 2)
            parts.append(S)
            slices.append(slice(start, start + r))
            start += r
            lower = np.column_stack([lower, S])
        blocks.append(np.column_stack(parts))
        level_slices.append(slices)
    return DesignBundle(
        X=Xs,
        intercept=ones,
        blocks=blocks,
        level_slices=level_slices,
        r_levels=r_levels,
        meta=meta,
    )


class GramCache:
    """Lazily filled store of column cross-products over a row subset.

    Entries are computed on first request and reused afterwards; repeated
    computation of the same entry (e.g. from concurrent callers) is
    harmless because the value is deterministic.  CPython dict operations
    make single writes atomic under the GIL.
    """

    def __init__(self, design: DesignBundle, rows, y=None):
        self.design = design
        self.rows = np.asarray(rows, dtype=bool)
        self._y = None if y is None else np.asarray(y, dtype=float)[self.rows]
        self._xx = {}
        self._xy = {}
        self._yy = None

    def get(self, i: int, j: int) -> float:
        key = (i, j) if i <= j else (j, i)
        val = self._xx.get(key)
        if val is None:
            ci = self.design.column(key[0])[self.rows]
            cj = self.design.column(key[1])[self.rows]
            val = float(np.dot(ci, cj))
            self._xx[key] = val
        return val

    def get_y(self, i: int) -> float:
        val = self._xy.get(i)
        if val is None:
            if self._y is None:
                raise ValueError("cache built without a response vector")
            ci = self.design.column(i)[self.rows]
            val = float(np.dot(ci, self._y))
            self._xy[i] = val
        return val

    def get_yy(self) -> float:
        if self._yy is None:
            if self._y is None:
                raise ValueError("cache built without a response vector")
            self._yy = float(np.dot(self._y, self._y))
        return self._yy

    def submatrix(self, col_ids) -> np.ndarray:
        ids = list(col_ids)
        k = len(ids)
        G = np.empty((k, k))
        for a in range(k):
            for b in range(a, k):
                G[a, b] = G[b, a] = self.get(ids[a], ids[b])
        return G

    def crossvec(self, col_ids) -> np.ndarray:
        return np.array([self.get_y(c) for c in col_ids])
