"""Command-line interface.

Subcommands: ``fit`` (model selection on a CSV dataset), ``simulate``
(scenario replications with selection metrics), ``permute`` (response
permutation false-positive harness), ``elicit`` (prior dispersion from a
practical-significance threshold) and ``cv`` (leave-one-out concordance).

Every run writes one JSON document with a stable schema and, where the
result is tabular, sibling CSV files for plotting.  Outputs are
byte-identical across runs with the same configuration and seed.  A flat
``key = value`` config file can supply any option, with command-line
flags taking precedence; keys follow the symbols used throughout
(g_L, g_M, g_E, g_S, a_sigma, b_sigma, B, r, seed, ...).

Exit codes: 0 success, 1 user error (bad input or flags), 2 numerical
failure.  Set SURVSEL_LOG=debug|info|warning for log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .design import DesignError, SurvivalDataset, build_design
from .inference import InferenceError, ModelFitter
from .likelihoods import LikelihoodError, ModelIndex
from .priors import PriorError, PriorSpec, elicit_dispersion
from .search import DEFAULT_ENUM_LIMIT, DEFAULT_ITERATIONS, ModelSearch, SearchError
from .sim import (
    ScenarioSpec,
    SimError,
    concordance_index,
    gen_scenario,
    permute_response,
    scenario_truth,
    selection_metrics,
)

SCHEMA_VERSION = 1

BACKEND_ALIASES = {
    "aft-normal": "aft_normal",
    "aft-laplace": "aft_laplace",
    "cox": "cox",
    "probit": "probit",
}
FAMILY_ALIASES = {"zellner": "zellner", "pmom": "pmom", "pemom": "pemom"}

log = logging.getLogger("survsel")


class UserError(Exception):
    pass


class NumericalError(Exception):
    pass


# ---------------------------------------------------------------------------
# input handling

def load_config(path) -> dict:
    """Flat key = value file; blank lines and # comments ignored."""
    out = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise UserError(f"{path}:{lineno}: expected key = value")
                key, _, value = line.partition("=")
                out[key.strip()] = value.strip()
    except OSError as exc:
        raise UserError(f"cannot read config file {path}: {exc}") from exc
    return out


def read_dataset(
    path,
    time_col,
    status_col,
    covariates=None,
    dummy_cols=(),
    pre_logged=False,
    backend="aft_normal",
):
    """Parse a CSV file into a SurvivalDataset plus column names.

    The header row is required.  Times must be positive (they are logged
    internally) unless `pre_logged`; the status column must be 0/1.  For
    the probit backend the status column holds the binary outcome and the
    time column is optional.
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise UserError(f"{path}: empty file; a header row is required")
            rows = list(reader)
    except OSError as exc:
        raise UserError(f"cannot read {path}: {exc}") from exc
    header = [h.strip() for h in header]
    idx = {name: i for i, name in enumerate(header)}
    if status_col not in idx:
        raise UserError(f"{path}: no column named {status_col!r} in header")
    need_time = backend != "probit"
    if need_time and time_col not in idx:
        raise UserError(f"{path}: no column named {time_col!r} in header")
    if covariates is None:
        covariates = [h for h in header if h not in (time_col, status_col)]
    for c in covariates:
        if c not in idx:
            raise UserError(f"{path}: no covariate column named {c!r}")
    for c in dummy_cols:
        if c not in covariates:
            raise UserError(f"{path}: dummy column {c!r} is not among the covariates")

    def cell(row_vals, rownum, name):
        v = row_vals[idx[name]].strip()
        if v == "":
            raise UserError(f"{path}: row {rownum}: missing value in column {name!r}")
        try:
            return float(v)
        except ValueError:
            raise UserError(
                f"{path}: row {rownum}: cannot parse {v!r} in column {name!r}"
            )

    y, d, X = [], [], []
    for k, row_vals in enumerate(rows):
        rownum = k + 2  # 1-based, counting the header
        if len(row_vals) != len(header):
            raise UserError(
                f"{path}: row {rownum}: expected {len(header)} fields, "
                f"got {len(row_vals)}"
            )
        status = cell(row_vals, rownum, status_col)
        if status not in (0.0, 1.0):
            raise UserError(
                f"{path}: row {rownum}: status must be 0 or 1, got {status!r}"
            )
        d.append(int(status))
        if need_time:
            t = cell(row_vals, rownum, time_col)
            if pre_logged:
                y.append(t)
            else:
                if t <= 0:
                    raise UserError(
                        f"{path}: row {rownum}: time must be positive, got {t!r}"
                    )
                y.append(np.log(t))
        else:
            y.append(0.0)
        X.append([cell(row_vals, rownum, c) for c in covariates])
    if not X:
        raise UserError(f"{path}: no data rows")
    binary = np.array([c in dummy_cols for c in covariates])
    try:
        data = SurvivalDataset(y=np.array(y), d=np.array(d), X_raw=np.array(X))
    except DesignError as exc:
        raise UserError(f"{path}: {exc}") from exc
    return data, list(covariates), binary


# ---------------------------------------------------------------------------
# output handling

def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def write_json(path, doc):
    text = json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def _sidecar(output, suffix):
    base = output[:-5] if output.endswith(".json") else output
    return f"{base}_{suffix}.csv"


# ---------------------------------------------------------------------------
# shared model-search plumbing

def _prior_spec(args, backend) -> PriorSpec:
    kw = {}
    for name in ("g_L", "g_M", "g_E", "g_S", "a_sigma", "b_sigma"):
        v = getattr(args, name)
        if v is not None:
            kw[name] = float(v)
    spec = PriorSpec.defaults(
        family=FAMILY_ALIASES[args.prior], backend=backend, **kw
    )
    return spec


def _search_summary(data, design, spec, backend, args):
    fitter = ModelFitter(data, design, spec, backend=backend)
    search = ModelSearch(fitter, enum_limit=args.enum_limit)
    if search.model_space_size() <= args.enum_limit:
        return search.enumerate_all(), fitter
    return (
        search.gibbs(iterations=args.B, seed=args.seed, chains=args.chains),
        fitter,
    )


def _back_transform(fit, design, names):
    """Top-model MAP coefficients on the observation scale.

    Linear coefficients map back to raw covariate units; spline-block
    coefficients stay on the orthonormal basis of the standardized
    covariate (reported per covariate).
    """
    backend = fit.backend
    model = fit.model
    theta = fit.theta
    has_scale = backend in ("aft_normal", "aft_laplace")
    sigma = float(np.exp(-theta[-1])) if has_scale else None
    coef = theta[:-1] if has_scale else theta
    scale = sigma if has_scale else 1.0
    pos = 0
    out = {"sigma": sigma}
    if backend != "cox":
        intercept_std = coef[0] * scale
        pos = 1
    else:
        intercept_std = None
    beta_std, beta_raw = {}, {}
    adjust = 0.0
    for j in model.active_linear():
        b = coef[pos] * scale
        beta_std[names[j]] = float(b)
        beta_raw[names[j]] = float(b / design.meta.scale[j])
        adjust += b * design.meta.mean[j] / design.meta.scale[j]
        pos += 1
    delta = {}
    for j in model.active_nonlinear():
        w = design.block_width(j)
        delta[names[j]] = [float(v * scale) for v in coef[pos : pos + w]]
        pos += w
    if intercept_std is not None:
        out["intercept"] = float(intercept_std - adjust)
    out["beta"] = beta_raw
    out["beta_standardized"] = beta_std
    out["delta"] = delta
    return out


def _summary_doc(summary, names, top_k):
    return {
        "method": summary.method,
        "n_models_visited": len(summary.models),
        "models": [
            {"gamma": list(g), "prob": p}
            for g, p in summary.top(top_k)
        ],
        "marginal": {
            "covariates": list(names),
            "p_linear": summary.marginal_linear().tolist(),
            "p_nonlinear": summary.marginal_nonlinear().tolist(),
            "p_active": summary.marginal_active().tolist(),
        },
        "diagnostics": summary.diagnostics,
    }


def _write_summary_tables(output, summary, names):
    rows = []
    for i, g in enumerate(summary.models):
        rows.append(
            [
                ".".join(str(v) for v in g),
                repr(float(summary.renorm_probs[i])),
                repr(float(summary.visit_freq[i])) if summary.visit_freq is not None else "",
            ]
        )
    write_csv(_sidecar(output, "models"), ["gamma", "prob", "visit_freq"], rows)
    ml = summary.marginal_linear()
    mn = summary.marginal_nonlinear()
    write_csv(
        _sidecar(output, "marginals"),
        ["covariate", "p_linear", "p_nonlinear", "p_active"],
        [
            [names[j], repr(float(ml[j])), repr(float(mn[j])), repr(float(ml[j] + mn[j]))]
            for j in range(len(names))
        ],
    )


# ---------------------------------------------------------------------------
# commands

def cmd_fit(args) -> dict:
    backend = BACKEND_ALIASES[args.backend]
    data, names, binary = read_dataset(
        args.input,
        args.time_col,
        args.status_col,
        covariates=args.covariates,
        dummy_cols=args.dummy_cols or (),
        pre_logged=args.pre_logged,
        backend=backend,
    )
    try:
        design = build_design(data.X_raw, r_levels=(args.r,), binary=binary)
    except DesignError as exc:
        raise UserError(str(exc)) from exc
    spec = _prior_spec(args, backend)
    summary, fitter = _search_summary(data, design, spec, backend, args)
    top_fit = fitter.fit(summary.top_model)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "fit",
        "config": _config_echo(args, backend, spec),
        "n": data.n,
        "n_events": data.n_obs,
        **_summary_doc(summary, names, args.top_k),
        "top_model": {
            "gamma": list(summary.top_model),
            "prob": summary.prob_of(summary.top_model),
            "coefficients": _back_transform(top_fit, design, names),
        },
    }
    write_json(args.output, doc)
    _write_summary_tables(args.output, summary, names)
    return doc


def _simulate_one(payload):
    (rep, scenario, n, censored, error, p_total, backend, prior_kw, family,
     r, B, seed, enum_limit, chains) = payload
    spec_sim = ScenarioSpec(
        scenario=scenario, n=n, censored=censored, error=error, p_total=p_total
    )
    data = gen_scenario(spec_sim, seed=(seed, rep))
    design = build_design(data.X_raw, r_levels=(r,))
    spec = PriorSpec(family=family, **prior_kw)
    fitter = ModelFitter(data, design, spec, backend=backend)
    search = ModelSearch(fitter, enum_limit=enum_limit)
    if search.model_space_size() <= enum_limit:
        summary = search.enumerate_all()
    else:
        summary = search.gibbs(iterations=B, seed=(seed, rep), chains=chains)
    truth = scenario_truth(spec_sim)
    m = selection_metrics(summary.top_model, truth)
    active = summary.marginal_active()
    return {
        "replicate": rep,
        "selected": ".".join(str(v) for v in summary.top_model),
        "exact_match": bool(m.exact_match),
        "truly_active_selected": m.truly_active_selected,
        "truly_inactive_selected": m.truly_inactive_selected,
        "top_prob": float(summary.prob_of(summary.top_model)),
        "p_active_x1": float(active[0]),
        "p_active_x2": float(active[1]) if len(active) > 1 else None,
        "n_visited": len(summary.models),
    }


def cmd_simulate(args) -> dict:
    backend = BACKEND_ALIASES[args.backend]
    if backend == "probit":
        raise UserError("simulate generates survival scenarios; pick an AFT or Cox backend")
    spec = _prior_spec(args, backend)
    prior_kw = {
        k: getattr(spec, k)
        for k in ("g_L", "g_M", "g_E", "g_S", "a_sigma", "b_sigma")
    }
    payloads = [
        (
            rep, args.scenario, args.n, args.censored, args.error, args.p_total,
            backend, prior_kw, spec.family, args.r, args.B, args.seed,
            args.enum_limit, args.chains,
        )
        for rep in range(args.replicates)
    ]
    if args.threads > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(_simulate_one, payloads))
    else:
        results = [_simulate_one(p) for p in payloads]
    results.sort(key=lambda r: r["replicate"])
    correct = float(np.mean([r["exact_match"] for r in results]))
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "simulate",
        "config": _config_echo(args, backend, spec),
        "replicates": args.replicates,
        "correct_selection_proportion": correct,
        "mean_truly_active_selected": float(
            np.mean([r["truly_active_selected"] for r in results])
        ),
        "mean_truly_inactive_selected": float(
            np.mean([r["truly_inactive_selected"] for r in results])
        ),
        "mean_p_active_x1": float(np.mean([r["p_active_x1"] for r in results])),
        "mean_p_active_x2": float(
            np.mean([r["p_active_x2"] for r in results if r["p_active_x2"] is not None])
        ),
        "per_replicate": results,
    }
    write_json(args.output, doc)
    header = list(results[0].keys())
    write_csv(
        _sidecar(args.output, "replicates"),
        header,
        [[r[k] for k in header] for r in results],
    )
    return doc


def cmd_permute(args) -> dict:
    backend = BACKEND_ALIASES[args.backend]
    data, names, binary = read_dataset(
        args.input,
        args.time_col,
        args.status_col,
        covariates=args.covariates,
        dummy_cols=args.dummy_cols or (),
        pre_logged=args.pre_logged,
        backend=backend,
    )
    try:
        design = build_design(data.X_raw, r_levels=(args.r,), binary=binary)
    except DesignError as exc:
        raise UserError(str(exc)) from exc
    spec = _prior_spec(args, backend)
    null_model = (0,) * data.p
    rows = []
    for k in range(args.permutations):
        perm = permute_response(data, seed=(args.seed, k))
        fitter = ModelFitter(perm, design, spec, backend=backend)
        search = ModelSearch(fitter, enum_limit=args.enum_limit)
        if search.model_space_size() <= args.enum_limit:
            summary = search.enumerate_all()
        else:
            summary = search.gibbs(iterations=args.B, seed=(args.seed, k),
                                   chains=args.chains)
        top = summary.top_model
        rows.append(
            {
                "permutation": k,
                "selected_size": sum(1 for v in top if v != 0),
                "selected": ".".join(str(v) for v in top),
                "null_selected": bool(top == null_model),
                "null_posterior": float(summary.prob_of(null_model)),
            }
        )
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "permute",
        "config": _config_echo(args, backend, spec),
        "permutations": args.permutations,
        "null_selected_proportion": float(np.mean([r["null_selected"] for r in rows])),
        "mean_null_posterior": float(np.mean([r["null_posterior"] for r in rows])),
        "mean_selected_size": float(np.mean([r["selected_size"] for r in rows])),
        "per_permutation": rows,
    }
    write_json(args.output, doc)
    header = list(rows[0].keys())
    write_csv(
        _sidecar(args.output, "permutations"),
        header,
        [[r[k] for k in header] for r in rows],
    )
    return doc


def cmd_elicit(args) -> dict:
    family = FAMILY_ALIASES[args.family]
    if family == "zellner":
        raise UserError("elicitation applies to the non-local families (pmom, pemom)")
    if args.threshold <= 1.0:
        raise UserError("the practical-significance threshold must exceed 1")
    if not 0.0 < args.target < 1.0:
        raise UserError("target probability must lie in (0, 1)")
    try:
        g = elicit_dispersion(
            args.threshold, family, a_sigma=args.a_sigma or 3.0,
            b_sigma=args.b_sigma or 3.0, target=args.target,
        )
    except PriorError as exc:
        raise NumericalError(str(exc)) from exc
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "elicit",
        "family": family,
        "threshold": args.threshold,
        "target": args.target,
        "g": g,
    }
    if args.output:
        write_json(args.output, doc)
    else:
        sys.stdout.write(json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n")
    return doc


def cmd_cv(args) -> dict:
    backend = BACKEND_ALIASES[args.backend]
    if backend == "probit":
        raise UserError("cv computes a survival concordance; pick an AFT or Cox backend")
    data, names, binary = read_dataset(
        args.input,
        args.time_col,
        args.status_col,
        covariates=args.covariates,
        dummy_cols=args.dummy_cols or (),
        pre_logged=args.pre_logged,
        backend=backend,
    )
    try:
        design = build_design(data.X_raw, r_levels=(args.r,), binary=binary)
    except DesignError as exc:
        raise UserError(str(exc)) from exc
    spec = _prior_spec(args, backend)
    n = data.n
    scores = np.empty(n)
    sizes = []
    for i in range(n):
        train = np.ones(n, dtype=bool)
        train[i] = False
        sub = SurvivalDataset(
            y=data.y[train], d=data.d[train], X_raw=data.X_raw[train]
        )
        sub_design = design.subset(train)
        fitter = ModelFitter(sub, sub_design, spec, backend=backend)
        search = ModelSearch(fitter, enum_limit=args.enum_limit)
        if search.model_space_size() <= args.enum_limit:
            summary = search.enumerate_all()
        else:
            summary = search.gibbs(iterations=args.B, seed=(args.seed, i),
                                   chains=args.chains)
        top = summary.top_model
        fit = fitter.fit(top)
        model = ModelIndex(top)
        cols = model.col_ids(design, intercept=backend != "cox")
        z = design.matrix(cols)[i]
        coef = fit.theta[:-1] if backend in ("aft_normal", "aft_laplace") else fit.theta
        eta = float(z @ coef)
        # higher risk score must mean shorter survival
        scores[i] = eta if backend == "cox" else -eta
        sizes.append(sum(1 for v in top if v != 0))
    ci = concordance_index(scores, data.y, data.d)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "cv",
        "config": _config_echo(args, backend, spec),
        "n": n,
        "concordance_index": float(ci),
        "mean_selected_size": float(np.mean(sizes)),
    }
    write_json(args.output, doc)
    return doc


# ---------------------------------------------------------------------------
# argument plumbing

def _config_echo(args, backend, spec) -> dict:
    out = {
        "backend": backend,
        "prior": spec.family,
        "g_L": spec.g_L,
        "g_M": spec.g_M,
        "g_E": spec.g_E,
        "g_S": spec.g_S,
        "a_sigma": spec.a_sigma,
        "b_sigma": spec.b_sigma,
        "r": args.r,
        "B": args.B,
        "seed": args.seed,
        "enum_limit": args.enum_limit,
        "chains": args.chains,
    }
    for k in ("scenario", "n", "replicates", "permutations", "censored", "error",
              "p_total", "input", "threads"):
        if hasattr(args, k):
            out[k] = getattr(args, k)
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UserError(message)


def _add_model_options(p):
    p.add_argument("--backend", choices=sorted(BACKEND_ALIASES), default=None)
    p.add_argument("--prior", choices=sorted(FAMILY_ALIASES), default=None)
    p.add_argument("--g-l", dest="g_L", type=float, default=None)
    p.add_argument("--g-m", dest="g_M", type=float, default=None)
    p.add_argument("--g-e", dest="g_E", type=float, default=None)
    p.add_argument("--g-s", dest="g_S", type=float, default=None)
    p.add_argument("--a-sigma", dest="a_sigma", type=float, default=None)
    p.add_argument("--b-sigma", dest="b_sigma", type=float, default=None)
    p.add_argument("--r", type=int, default=None, help="spline block dimension")
    p.add_argument("--iterations", "-B", dest="B", type=int, default=None)
    p.add_argument("--chains", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--enum-limit", dest="enum_limit", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--config", default=None, help="flat key = value options file")


def _add_input_options(p):
    p.add_argument("--input", required=True)
    p.add_argument("--time-col", default=None)
    p.add_argument("--status-col", default=None)
    p.add_argument("--covariates", default=None,
                   help="comma-separated covariate columns (default: all others)")
    p.add_argument("--dummy-cols", default=None,
                   help="comma-separated binary dummy columns")
    p.add_argument("--pre-logged", action="store_true", default=None,
                   help="time column already holds log-times")


_DEFAULTS = {
    "backend": "aft-normal",
    "prior": "pmom",
    "r": 5,
    "B": DEFAULT_ITERATIONS,
    "chains": 1,
    "seed": 1234,
    "enum_limit": DEFAULT_ENUM_LIMIT,
    "threads": 1,
    "time_col": "time",
    "status_col": "status",
    "pre_logged": False,
    "top_k": 10,
    "target": 0.99,
    "censored": True,
    "error": "normal",
    "p_total": 2,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="survsel", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="Bayesian model selection on a CSV dataset")
    _add_input_options(p_fit)
    _add_model_options(p_fit)
    p_fit.add_argument("--top-k", dest="top_k", type=int, default=None)
    p_fit.add_argument("--output", required=True)
    p_fit.set_defaults(func=cmd_fit)

    p_sim = sub.add_parser("simulate", help="scenario replications")
    p_sim.add_argument("--scenario", type=int, required=True)
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--replicates", type=int, default=50)
    cen = p_sim.add_mutually_exclusive_group()
    cen.add_argument("--censored", dest="censored", action="store_true", default=None)
    cen.add_argument("--uncensored", dest="censored", action="store_false")
    p_sim.add_argument("--error", choices=["normal", "alaplace"], default=None)
    p_sim.add_argument("--p-total", dest="p_total", type=int, default=None)
    _add_model_options(p_sim)
    p_sim.add_argument("--output", required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_perm = sub.add_parser("permute", help="response-permutation false positives")
    _add_input_options(p_perm)
    _add_model_options(p_perm)
    p_perm.add_argument("--permutations", type=int, default=50)
    p_perm.add_argument("--output", required=True)
    p_perm.set_defaults(func=cmd_permute)

    p_el = sub.add_parser("elicit", help="prior dispersion from a threshold")
    p_el.add_argument("--threshold", "-t", type=float, required=True)
    p_el.add_argument("--family", choices=sorted(FAMILY_ALIASES), required=True)
    p_el.add_argument("--a-sigma", dest="a_sigma", type=float, default=None)
    p_el.add_argument("--b-sigma", dest="b_sigma", type=float, default=None)
    p_el.add_argument("--target", type=float, default=None)
    p_el.add_argument("--output", default=None)
    p_el.set_defaults(func=cmd_elicit)

    p_cv = sub.add_parser("cv", help="leave-one-out concordance index")
    _add_input_options(p_cv)
    _add_model_options(p_cv)
    p_cv.add_argument("--output", required=True)
    p_cv.set_defaults(func=cmd_cv)
    return parser


def _resolve(args) -> None:
    """Apply config-file values, then hard defaults, to unset options."""
    cfg = load_config(args.config) if getattr(args, "config", None) else {}
    for key, raw in cfg.items():
        if not hasattr(args, key):
            raise UserError(f"unknown config key {key!r}")
        if getattr(args, key) is None:
            current_default = _DEFAULTS.get(key)
            if isinstance(current_default, bool) or key in ("censored", "pre_logged"):
                value = raw.lower() in ("1", "true", "yes")
            elif key in ("r", "B", "seed", "enum_limit", "threads", "chains",
                         "top_k", "p_total", "replicates", "permutations"):
                value = int(raw)
            elif key in ("g_L", "g_M", "g_E", "g_S", "a_sigma", "b_sigma",
                         "target", "threshold"):
                value = float(raw)
            else:
                value = raw
            setattr(args, key, value)
    for key, value in _DEFAULTS.items():
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, value)
    for key in ("covariates", "dummy_cols"):
        v = getattr(args, key, None)
        if isinstance(v, str):
            setattr(args, key, [c.strip() for c in v.split(",") if c.strip()])


def main(argv=None) -> int:
    logging.basicConfig(
        level=getattr(logging, os.environ.get("SURVSEL_LOG", "WARNING").upper(),
                      logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _resolve(args)
        args.func(args)
        return 0
    except UserError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except (DesignError, LikelihoodError, PriorError, SimError, SearchError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except (NumericalError, InferenceError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
