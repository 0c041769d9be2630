"""Config-driven experiment runner.

A flat ``key = value`` config file describes one experiment: the procedure,
a data source (scenario or CSV), the kernel, the score model, error level,
and replication count.  Each replication derives an independent sub-seed
from the master seed via a splitmix64 mix, so results are identical for any
worker count.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from . import __version__
from .dataio import DataFormatError, load_csv
from .kernels import KernelSpec, default_bandwidth
from .outliers import detect_outliers, fdp_and_power
from .scenarios import (
    A2_THRESHOLDS,
    gen_a1,
    gen_a2,
    gen_a3,
    gen_b1,
    gen_b3,
    gen_c3,
    split_rules,
)
from .screening import GreaterEqualRule, MultiLabelDataset, fwer_metrics, screen
from .selection import pser_metrics, select
from .scores import (
    fit_knn_one_class,
    fit_knn_quantile,
    fit_linear_residual,
)
from .twosample import conditional_two_sample_test

PROCEDURES = ("outlier-detect", "label-screen", "select", "two-sample-test")

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class ConfigError(ValueError):
    """The experiment configuration is invalid."""


def splitmix64(x: int) -> int:
    """One splitmix64 finalization step (64-bit avalanche mix)."""
    z = (x + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def subseed(master_seed: int, replication: int) -> int:
    """Independent 64-bit sub-seed for one replication."""
    return splitmix64((master_seed & _MASK64) ^ splitmix64(replication))


# -- score model factories ----------------------------------------------------


@dataclass(frozen=True)
class CqrScoreFamily:
    k: int = 50
    lo: float = 0.05
    hi: float = 0.95

    def fit(self, x, y):
        return fit_knn_quantile(x, y, k=min(self.k, len(x)), lo=self.lo, hi=self.hi)


@dataclass(frozen=True)
class ResidualScoreFamily:
    def fit(self, x, y):
        return fit_linear_residual(x, y)


@dataclass(frozen=True)
class OneClassScoreFamily:
    k: int = 5

    def fit(self, x):
        return fit_knn_one_class(x, k=self.k)


def _score_family(name: str, cfg: "ExperimentConfig"):
    if name == "cqr":
        return CqrScoreFamily(k=cfg.score_k or 50, lo=cfg.cqr_lo, hi=cfg.cqr_hi)
    if name == "residual":
        return ResidualScoreFamily()
    if name == "oneclass":
        return OneClassScoreFamily(k=cfg.score_k or 5)
    raise ConfigError(f"unknown score model {name!r}")


# -- configuration -------------------------------------------------------------


@dataclass
class ExperimentConfig:
    """Flat, typed experiment description.  See the README for the key table."""

    procedure: str
    scenario: str | None = None
    hypothesis: str = "null"
    csv: str | None = None
    csv2: str | None = None
    covariate_cols: tuple = ()
    response_cols: tuple = ()
    split: str | None = None
    n: int = 1000
    m: int = 500
    alpha: float = 0.1
    replications: int = 1
    seed: int = 0
    kernel_family: str = "gaussian"
    bandwidth: str | float = "auto"
    weight_cols: tuple | None = None
    score: str | None = None
    score_k: int | None = None
    cqr_lo: float = 0.05
    cqr_hi: float = 0.95
    rule_component: int = 0
    conditions: tuple = ()
    compare_baseline: bool = False
    inject_fraction: float = 0.0
    inject_scale: float = 1.0
    inject_mode: str = "sd"
    inject_quantile: float = 0.9
    output: str | None = None
    format: str = "json"
    threads: int = 1

    def validate(self):
        if self.procedure not in PROCEDURES + ("simulate",):
            raise ConfigError(f"procedure must be one of {PROCEDURES}, got {self.procedure!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.scenario is None and self.csv is None:
            raise ConfigError("either a scenario or a csv data source is required")
        if self.bandwidth != "auto":
            if not float(self.bandwidth) > 0:
                raise ConfigError("bandwidth must be positive or 'auto'")
        if self.kernel_family not in ("gaussian", "box"):
            raise ConfigError(f"kernel_family must be gaussian or box, got {self.kernel_family!r}")
        return self


_BOOL_KEYS = {"compare_baseline"}
_INT_KEYS = {"n", "m", "replications", "seed", "score_k", "rule_component", "threads"}
_FLOAT_KEYS = {"alpha", "cqr_lo", "cqr_hi", "inject_fraction", "inject_scale", "inject_quantile"}
_TUPLE_KEYS = {"covariate_cols", "response_cols", "conditions"}


def parse_config(path: str) -> ExperimentConfig:
    """Parse a flat ``key = value`` config file ('#' starts a comment)."""
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for line_num, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{line_num}: expected 'key = value', got {raw!r}")
                key, _, val = line.partition("=")
                values[key.strip()] = val.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(values, source=path)


def config_from_dict(values: dict, source: str = "<dict>") -> ExperimentConfig:
    fields = {f.name for f in ExperimentConfig.__dataclass_fields__.values()}
    kwargs = {}
    for key, val in values.items():
        if key not in fields:
            raise ConfigError(f"{source}: unknown config key {key!r}")
        if val is None or (isinstance(val, str) and val == ""):
            continue
        try:
            if key in _BOOL_KEYS:
                kwargs[key] = str(val).lower() in ("1", "true", "yes")
            elif key in _INT_KEYS:
                kwargs[key] = int(val)
            elif key in _FLOAT_KEYS:
                kwargs[key] = float(val)
            elif key in _TUPLE_KEYS:
                if isinstance(val, str):
                    sep = ";" if key == "conditions" else ","
                    kwargs[key] = tuple(v.strip() for v in val.split(sep) if v.strip())
                else:
                    kwargs[key] = tuple(val)
            elif key == "weight_cols":
                if val == "all":
                    kwargs[key] = None
                elif isinstance(val, str):
                    kwargs[key] = tuple(int(v) for v in val.split(",") if v.strip())
                else:
                    kwargs[key] = tuple(int(v) for v in val)
            elif key == "bandwidth":
                kwargs[key] = val if val == "auto" else float(val)
            else:
                kwargs[key] = val
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{source}: bad value for {key!r}: {val!r}") from exc
    if "procedure" not in kwargs:
        raise ConfigError(f"{source}: missing required key 'procedure'")
    return ExperimentConfig(**kwargs).validate()


# -- condition predicates -------------------------------------------------------


def parse_condition(expr: str):
    """Parse ``x<col><op><value>`` terms joined by '&' into a mask function.

    Example: ``"x0<0&x2>0"`` selects rows with column 0 negative and column
    2 positive.
    """
    terms = []
    for term in expr.split("&"):
        term = term.strip()
        op = "<" if "<" in term else ">" if ">" in term else None
        if op is None or not term.startswith("x"):
            raise ConfigError(f"bad condition term {term!r} (expected e.g. 'x0<0')")
        col_part, _, val_part = term.partition(op)
        try:
            col = int(col_part[1:])
            val = float(val_part)
        except ValueError:
            raise ConfigError(f"bad condition term {term!r}") from None
        terms.append((col, op, val))

    def mask(x: np.ndarray) -> np.ndarray:
        out = np.ones(x.shape[0], dtype=bool)
        for col, op, val in terms:
            out &= (x[:, col] < val) if op == "<" else (x[:, col] > val)
        return out

    return mask


# -- replication bodies ----------------------------------------------------------


def _resolve_kernel(cfg: ExperimentConfig, n_labeled: int, d_w: int) -> KernelSpec:
    if cfg.bandwidth == "auto":
        h = default_bandwidth(n_labeled, d_w)
    else:
        h = float(cfg.bandwidth)
    return KernelSpec(cfg.kernel_family, h, d_w)


def _weight_cols(cfg: ExperimentConfig, scenario_default, d_total: int):
    if cfg.weight_cols is not None:
        return tuple(cfg.weight_cols)
    if scenario_default:
        return tuple(scenario_default)
    return tuple(range(d_total))


def _inject_outliers(y: np.ndarray, cfg: ExperimentConfig, rng: np.random.Generator):
    """Additive synthetic outliers for real-data runs; returns (y, flags)."""
    n = y.shape[0]
    flags = np.zeros(n, dtype=bool)
    count = int(round(cfg.inject_fraction * n))
    if count == 0:
        return y, flags
    flags[rng.permutation(n)[:count]] = True
    if cfg.inject_mode == "constant":
        magnitude = 1.0
    elif cfg.inject_mode == "sd":
        magnitude = float(np.std(y))
    elif cfg.inject_mode == "quantile":
        magnitude = float(np.quantile(y, cfg.inject_quantile))
    else:
        raise ConfigError(f"unknown inject_mode {cfg.inject_mode!r}")
    signs = np.where(rng.uniform(size=n) < 0.5, -1.0, 1.0)
    y = y + np.where(flags, cfg.inject_scale * magnitude * signs, 0.0)
    return y, flags


def _outlier_replication(cfg: ExperimentConfig, rng: np.random.Generator) -> dict:
    if cfg.scenario in ("a1", "b1"):
        gen = gen_a1 if cfg.scenario == "a1" else gen_b1
        clean = gen(cfg.n, False, rng)
        test = gen(cfg.m, True, rng)
        clean_x, clean_y = clean.covariates, clean.responses
        test_x, test_y, truth = test.covariates, test.responses, test.outlier
        w_cols = _weight_cols(cfg, clean.weight_cols, clean_x.shape[1])
        score_name = cfg.score or ("cqr" if cfg.scenario == "a1" else "oneclass")
    elif cfg.scenario is None:
        if cfg.csv2 is None:
            raise ConfigError("outlier-detect on CSV data needs csv (clean) and csv2 (test)")
        clean_ds = load_csv(cfg.csv, cfg.covariate_cols, cfg.response_cols)
        test_ds = load_csv(cfg.csv2, cfg.covariate_cols, cfg.response_cols)
        clean_x, clean_y = clean_ds.covariates, clean_ds.responses
        test_x, test_y = test_ds.covariates, test_ds.responses
        test_y, truth = _inject_outliers(test_y, cfg, rng)
        w_cols = _weight_cols(cfg, None, clean_x.shape[1])
        score_name = cfg.score or "cqr"
    else:
        raise ConfigError(f"scenario {cfg.scenario!r} is not an outlier-detection design")

    kernel = _resolve_kernel(cfg, clean_x.shape[0], len(w_cols))
    family = _score_family(score_name, cfg)
    if score_name == "oneclass":
        clean_y = None
        test_y_arg = None
    else:
        test_y_arg = test_y
    run = detect_outliers(
        clean_x, clean_y, test_x, test_y_arg, cfg.alpha, kernel, family, rng,
        weight_cols=w_cols,
    )
    fdp, power = fdp_and_power(run, truth)
    return {"fdp": fdp, "power": power, "n_rejected": len(run.final_set)}


def _screen_replication(cfg: ExperimentConfig, rng: np.random.Generator) -> dict:
    if cfg.scenario != "a2":
        raise ConfigError("label-screen currently runs on scenario a2")
    labeled = gen_a2(cfg.n, rng)
    test = gen_a2(cfg.m, rng)
    rules = [GreaterEqualRule(t) for t in A2_THRESHOLDS]
    dataset = MultiLabelDataset(labeled.covariates, labeled.responses, rules)
    w_cols = _weight_cols(cfg, labeled.weight_cols, labeled.covariates.shape[1])
    kernel = _resolve_kernel(cfg, cfg.n, len(w_cols))

    seed_state = rng.bit_generator.state
    result = screen(dataset, test.covariates, cfg.alpha, kernel, rng, weight_cols=w_cols)
    row = {"mfwer": fwer_metrics(result, test.responses, rules)}
    for expr in cfg.conditions:
        mask = parse_condition(expr)(test.covariates)
        row[f"cfwer[{expr}]"] = fwer_metrics(result, test.responses, rules, condition=mask)
    if cfg.compare_baseline:
        rng_b = np.random.default_rng()
        rng_b.bit_generator.state = seed_state
        base = screen(
            dataset, test.covariates, cfg.alpha, kernel, rng_b,
            weight_cols=w_cols, localized=False,
        )
        row["mfwer_thr"] = fwer_metrics(base, test.responses, rules)
        for expr in cfg.conditions:
            mask = parse_condition(expr)(test.covariates)
            row[f"cfwer_thr[{expr}]"] = fwer_metrics(base, test.responses, rules, condition=mask)
    return row


def _select_replication(cfg: ExperimentConfig, rng: np.random.Generator) -> dict:
    if cfg.scenario != "a2":
        raise ConfigError("select currently runs on scenario a2")
    s = cfg.rule_component
    labeled = gen_a2(cfg.n, rng)
    test = gen_a2(cfg.m, rng)
    rule = GreaterEqualRule(A2_THRESHOLDS[s])
    w_cols = _weight_cols(cfg, labeled.weight_cols, labeled.covariates.shape[1])
    kernel = _resolve_kernel(cfg, cfg.n, len(w_cols))

    seed_state = rng.bit_generator.state
    result = select(
        labeled.covariates, labeled.responses[:, s], test.covariates, cfg.alpha,
        rule, kernel, rng, weight_cols=w_cols,
    )
    truth_y = test.responses[:, s]
    row = {
        "pser": pser_metrics(result, truth_y, rule),
        "selected_frac": float(result.decisions.mean()),
    }
    for expr in cfg.conditions:
        mask = parse_condition(expr)(test.covariates)
        row[f"pser[{expr}]"] = pser_metrics(result, truth_y, rule, condition=mask)
    if cfg.compare_baseline:
        rng_b = np.random.default_rng()
        rng_b.bit_generator.state = seed_state
        base = select(
            labeled.covariates, labeled.responses[:, s], test.covariates, cfg.alpha,
            rule, kernel, rng_b, weight_cols=w_cols, localized=False,
        )
        row["pser_thr"] = pser_metrics(base, truth_y, rule)
        for expr in cfg.conditions:
            mask = parse_condition(expr)(test.covariates)
            row[f"pser_thr[{expr}]"] = pser_metrics(base, truth_y, rule, condition=mask)
    return row


def _twosample_replication(cfg: ExperimentConfig, rng: np.random.Generator) -> dict:
    if cfg.scenario in ("a3", "b3", "c3"):
        gen = {"a3": gen_a3, "b3": gen_b3, "c3": gen_c3}[cfg.scenario]
        s1, s2 = gen(cfg.n, cfg.m, cfg.hypothesis, rng)
        x1, y1, x2, y2 = s1.covariates, s1.responses, s2.covariates, s2.responses
    elif cfg.scenario is None:
        ds = load_csv(cfg.csv, cfg.covariate_cols, cfg.response_cols)
        if cfg.csv2 is not None:
            ds2 = load_csv(cfg.csv2, cfg.covariate_cols, cfg.response_cols)
            x1, y1, x2, y2 = ds.covariates, ds.responses, ds2.covariates, ds2.responses
        else:
            if cfg.split is None:
                raise ConfigError("two-sample-test on one CSV needs a split rule")
            (x1, y1), (x2, y2) = split_rules(ds.covariates, ds.responses, cfg.split, rng)
    else:
        raise ConfigError(f"scenario {cfg.scenario!r} is not a two-sample design")

    kernel = None
    if cfg.bandwidth != "auto" or cfg.kernel_family != "gaussian":
        d = x1.shape[1]
        h = default_bandwidth(x1.shape[0], d) if cfg.bandwidth == "auto" else float(cfg.bandwidth)
        kernel = KernelSpec(cfg.kernel_family, h, d)
    result = conditional_two_sample_test(x1, y1, x2, y2, cfg.alpha, kernel, rng)
    return {
        "reject": float(result.reject),
        "p_value": result.p_value,
        "t_hat": result.t_hat,
        "sigma_sq_hat": result.sigma_sq_hat,
    }


_BODIES = {
    "outlier-detect": _outlier_replication,
    "label-screen": _screen_replication,
    "select": _select_replication,
    "two-sample-test": _twosample_replication,
}


def run_replication(cfg: ExperimentConfig, replication: int) -> dict:
    """Run one replication on its own derived sub-seed."""
    if cfg.procedure not in _BODIES:
        raise ConfigError(f"procedure {cfg.procedure!r} is not runnable as an experiment")
    rng = np.random.default_rng(subseed(cfg.seed, replication))
    try:
        return _BODIES[cfg.procedure](cfg, rng)
    except (ConfigError, DataFormatError):
        raise
    except Exception as exc:
        raise RuntimeError(
            f"replication {replication} (sub-seed {subseed(cfg.seed, replication)}) failed: {exc}"
        ) from exc


# -- report ---------------------------------------------------------------------


@dataclass
class ExperimentReport:
    config: dict
    version: str
    master_seed: int
    rows: list
    aggregates: dict = field(default_factory=dict)


def aggregate_rows(rows: list) -> dict:
    out = {}
    for key in rows[0].keys():
        values = np.array([row[key] for row in rows], dtype=float)
        mean = float(values.mean())
        se = float(values.std(ddof=1) / np.sqrt(len(values))) if len(values) > 1 else 0.0
        out[key] = (mean, se)
    return out


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Run all replications (optionally across processes) and aggregate.

    Results are ordered by replication index, so the emitted report depends
    only on the config and master seed, not on the worker count.
    """
    cfg.validate()
    reps = range(cfg.replications)
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            rows = list(pool.map(run_replication, [cfg] * cfg.replications, reps))
    else:
        rows = [run_replication(cfg, r) for r in reps]
    return ExperimentReport(
        config=asdict(cfg),
        version=__version__,
        master_seed=cfg.seed,
        rows=rows,
        aggregates=aggregate_rows(rows),
    )
