"""Synthetic monthly macro panels with known regime-dependent effects.

Monthly inflation follows

    pi_t = c + phi(pi_{t-1}) * pi_{t-1} + phi2 * pi_{t-2}
           + passthrough * m(RIN_t) * TC_t
           + gap_slope * [brecha_t + (gap_amp - 1) * max(brecha_t - gap_thr, 0)]
           + wage_coef * [w_t + (wage_amp - 1) * max(w_t - wage_thr, 0)]
           + activity_coef * A_t + usa_coef * usa_t + noise * e_t

where phi(x) = inertia_high if x > inertia_threshold else inertia_low,
m(r) = passthrough_multiplier if r < reserves_threshold else 1, A_t is the
3-month mean of monthly activity growth and e_t is standard normal. A
threshold set to None removes its kink.

Regressors:

    brecha_t = gap_max * Phi(z_t),  z_t = rho * z_{t-1} + sqrt(1 - rho^2) * u_t
    RIN_t    = max(0.98 * RIN_{t-1} + 0.02 * 4000 + 500 * u_t, 200)
    TC_t     = 0.5 + Gamma(1.5, 1.5) + jump_t,  jump_t ~ U(10, 30) w.p. 0.03
    w_t      = wage_indexation * pi_{t-1} + 0.8 + 1.5 * u_t

with Phi the standard normal CDF (so the gap is uniform on [0, gap_max] and
autocorrelated through rho = gap_persistence). Rate and money growth load
0.9 and 0.7 on pi_{t-1}; activity is a level index compounding an AR(1)
growth rate; CCL moves with TC and the change in the gap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import PipelineConfig, SeriesFrame, TransformSpec

COLUMNS = ("inflacion", "salarios", "actividad", "i_nom_TEM", "base_monetaria", "M2",
           "trigo", "petroleo", "infla_USA", "TC_oficial", "CCL", "brecha", "RIN")

DEFAULT_LAGS = {
    "inflacion": (1, 2),
    "i_nom_TEM": (0,),
    "M2": (0,),
    "salarios": (0,),
    "CCL": (0,),
    "TC_oficial": (0,),
    "A_ECO_MA": (0,),
    "RIN": (0,),
    "brecha": (0,),
    "infla_USA": (0,),
    "petroleo": (0,),
    "trigo": (0,),
}

DEFAULT_TRANSFORMS = (TransformSpec("actividad", "pct_change_monthly_ma3", "A_ECO_MA"),)


def default_pipeline(mode: str = "nowcast") -> PipelineConfig:
    cfg = PipelineConfig("inflacion", DEFAULT_LAGS, "nowcast", DEFAULT_TRANSFORMS)
    return cfg if mode == "nowcast" else cfg.with_mode(mode)


@dataclass(frozen=True)
class SimConfig:
    months: int = 480
    seed: int = 0
    start: str = "1985-01"
    intercept: float = -1.5
    inertia_low: float = 0.4
    inertia_high: float = 0.55
    inertia_threshold: float | None = 5.0
    inertia_lag2: float = 0.1
    passthrough: float = 0.15
    passthrough_multiplier: float = 3.0
    reserves_threshold: float | None = 2000.0
    gap_slope: float = 0.04
    gap_threshold: float | None = 60.0
    gap_amplification: float = 2.0
    wage_coef: float = 0.15
    wage_threshold: float | None = 4.5
    wage_amplification: float = 2.0
    activity_coef: float = 0.1
    usa_coef: float = 0.3
    noise_scale: float = 0.4
    gap_persistence: float = 0.0
    gap_max: float = 90.0
    wage_indexation: float = 0.5

    def __post_init__(self):
        if self.months < 120:
            raise ValueError("months must be >= 120")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")
        if not 0.0 <= self.gap_persistence < 1.0:
            raise ValueError("gap_persistence must lie in [0, 1)")
        if self.gap_max <= 0:
            raise ValueError("gap_max must be > 0")


BURN_IN = 60


def _ar1(rng, n, rho, mean, sd, lo=-np.inf, hi=np.inf):
    x = np.empty(n)
    x[0] = mean
    for t in range(1, n):
        x[t] = min(max(rho * x[t - 1] + (1 - rho) * mean + sd * rng.standard_normal(), lo), hi)
    return x


def _normal_cdf(z):
    return 0.5 * (1.0 + np.vectorize(math.erf)(np.asarray(z) / math.sqrt(2.0)))


def generators(cfg: SimConfig) -> dict:
    """Regressors that do not depend on inflation (burn-in included)."""
    rng = np.random.default_rng(cfg.seed)
    n = cfg.months + BURN_IN
    z = _ar1(rng, n, cfg.gap_persistence, 0.0, np.sqrt(1.0 - cfg.gap_persistence ** 2))
    brecha = cfg.gap_max * _normal_cdf(z)
    rin = _ar1(rng, n, 0.98, 4000.0, 500.0, lo=200.0)
    tc = 0.5 + rng.gamma(1.5, 1.5, n) + np.where(rng.random(n) < 0.03,
                                                  rng.uniform(10, 30, n), 0.0)
    growth = _ar1(rng, n, 0.5, 0.2, 0.8)
    return {
        "brecha": brecha,
        "RIN": rin,
        "TC_oficial": tc,
        "growth": growth,
        "infla_USA": 0.25 + 0.2 * rng.standard_normal(n),
        "petroleo": 6.0 * rng.standard_normal(n),
        "trigo": 5.0 * rng.standard_normal(n),
        "shock": rng.standard_normal(n),
        "wage_noise": rng.standard_normal(n),
        "rate_noise": rng.standard_normal(n),
        "m2_noise": rng.standard_normal(n),
        "base_noise": rng.standard_normal(n),
    }


def _kink(x, threshold, amplification):
    if threshold is None:
        return x
    return x + (amplification - 1.0) * np.maximum(x - threshold, 0.0)


def generate_panel(cfg: SimConfig = SimConfig()) -> SeriesFrame:
    g = generators(cfg)
    n = cfg.months + BURN_IN
    pi = np.zeros(n)
    wages = np.zeros(n)
    act_ma = np.zeros(n)
    act_ma[2:] = (g["growth"][2:] + g["growth"][1:-1] + g["growth"][:-2]) / 3.0
    mult = np.ones(n)
    if cfg.reserves_threshold is not None:
        mult = np.where(g["RIN"] < cfg.reserves_threshold, cfg.passthrough_multiplier, 1.0)
    gap = cfg.gap_slope * _kink(g["brecha"], cfg.gap_threshold, cfg.gap_amplification)
    fx = cfg.passthrough * mult * g["TC_oficial"]
    pi[:2] = 1.0
    wages[:2] = 1.0
    for t in range(2, n):
        prev = pi[t - 1]
        wages[t] = cfg.wage_indexation * prev + 0.8 + 1.5 * g["wage_noise"][t]
        phi = cfg.inertia_low
        if cfg.inertia_threshold is not None and prev > cfg.inertia_threshold:
            phi = cfg.inertia_high
        wage = cfg.wage_coef * _kink(wages[t], cfg.wage_threshold, cfg.wage_amplification)
        pi[t] = (cfg.intercept + phi * prev + cfg.inertia_lag2 * pi[t - 2] + fx[t] + gap[t]
                 + wage + cfg.activity_coef * act_ma[t] + cfg.usa_coef * g["infla_USA"][t]
                 + cfg.noise_scale * g["shock"][t])
    lag_pi = np.r_[pi[0], pi[:-1]]
    rate = np.maximum(0.9 * lag_pi + 0.5 + 1.5 * g["rate_noise"], 0.0)
    m2 = 0.7 * lag_pi + 1.0 + 2.0 * g["m2_noise"]
    base = 0.7 * lag_pi + 1.0 + 3.0 * g["base_noise"]
    level = 100.0 * np.cumprod(1.0 + g["growth"] / 100.0)
    b = g["brecha"]
    b_prev = np.r_[b[0], b[:-1]]
    ccl = 100.0 * ((1 + g["TC_oficial"] / 100) * (1 + b / 100) / (1 + b_prev / 100) - 1)

    keep = slice(BURN_IN, n)
    cols = {"inflacion": pi, "salarios": wages, "actividad": level, "i_nom_TEM": rate,
            "base_monetaria": base, "M2": m2, "trigo": g["trigo"], "petroleo": g["petroleo"],
            "infla_USA": g["infla_USA"], "TC_oficial": g["TC_oficial"], "CCL": ccl,
            "brecha": b, "RIN": g["RIN"]}
    start = np.datetime64(cfg.start, "M")
    months = start + np.arange(cfg.months)
    return SeriesFrame(months, {c: cols[c][keep] for c in COLUMNS})
