"""Synthetic fleet generator: look-alike roughness data with known ground truth.

The real measurement campaign behind this problem is not distributed, so
experiments run on generated fleets. Each tool's slope and intercept are
drawn from population distributions, its noise scale from a half-Cauchy,
and observations from the configured noise family on an evenly spaced
sliding-distance grid. Ground truth is returned alongside the data so tests
can check recovery against known parameters.

Truth parameters are expressed in scaled-x coordinates (the same coordinates
the models are fit in), since the raw x range is arbitrary.
"""

from dataclasses import dataclass

import numpy as np

from .data import DataError, GroupedDataset, format_float
from .model import GroupParams, HyperParams

NOISE_FAMILIES = ("cauchy", "gaussian")

# Rejection bounds keeping generated fleets in a plausible roughness regime:
# heavy-tailed population draws are redrawn beyond this many scales, and
# noise scales are confined to [GAMMA_MIN, GAMMA_MAX] micrometers.
POPULATION_TRUNCATION_SCALES = 4.0
GAMMA_MIN, GAMMA_MAX = 0.01, 1.0


@dataclass(frozen=True)
class GeneratorConfig:
    n_tools: int = 7
    n_per_tool: int = 20
    mu_m: float = 0.6
    sigma_m: float = 0.15
    mu_c: float = 0.3
    sigma_c: float = 0.08
    gamma_pop: float = 0.04
    noise: str = "cauchy"
    x_range: tuple[float, float] = (0.0, 100.0)
    outlier_rate: float = 0.0
    outlier_offset: float = 10.0
    rng_seed: int = 0
    truncate: bool = True

    def __post_init__(self):
        if self.n_tools < 1 or self.n_per_tool < 1:
            raise DataError("n_tools and n_per_tool must be >= 1")
        if min(self.sigma_m, self.sigma_c, self.gamma_pop) <= 0:
            raise DataError("population scales must be positive")
        if self.noise not in NOISE_FAMILIES:
            raise DataError(f"noise must be one of {NOISE_FAMILIES}, got {self.noise!r}")
        if not 0.0 <= self.outlier_rate < 1.0:
            raise DataError("outlier_rate must be in [0, 1)")
        if not self.x_range[1] > self.x_range[0] >= 0:
            raise DataError("x_range must be increasing and nonnegative")

    @property
    def hyper_truth(self) -> HyperParams:
        return HyperParams(self.mu_m, self.sigma_m, self.mu_c, self.sigma_c, self.gamma_pop)


@dataclass(frozen=True)
class FleetTruth:
    """Ground-truth parameters behind a generated fleet."""

    labels: tuple[str, ...]
    groups: tuple[GroupParams, ...]
    hyper: HyperParams


def _truncated_cauchy(rng: np.random.Generator, loc: float, scale: float, truncate: bool) -> float:
    while True:
        draw = loc + scale * rng.standard_cauchy()
        if not truncate or abs(draw - loc) <= POPULATION_TRUNCATION_SCALES * scale:
            return float(draw)


def _half_cauchy(rng: np.random.Generator, scale: float, truncate: bool) -> float:
    while True:
        draw = scale * abs(rng.standard_cauchy())
        if truncate:
            if GAMMA_MIN <= draw <= GAMMA_MAX:
                return float(draw)
        elif draw > 0:
            return float(draw)


def generate_fleet(cfg: GeneratorConfig) -> tuple[GroupedDataset, FleetTruth]:
    """Draw a fleet of tools and their observations; deterministic per seed.

    Roughness values are redrawn while negative (folded as a last resort) so
    every generated file satisfies the y >= 0 ingestion invariant.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    labels = tuple(str(k + 1) for k in range(cfg.n_tools))
    x_raw = np.linspace(cfg.x_range[0], cfg.x_range[1], cfg.n_per_tool)
    span = cfg.x_range[1] - cfg.x_range[0]
    x_scaled = (x_raw - cfg.x_range[0]) / span

    groups = []
    ys = []
    for _ in labels:
        m = _truncated_cauchy(rng, cfg.mu_m, cfg.sigma_m, cfg.truncate)
        c = _truncated_cauchy(rng, cfg.mu_c, cfg.sigma_c, cfg.truncate)
        gamma = _half_cauchy(rng, cfg.gamma_pop, cfg.truncate)
        groups.append(GroupParams(m=m, c=c, gamma=gamma))
        loc = m * x_scaled + c
        y = np.empty(cfg.n_per_tool)
        for i in range(cfg.n_per_tool):
            val = -1.0
            for _ in range(100):
                noise = rng.standard_cauchy() if cfg.noise == "cauchy" else rng.standard_normal()
                val = loc[i] + gamma * noise
                if val >= 0:
                    break
            y[i] = abs(val)
        if cfg.outlier_rate > 0:
            mask = rng.random(cfg.n_per_tool) < cfg.outlier_rate
            y[mask] += cfg.outlier_offset
        ys.append(y)

    data = GroupedDataset.from_groups(labels, [x_raw.copy() for _ in labels], ys)
    truth = FleetTruth(labels=labels, groups=tuple(groups), hyper=cfg.hyper_truth)
    return data, truth


def inject_outliers(
    data: GroupedDataset, label: str, rate: float, offset: float = 10.0, rng_seed: int = 0
) -> GroupedDataset:
    """Shift a deterministic fraction of one tool's roughness values upward.

    Picks ``round(rate * N_k)`` observation indices with a seeded generator
    and adds ``offset`` to their y values, leaving every other group intact.
    """
    k = data.index(label)
    n = len(data.y[k])
    count = int(round(rate * n))
    if count < 1:
        raise DataError(f"rate {rate} selects no observations out of {n}")
    rng = np.random.default_rng(rng_seed)
    picks = rng.choice(n, size=count, replace=False)
    ys = [g.copy() for g in data.y]
    ys[k][picks] += offset
    return GroupedDataset._with_scale(
        data.labels, [g.copy() for g in data.x_raw], ys, data.x_offset, data.x_span
    )


def save_truth_csv(truth: FleetTruth, path) -> None:
    """Write per-tool truth rows plus one population row.

    Tool rows fill ``m,c,gamma`` and leave the population columns empty; the
    final ``population`` row does the opposite.
    """
    cols = "tool_id,m,c,gamma,mu_m,sigma_m,mu_c,sigma_c,gamma_pop"
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(cols + "\n")
        for lab, g in zip(truth.labels, truth.groups):
            fh.write(
                f"{lab},{format_float(g.m)},{format_float(g.c)},{format_float(g.gamma)},,,,,\n"
            )
        h = truth.hyper
        fh.write(
            "population,,,,"
            + ",".join(
                format_float(v) for v in (h.mu_m, h.sigma_m, h.mu_c, h.sigma_c, h.gamma_pop)
            )
            + "\n"
        )
