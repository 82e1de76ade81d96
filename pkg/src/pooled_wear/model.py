"""Robust per-tool linear models and their exact log-posteriors.

Two model variants over grouped (x, y) data:

* independent: each tool gets its own slope, intercept, and noise scale with
  fixed unit-scale priors, so tools share nothing.
* hierarchical: per-tool parameters are drawn from population distributions
  whose location/scale hyperparameters are themselves inferred, partially
  pooling sparse tools toward the fleet.

The likelihood is Cauchy, giving heavy-tailed robustness to roughness
outliers. All densities are expressed in unconstrained coordinates: every
positive scale parameter is log-transformed and the change-of-variables
Jacobian is included, so gradient-based samplers can move freely over R^d.
"""

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import GroupedDataset

_LOG_PI = math.log(math.pi)
_LOG_2 = math.log(2.0)

MODEL_KINDS = ("independent", "hierarchical")


class LayoutError(ValueError):
    """Parameter vector does not match the expected model layout."""


@dataclass(frozen=True)
class GroupParams:
    """Per-tool parameters: slope, intercept, and likelihood scale."""

    m: float
    c: float
    gamma: float

    def __post_init__(self):
        if not (np.isfinite(self.m) and np.isfinite(self.c) and np.isfinite(self.gamma)):
            raise ValueError("group parameters must be finite")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


@dataclass(frozen=True)
class HyperParams:
    """Population-level parameters shared across tools."""

    mu_m: float
    sigma_m: float
    mu_c: float
    sigma_c: float
    gamma_pop: float

    def __post_init__(self):
        for name in ("sigma_m", "sigma_c", "gamma_pop"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class HyperConfig:
    """Fixed hyperprior locations and scales (all default to 0 / 1)."""

    mu_m_loc: float = 0.0
    mu_m_scale: float = 1.0
    sigma_m_scale: float = 1.0
    mu_c_loc: float = 0.0
    mu_c_scale: float = 1.0
    sigma_c_scale: float = 1.0
    gamma_scale: float = 1.0

    def __post_init__(self):
        for name in ("mu_m_scale", "sigma_m_scale", "mu_c_scale", "sigma_c_scale", "gamma_scale"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


_HYPER_NAMES = ("mu_m", "sigma_m", "mu_c", "sigma_c", "gamma_pop")


@dataclass(frozen=True)
class ParameterLayout:
    """Maps named model parameters to positions in a flat unconstrained vector.

    Group blocks come first, ``(m, c, gamma)`` per tool in dataset order;
    the hierarchical model appends the five population parameters. Scale
    parameters are stored as logs.
    """

    kind: str
    labels: tuple[str, ...]

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise LayoutError(f"unknown model kind {self.kind!r}")
        if len(self.labels) < 1:
            raise LayoutError("layout needs at least one group")

    @property
    def n_groups(self) -> int:
        return len(self.labels)

    @property
    def size(self) -> int:
        base = 3 * self.n_groups
        return base + 5 if self.kind == "hierarchical" else base

    @property
    def names(self) -> tuple[str, ...]:
        out = []
        for lab in self.labels:
            out += [f"m[{lab}]", f"c[{lab}]", f"gamma[{lab}]"]
        if self.kind == "hierarchical":
            out += list(_HYPER_NAMES)
        return tuple(out)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise LayoutError(f"unknown parameter {name!r}") from None

    @property
    def log_scale_indices(self) -> np.ndarray:
        """Positions holding log-transformed positive parameters."""
        idx = list(range(2, 3 * self.n_groups, 3))
        if self.kind == "hierarchical":
            base = 3 * self.n_groups
            idx += [base + 1, base + 3, base + 4]
        return np.array(idx, dtype=int)


@dataclass
class ParameterVector:
    """Flat unconstrained parameter values plus their layout."""

    values: np.ndarray
    layout: ParameterLayout

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.layout.size,):
            raise LayoutError(
                f"expected {self.layout.size} values for {self.layout.kind} "
                f"model with {self.layout.n_groups} groups, got shape {self.values.shape}"
            )

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.layout.index(name)])


def layout_for(kind: str, data_or_labels) -> ParameterLayout:
    if isinstance(data_or_labels, GroupedDataset):
        labels = data_or_labels.labels
    else:
        labels = tuple(str(lab) for lab in data_or_labels)
    return ParameterLayout(kind=kind, labels=labels)


# ---------------------------------------------------------------------------
# Elementary densities


def cauchy_logpdf(x, loc, scale):
    """Log density of the Cauchy distribution; works elementwise on arrays."""
    scale = np.asarray(scale, dtype=float)
    if np.any(scale <= 0):
        raise ValueError("scale must be positive")
    u = (np.asarray(x, dtype=float) - loc) / scale
    out = -_LOG_PI - np.log(scale) - np.log1p(u * u)
    return float(out) if np.ndim(out) == 0 else out


def half_cauchy_logpdf(x, scale):
    """Log density of the half-Cauchy on [0, inf); -inf below the support."""
    scale = np.asarray(scale, dtype=float)
    if np.any(scale <= 0):
        raise ValueError("scale must be positive")
    x = np.asarray(x, dtype=float)
    u = x / scale
    out = np.where(x >= 0, _LOG_2 - _LOG_PI - np.log(scale) - np.log1p(u * u), -np.inf)
    return float(out) if np.ndim(out) == 0 else out


def location(params: GroupParams, x):
    """Mean line for one tool: slope times scaled distance plus intercept."""
    return params.m * np.asarray(x, dtype=float) + params.c


def log_likelihood(data: GroupedDataset, params: Sequence[GroupParams]) -> float:
    """Total Cauchy log-likelihood of the dataset under per-tool parameters."""
    params = list(params)
    if len(params) != data.n_groups:
        raise LayoutError(
            f"got {len(params)} parameter sets for {data.n_groups} groups"
        )
    total = 0.0
    for k, p in enumerate(params):
        if data.x[k].size:
            total += float(np.sum(cauchy_logpdf(data.y[k], location(p, data.x[k]), p.gamma)))
    return total


# ---------------------------------------------------------------------------
# Constraint transform


def constrain(theta: ParameterVector) -> tuple[list[GroupParams], HyperParams | None]:
    """Map an unconstrained vector to natural-scale parameters (exp on scales)."""
    v = theta.values
    k = theta.layout.n_groups
    groups = [
        GroupParams(m=v[3 * i], c=v[3 * i + 1], gamma=math.exp(v[3 * i + 2]))
        for i in range(k)
    ]
    if theta.layout.kind == "independent":
        return groups, None
    base = 3 * k
    hyper = HyperParams(
        mu_m=v[base],
        sigma_m=math.exp(v[base + 1]),
        mu_c=v[base + 2],
        sigma_c=math.exp(v[base + 3]),
        gamma_pop=math.exp(v[base + 4]),
    )
    return groups, hyper


def unconstrain(
    groups: Sequence[GroupParams],
    hyper: HyperParams | None,
    layout: ParameterLayout,
) -> ParameterVector:
    """Inverse of :func:`constrain`; log-transforms the positive parameters."""
    groups = list(groups)
    if len(groups) != layout.n_groups:
        raise LayoutError(f"got {len(groups)} groups for layout of {layout.n_groups}")
    if (hyper is None) != (layout.kind == "independent"):
        raise LayoutError("hyper parameters must be given exactly for the hierarchical layout")
    v = np.empty(layout.size)
    for i, p in enumerate(groups):
        v[3 * i : 3 * i + 3] = (p.m, p.c, math.log(p.gamma))
    if hyper is not None:
        base = 3 * layout.n_groups
        v[base :] = (
            hyper.mu_m,
            math.log(hyper.sigma_m),
            hyper.mu_c,
            math.log(hyper.sigma_c),
            math.log(hyper.gamma_pop),
        )
    return ParameterVector(v, layout)


# ---------------------------------------------------------------------------
# Posterior densities and gradients. The heavy lifting happens in
# PosteriorDensity, which pre-concatenates the grouped data so each
# evaluation is a handful of vectorized passes; the module-level functions
# are thin wrappers matching the documented API.

# Likelihood families: name -> (per-point log density given u=(y-loc)/gamma
# and log gamma, weight w = -d logpdf/du). The Gaussian entry exists for
# robustness ablations in tests; the shipped models are Cauchy.
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _cauchy_terms(u, log_gamma_per_obs):
    return -_LOG_PI - log_gamma_per_obs - np.log1p(u * u)


def _cauchy_weight(u):
    return 2.0 * u / (1.0 + u * u)


def _gaussian_terms(u, log_gamma_per_obs):
    return -_HALF_LOG_2PI - log_gamma_per_obs - 0.5 * u * u


def _gaussian_weight(u):
    return u


_FAMILIES = {
    "cauchy": (_cauchy_terms, _cauchy_weight),
    "gaussian": (_gaussian_terms, _gaussian_weight),
}


class PosteriorDensity:
    """Callable log-posterior (and gradient) for one model over one dataset.

    Instances are immutable once built and hold only plain arrays, so they
    are safe to share across concurrently running chains and to pickle into
    worker processes.
    """

    def __init__(
        self,
        kind: str,
        data: GroupedDataset,
        config: HyperConfig | None = None,
        likelihood: str = "cauchy",
    ):
        if kind not in MODEL_KINDS:
            raise LayoutError(f"unknown model kind {kind!r}")
        if likelihood not in _FAMILIES:
            raise ValueError(f"unknown likelihood family {likelihood!r}")
        self.kind = kind
        self.config = config or HyperConfig()
        self.layout = layout_for(kind, data)
        self.likelihood = likelihood
        k = data.n_groups
        self._k = k
        self._xs = np.concatenate([g for g in data.x]) if data.n_total else np.empty(0)
        self._ys = np.concatenate([g for g in data.y]) if data.n_total else np.empty(0)
        self._gidx = (
            np.concatenate([np.full(n, i, dtype=np.intp) for i, n in enumerate(data.counts)])
            if data.n_total
            else np.empty(0, dtype=np.intp)
        )
        self._n_obs = self._xs.size

    @property
    def size(self) -> int:
        return self.layout.size

    def _check(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape != (self.size,):
            raise LayoutError(
                f"expected vector of length {self.size} for {self.kind} model, got {values.shape}"
            )
        return values

    def value(self, values: np.ndarray) -> float:
        return self.value_and_grad(values)[0]

    def value_and_grad(self, values: np.ndarray) -> tuple[float, np.ndarray]:
        v = self._check(values)
        k = self._k
        kk = 3 * k
        m = v[0:kk:3]
        c = v[1:kk:3]
        z = v[2:kk:3]
        gamma = np.exp(z)
        cfg = self.config
        terms_fn, weight_fn = _FAMILIES[self.likelihood]

        grad = np.zeros(self.size)
        dm = np.zeros(k)
        dc = np.zeros(k)
        dz = np.zeros(k)
        lp = 0.0

        if self._n_obs:
            gidx = self._gidx
            gam_obs = gamma[gidx]
            u = (self._ys - (m[gidx] * self._xs + c[gidx])) / gam_obs
            lp += float(np.sum(terms_fn(u, z[gidx])))
            w = weight_fn(u)
            dloc = w / gam_obs
            dm += np.bincount(gidx, weights=dloc * self._xs, minlength=k)
            dc += np.bincount(gidx, weights=dloc, minlength=k)
            dz += np.bincount(gidx, weights=u * w - 1.0, minlength=k)

        if self.kind == "independent":
            # Fixed non-pooled priors sharing the hyperprior mass scales.
            vm = m / cfg.mu_m_scale
            vc = c / cfg.mu_c_scale
            wg = gamma / cfg.gamma_scale
            lp += float(
                np.sum(cauchy_logpdf(m, 0.0, cfg.mu_m_scale))
                + np.sum(cauchy_logpdf(c, 0.0, cfg.mu_c_scale))
                + np.sum(half_cauchy_logpdf(gamma, cfg.gamma_scale))
                + np.sum(z)  # Jacobian of gamma = exp(z)
            )
            dm += -2.0 * vm / (cfg.mu_m_scale * (1.0 + vm * vm))
            dc += -2.0 * vc / (cfg.mu_c_scale * (1.0 + vc * vc))
            dz += 1.0 - 2.0 * wg * wg / (1.0 + wg * wg)
            grad[0:kk:3] = dm
            grad[1:kk:3] = dc
            grad[2:kk:3] = dz
            return lp, grad

        mu_m, lam_m, mu_c, lam_c, z_pop = v[kk:]
        sigma_m = math.exp(lam_m)
        sigma_c = math.exp(lam_c)
        gamma_pop = math.exp(z_pop)

        # Population priors over the group parameters.
        vm = (m - mu_m) / sigma_m
        vc = (c - mu_c) / sigma_c
        wg = gamma / gamma_pop
        lp += float(
            np.sum(cauchy_logpdf(m, mu_m, sigma_m))
            + np.sum(cauchy_logpdf(c, mu_c, sigma_c))
            + np.sum(half_cauchy_logpdf(gamma, gamma_pop))
            + np.sum(z)
        )
        tm = 2.0 * vm / (1.0 + vm * vm)
        tc = 2.0 * vc / (1.0 + vc * vc)
        tg = 2.0 * wg * wg / (1.0 + wg * wg)
        dm += -tm / sigma_m
        dc += -tc / sigma_c
        dz += 1.0 - tg

        # Hyperpriors plus Jacobians for the three log-scale hypers.
        am = (mu_m - cfg.mu_m_loc) / cfg.mu_m_scale
        ac = (mu_c - cfg.mu_c_loc) / cfg.mu_c_scale
        bm = sigma_m / cfg.sigma_m_scale
        bc = sigma_c / cfg.sigma_c_scale
        bg = gamma_pop / cfg.gamma_scale
        lp += (
            cauchy_logpdf(mu_m, cfg.mu_m_loc, cfg.mu_m_scale)
            + cauchy_logpdf(mu_c, cfg.mu_c_loc, cfg.mu_c_scale)
            + half_cauchy_logpdf(sigma_m, cfg.sigma_m_scale)
            + half_cauchy_logpdf(sigma_c, cfg.sigma_c_scale)
            + half_cauchy_logpdf(gamma_pop, cfg.gamma_scale)
            + lam_m
            + lam_c
            + z_pop
        )
        grad[0:kk:3] = dm
        grad[1:kk:3] = dc
        grad[2:kk:3] = dz
        grad[kk + 0] = float(np.sum(tm)) / sigma_m - 2.0 * am / (cfg.mu_m_scale * (1.0 + am * am))
        grad[kk + 1] = float(np.sum(tm * vm - 1.0)) + 1.0 - 2.0 * bm * bm / (1.0 + bm * bm)
        grad[kk + 2] = float(np.sum(tc)) / sigma_c - 2.0 * ac / (cfg.mu_c_scale * (1.0 + ac * ac))
        grad[kk + 3] = float(np.sum(tc * vc - 1.0)) + 1.0 - 2.0 * bc * bc / (1.0 + bc * bc)
        grad[kk + 4] = float(np.sum(tg - 1.0)) + 1.0 - 2.0 * bg * bg / (1.0 + bg * bg)
        return lp, grad


def _density_for(theta: ParameterVector, data: GroupedDataset, config: HyperConfig | None):
    density = PosteriorDensity(theta.layout.kind, data, config)
    if density.layout != theta.layout:
        raise LayoutError(
            f"parameter layout {theta.layout.labels} does not match dataset groups {data.labels}"
        )
    return density


def log_posterior_independent(
    theta: ParameterVector, data: GroupedDataset, config: HyperConfig | None = None
) -> float:
    """Unnormalized log-posterior of the no-pooling model in unconstrained coordinates."""
    if theta.layout.kind != "independent":
        raise LayoutError(f"expected independent layout, got {theta.layout.kind!r}")
    return _density_for(theta, data, config).value(theta.values)


def log_posterior_hierarchical(
    theta: ParameterVector, data: GroupedDataset, config: HyperConfig | None = None
) -> float:
    """Unnormalized log-posterior of the partial-pooling model in unconstrained coordinates."""
    if theta.layout.kind != "hierarchical":
        raise LayoutError(f"expected hierarchical layout, got {theta.layout.kind!r}")
    return _density_for(theta, data, config).value(theta.values)


def grad_log_posterior(
    theta: ParameterVector, data: GroupedDataset, config: HyperConfig | None = None
) -> np.ndarray:
    """Exact analytic gradient of the selected model's log-posterior."""
    return _density_for(theta, data, config).value_and_grad(theta.values)[1]
