"""Pivots, confidence intervals, and the spike-count estimator.

Two interval constructions are implemented, each in a corrected and a
Gaussian-quantile flavor:

* scaled form (JB family): C = [(E_q_lo s/sqrt(n) + 1) rho, (E_q_hi s/sqrt(n) + 1) rho]
  around a plug-in center, with s the rho-relative scale;
* root-solving form (YJ family): endpoints solve
  rho(l) + n^{-1/2} tilde_sigma(l) E_q(l) = l_hat_obs in l.

Corrected flavors (JB_E, YJ_E) take E_q from the first-order quantile
expansion with coefficients estimated by a single size-m bootstrap; the
baselines (JB_Gauss, YJ_Gauss) substitute the normal quantile z_q while
keeping the same plug-in scale.

The spike count r_hat counts top sample eigenvalues falling inside their own
interval C_k, scanning k = 1..r0.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import ndtr, ndtri

from .edgeworth import (
    EdgeworthCoefficients,
    SpikeContext,
    coefficients,
    cornish_fisher_quantile,
    edgeworth_cdf,
    r_statistic,
)
from .linalg import FloatArray, sample_covariance, sym_eigen, validate_data
from .model import DIAGONAL_VSUMS, MomentTriple, VSums
from .moments import MomentEstimates, estimate_all

CI_METHODS = ("JB_E", "YJ_E", "JB_Gauss", "YJ_Gauss")

# Bisection controls for the root-solving interval.
BISECT_TOL = 1e-8
BISECT_MAX_ITER = 200
BRACKET_EPS = 1e-6
GRID_POINTS = 512

# Finite-sample moment estimates are projected onto the population-valid
# region before entering cumulant formulas (kappa2 must stay positive).
BETA_Z_FLOOR = -2.0 + 1e-6
DELTA_FLOOR = 1.0


@dataclass(frozen=True, slots=True)
class ConfidenceInterval:
    """One interval for one target spike index (0-based)."""

    lo: float
    hi: float
    level: float
    method: str
    target: int

    def __post_init__(self) -> None:
        if self.method not in CI_METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {CI_METHODS}")
        if not 0.0 < self.level < 1.0:
            raise ValueError(f"level must lie in (0, 1), got {self.level}")
        if self.lo > self.hi:
            raise ValueError(f"interval endpoints out of order: [{self.lo}, {self.hi}]")
        if self.target < 0:
            raise ValueError(f"target index must be >= 0, got {self.target}")

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi


@dataclass(frozen=True, slots=True)
class SpikeCountEstimate:
    """Spike-count decision with its supporting intervals and plug-ins."""

    r_hat: int
    intervals: tuple[ConfidenceInterval, ...]
    plugin_spikes: tuple[float, ...]
    coefficients: tuple[EdgeworthCoefficients, ...]
    moments: MomentEstimates | None

    def __post_init__(self) -> None:
        if self.r_hat > len(self.intervals):
            raise ValueError(
                f"r_hat = {self.r_hat} exceeds the {len(self.intervals)} intervals tested"
            )


def phase_threshold(gamma_n: float, n: int) -> float:
    """Detection edge (1 + sqrt(g))^2 + n^{-1/3} sqrt(g) separating spikes from bulk."""
    if gamma_n < 0.0:
        raise ValueError(f"gamma_n must be >= 0, got {gamma_n}")
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    root = np.sqrt(gamma_n)
    return float((1.0 + root) ** 2 + n ** (-1.0 / 3.0) * root)


def invert_psi(l_hat: float, gamma_n: float, tol: float = 1e-8) -> float:
    """Invert the eigenvalue mapping l -> l + g l/(l-1) above the detection edge.

    Returns the larger root of l^2 - (l_hat + 1 - g) l + l_hat = 0, which is
    the population spike whose detached sample eigenvalue sits at l_hat.
    """
    if gamma_n < 0.0:
        raise ValueError(f"gamma_n must be >= 0, got {gamma_n}")
    edge = (1.0 + np.sqrt(gamma_n)) ** 2
    if l_hat <= edge + tol:
        raise ValueError(
            f"cannot invert below the detection edge: l_hat = {l_hat:.6g} <= {edge:.6g} + tol"
        )
    b = l_hat + 1.0 - gamma_n
    disc = b * b - 4.0 * l_hat
    # Above the edge the discriminant is positive; clip roundoff dust.
    return float((b + np.sqrt(max(disc, 0.0))) / 2.0)


def z_pivot(l_hat: float, coeffs: EdgeworthCoefficients, n: int) -> float:
    """Normal survival pivot u = 1 - Phi(R) at the observed eigenvalue."""
    return float(1.0 - ndtr(r_statistic(l_hat, coeffs, n)))


def e_pivot(l_hat: float, coeffs: EdgeworthCoefficients, n: int) -> float:
    """Corrected survival pivot u = 1 - F_E(R); closer to uniform under the model."""
    return float(1.0 - edgeworth_cdf(r_statistic(l_hat, coeffs, n), coeffs, n))


def ci_scaled(
    rho_plug: float,
    tilde_sigma_plug: float,
    coeffs: EdgeworthCoefficients | None,
    n: int,
    level: float = 0.90,
    target: int = 0,
) -> ConfidenceInterval:
    """Multiplicative interval around a plug-in center (JB family).

    tilde_sigma_plug is the rho-relative scale, i.e. tilde_sigma(l)/rho(l) at
    the plug-in spike. coeffs = None selects the Gaussian baseline (normal
    quantiles, method JB_Gauss); otherwise corrected quantiles are used.
    """
    if rho_plug <= 0.0:
        raise ValueError(f"plug-in center must be positive, got {rho_plug}")
    if tilde_sigma_plug < 0.0:
        raise ValueError(f"relative scale must be >= 0, got {tilde_sigma_plug}")
    q_lo = (1.0 - level) / 2.0
    q_hi = 1.0 - q_lo
    if coeffs is None:
        e_lo, e_hi = float(ndtri(q_lo)), float(ndtri(q_hi))
        method = "JB_Gauss"
    else:
        e_lo = cornish_fisher_quantile(q_lo, coeffs, n)
        e_hi = cornish_fisher_quantile(q_hi, coeffs, n)
        method = "JB_E"
    root_n = np.sqrt(n)
    a = (e_lo * tilde_sigma_plug / root_n + 1.0) * rho_plug
    b = (e_hi * tilde_sigma_plug / root_n + 1.0) * rho_plug
    lo, hi = (a, b) if a <= b else (b, a)
    return ConfidenceInterval(lo=lo, hi=hi, level=level, method=method, target=target)


def _root_equation(
    l: float,
    l_hat_obs: float,
    n: int,
    q: float,
    coeffs_fn: Callable[[float], EdgeworthCoefficients],
    corrected: bool,
) -> float:
    c = coeffs_fn(l)
    if c.tilde_sigma_sq < 0.0:
        return np.nan
    quantile = cornish_fisher_quantile(q, c, n) if corrected else float(ndtri(q))
    return c.rho + np.sqrt(c.tilde_sigma_sq) * quantile / np.sqrt(n) - l_hat_obs


def _bisect(f: Callable[[float], float], a: float, b: float, fa: float) -> float:
    for _ in range(BISECT_MAX_ITER):
        mid = 0.5 * (a + b)
        try:
            fm = f(mid)
        except (ValueError, FloatingPointError):
            fm = np.nan
        if not np.isfinite(fm):
            # Singular point inside the bracket; step deterministically upward.
            a = mid
            continue
        if fm == 0.0 or (b - a) < BISECT_TOL:
            return mid
        if fa * fm < 0.0:
            b = mid
        else:
            a, fa = mid, fm
    return 0.5 * (a + b)


def _scan_outward(
    f: Callable[[float], float],
    grid: FloatArray,
    anchor: int,
    upward: bool,
) -> float | None:
    """First sign change walking outward from grid index anchor, bisected down.

    The trial-coefficient map can have poles away from the plug-in branch
    (cross-spike terms diverge where a trial spike meets a fixed one), each
    surrounded by spurious crossings. Walking outward from the plug-in value
    reaches the branch root before any pole artifact.
    """
    cache: dict[int, float] = {}

    def val(i: int) -> float:
        if i not in cache:
            try:
                v = f(float(grid[i]))
            except (ValueError, FloatingPointError):
                v = np.nan
            cache[i] = float(v) if np.isfinite(v) else np.nan
        return cache[i]

    if upward:
        pairs = ((i, i + 1) for i in range(anchor, grid.size - 1))
    else:
        pairs = ((i - 1, i) for i in range(anchor, 0, -1))
    for a_i, b_i in pairs:
        fa, fb = val(a_i), val(b_i)
        if np.isnan(fa) or np.isnan(fb):
            continue
        if fa == 0.0:
            return float(grid[a_i])
        if fb == 0.0:
            return float(grid[b_i])
        if fa * fb < 0.0:
            return _bisect(f, float(grid[a_i]), float(grid[b_i]), fa)
    return None


def ci_root_solving(
    l_hat_obs: float,
    gamma_n: float,
    n: int,
    coeffs_fn: Callable[[float], EdgeworthCoefficients],
    level: float = 0.90,
    corrected: bool = True,
    target: int = 0,
) -> ConfidenceInterval:
    """Interval whose endpoints solve rho(l) + n^{-1/2} s(l) E_q(l) = l_hat_obs.

    coeffs_fn maps a trial spike l to its coefficient bundle (recomputed at
    every evaluation). q = (1-level)/2 yields the upper endpoint and its
    mirror the lower one. corrected = False substitutes normal quantiles
    (method YJ_Gauss) while keeping the same scale. Roots are bracketed by a
    geometric grid scan on (1 + sqrt(g) + eps, 100 l_hat_obs] walking outward
    from the plug-in spike, then refined by bisection; an endpoint with no
    sign change on its side degenerates to the plug-in point with a warning.
    """
    edge = (1.0 + np.sqrt(gamma_n)) ** 2
    if l_hat_obs <= edge:
        raise ValueError(
            f"observed eigenvalue {l_hat_obs:.6g} is below the detection edge {edge:.6g}"
        )
    method = "YJ_E" if corrected else "YJ_Gauss"
    q_lo = (1.0 - level) / 2.0
    q_hi = 1.0 - q_lo
    lo_bracket = 1.0 + np.sqrt(gamma_n) + BRACKET_EPS
    hi_bracket = 100.0 * l_hat_obs
    grid = np.geomspace(lo_bracket, hi_bracket, GRID_POINTS)
    plug = invert_psi(l_hat_obs, gamma_n, tol=0.0)
    anchor = int(np.clip(np.searchsorted(grid, plug), 0, grid.size - 1))

    def endpoint(q: float) -> float:
        def f(l: float) -> float:
            return _root_equation(l, l_hat_obs, n, q, coeffs_fn, corrected)

        try:
            f_plug = f(plug)
        except (ValueError, FloatingPointError):
            f_plug = np.nan
        if np.isnan(f_plug):
            # Sign at the plug unavailable; infer the side from the quantile.
            upward = q < 0.5
        elif f_plug == 0.0:
            return plug
        else:
            # The map increases in l on the plug-in branch, so a positive
            # residual at the plug puts the root below it.
            upward = f_plug < 0.0
        root = _scan_outward(f, grid, anchor, upward)
        if root is None:
            warnings.warn(
                f"no root for quantile {q:.3g}; degenerating to the plug-in spike",
                RuntimeWarning,
                stacklevel=3,
            )
            return plug
        return root

    # Larger quantile pushes the solved spike downward: q_hi -> lo endpoint.
    lo = endpoint(q_hi)
    hi = endpoint(q_lo)
    if lo > hi:
        lo, hi = hi, lo
    return ConfidenceInterval(lo=lo, hi=hi, level=level, method=method, target=target)


def clamped_triple(est: MomentEstimates) -> MomentTriple:
    """Project raw estimates onto the region where the cumulant formulas are valid."""
    return MomentTriple(
        beta_z=max(est.beta_z_hat, BETA_Z_FLOOR),
        gamma_sq=max(est.gamma_sq_hat, 0.0),
        delta=max(est.delta_hat, DELTA_FLOOR),
    )


@dataclass(frozen=True, slots=True)
class _BootstrapFit:
    """Shared per-sample bootstrap state reused across interval methods."""

    plugin_by_k: dict[int, float]
    coeffs_by_k: dict[int, EdgeworthCoefficients]
    triple: MomentTriple
    estimates: MomentEstimates
    order: tuple[int, ...]  # candidate indices retained, ascending


def _bootstrap_fit(
    X: FloatArray,
    r0: int,
    m: int,
    rng: np.random.Generator,
    vsums: VSums,
    b_folds: int = 1,
) -> _BootstrapFit:
    n, p = X.shape
    gamma_n = p / n
    gamma_m = p / m
    theta_m = phase_threshold(gamma_m, m)

    eig_sum = np.zeros(r0)
    rows = np.arange(n)
    for _ in range(b_folds):
        rows = rng.integers(0, n, size=m)
        eig_sum += sym_eigen(sample_covariance(X[rows])).eigenvalues[:r0]
    boot_eigs = eig_sum / b_folds

    # Duplicated resample rows violate the independence the quadratic-form
    # estimators assume and drag beta_z_hat toward zero, so the moment triple
    # is estimated on the original rows. The resample supplies only the
    # plug-in eigenvalues.
    try:
        est = estimate_all(X)
    except ValueError:
        est = estimate_all(X[rows])  # square X (p == n) has no direct route
    triple = clamped_triple(est)

    # Plug-ins: invert at the bootstrap ratio, then keep those inside the
    # coefficient domain at the original ratio. Screening is monotone in the
    # eigenvalue, so the retained set is a prefix of 1..r0.
    plugin_by_k: dict[int, float] = {}
    prev = np.inf
    for k in range(r0):
        if boot_eigs[k] <= theta_m:
            break
        plug = invert_psi(float(boot_eigs[k]), gamma_m)
        if (plug - 1.0) ** 2 <= gamma_n + BRACKET_EPS or plug <= 1.0 + np.sqrt(gamma_n):
            break
        if prev - plug <= BRACKET_EPS * max(1.0, plug):
            break  # coincident plug-ins would make the cross term singular
        plugin_by_k[k] = plug
        prev = plug

    order = tuple(sorted(plugin_by_k))
    all_spikes = tuple(plugin_by_k[k] for k in order)
    coeffs_by_k: dict[int, EdgeworthCoefficients] = {}
    for idx, k in enumerate(order):
        try:
            ctx = SpikeContext(
                l_k=all_spikes[idx],
                all_spikes=all_spikes,
                k=idx,
                gamma_n=gamma_n,
                n=n,
            )
            coeffs_by_k[k] = coefficients(ctx, triple, vsums)
        except ValueError:
            continue
    return _BootstrapFit(
        plugin_by_k=plugin_by_k,
        coeffs_by_k=coeffs_by_k,
        triple=triple,
        estimates=est,
        order=order,
    )


def bootstrap_coefficients(
    X: FloatArray,
    r0: int,
    m: int = 1000,
    rng: np.random.Generator | None = None,
    vsums: VSums = DIAGONAL_VSUMS,
    b_folds: int = 1,
) -> tuple[tuple[float, ...], tuple[EdgeworthCoefficients, ...]]:
    """Plug-in spikes and coefficient bundles from one size-m row resample.

    Rows of X are resampled with replacement to a sample of size m; the top
    r0 eigenvalues above the bootstrap detection edge are inverted to plug-in
    spikes, and one bundle per retained spike is assembled from the moment
    triple (cross terms over the whole retained set). The triple is estimated
    on the original rows: a resample with duplicated rows feeds the
    quadratic-form estimators dependent data and shears all three moments.
    Returns empty tuples when no bootstrap eigenvalue separates.
    """
    X = validate_data(X)
    if r0 < 1:
        raise ValueError(f"r0 must be >= 1, got {r0}")
    if X.shape[1] < r0 + 1:
        raise ValueError(f"need at least r0 + 1 = {r0 + 1} columns, got {X.shape[1]}")
    if rng is None:
        rng = np.random.default_rng()
    fit = _bootstrap_fit(X, r0, m, rng, vsums, b_folds)
    plugs = tuple(fit.plugin_by_k[k] for k in fit.order)
    coeffs = tuple(fit.coeffs_by_k[k] for k in fit.order if k in fit.coeffs_by_k)
    return plugs, coeffs


def _yj_coeffs_fn(
    k: int,
    fit: _BootstrapFit,
    gamma_n: float,
    n: int,
    vsums: VSums,
) -> Callable[[float], EdgeworthCoefficients]:
    """Trial-spike coefficient map for the root-solving interval at index k.

    The other retained plug-ins stay fixed while the k-th slot follows the
    trial value, so the cross-spike term tracks the full configuration.
    """
    others = tuple(v for kk, v in fit.plugin_by_k.items() if kk != k)
    triple = fit.triple

    def fn(l: float) -> EdgeworthCoefficients:
        ctx = SpikeContext(
            l_k=l,
            all_spikes=(l, *others),
            k=0,
            gamma_n=gamma_n,
            n=n,
        )
        return coefficients(ctx, triple, vsums)

    return fn


def _count_for_method(
    method: str,
    eigs: FloatArray,
    fit: _BootstrapFit,
    r0_eff: int,
    gamma_n: float,
    n: int,
    level: float,
    vsums: VSums,
) -> SpikeCountEstimate:
    theta_n = phase_threshold(gamma_n, n)
    intervals: list[ConfidenceInterval] = []
    r_hat = 0
    for k in range(r0_eff):
        l_hat_k = float(eigs[k])
        if l_hat_k <= theta_n:
            continue
        ci: ConfidenceInterval | None = None
        if method in ("JB_E", "JB_Gauss"):
            c = fit.coeffs_by_k.get(k)
            if c is not None:
                # Center at the observed eigenvalue (the consistent estimate
                # of its own centering); width and quantiles come from the
                # plug-in coefficients.
                rel = float(np.sqrt(c.tilde_sigma_sq) / c.rho)
                ci = ci_scaled(
                    l_hat_k,
                    rel,
                    c if method == "JB_E" else None,
                    n,
                    level=level,
                    target=k,
                )
        else:
            fn = _yj_coeffs_fn(k, fit, gamma_n, n, vsums)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                ci = ci_root_solving(
                    l_hat_k,
                    gamma_n,
                    n,
                    fn,
                    level=level,
                    corrected=(method == "YJ_E"),
                    target=k,
                )
        if ci is not None:
            intervals.append(ci)
            if ci.contains(l_hat_k):
                r_hat += 1
    return SpikeCountEstimate(
        r_hat=r_hat,
        intervals=tuple(intervals),
        plugin_spikes=tuple(fit.plugin_by_k[k] for k in fit.order),
        coefficients=tuple(fit.coeffs_by_k[k] for k in fit.order if k in fit.coeffs_by_k),
        moments=fit.estimates,
    )


def estimate_spike_count_multi(
    X: FloatArray,
    methods: tuple[str, ...],
    r0: int = 5,
    level: float = 0.90,
    rng: np.random.Generator | None = None,
    m: int = 1000,
    vsums: VSums = DIAGONAL_VSUMS,
    b_folds: int = 1,
) -> dict[str, SpikeCountEstimate]:
    """Run several interval methods against one shared bootstrap fit.

    All methods see identical plug-ins and moment estimates, so differences
    in r_hat reflect the interval construction alone. One bootstrap per call
    also keeps replicated comparisons affordable.
    """
    for method in methods:
        if method not in CI_METHODS:
            raise ValueError(f"unknown method {method!r}; expected one of {CI_METHODS}")
    X = validate_data(X)
    n, p = X.shape
    r0_eff = min(r0, p - 1)
    if r0_eff < 1:
        raise ValueError(f"need at least 2 columns, got {p}")
    if rng is None:
        rng = np.random.default_rng()
    gamma_n = p / n
    eigs = sym_eigen(sample_covariance(X)).eigenvalues
    fit = _bootstrap_fit(X, r0_eff, m, rng, vsums, b_folds)
    return {
        method: _count_for_method(method, eigs, fit, r0_eff, gamma_n, n, level, vsums)
        for method in methods
    }


def estimate_spike_count(
    X: FloatArray,
    method: str,
    r0: int = 5,
    level: float = 0.90,
    rng: np.random.Generator | None = None,
    m: int = 1000,
    vsums: VSums = DIAGONAL_VSUMS,
    b_folds: int = 1,
) -> SpikeCountEstimate:
    """Count the sample eigenvalues that sit inside their own interval C_k.

    Candidates k = 1..min(r0, p-1) above the detection threshold are examined
    in eigenvalue order. The JB family rescales around the observed eigenvalue
    with width and quantiles taken from the bootstrap plug-in coefficients;
    the YJ family solves for C_k by root finding at the observed eigenvalue.
    A candidate without a constructible interval contributes zero to r_hat.
    """
    return estimate_spike_count_multi(
        X, (method,), r0=r0, level=level, rng=rng, m=m, vsums=vsums, b_folds=b_folds
    )[method]
