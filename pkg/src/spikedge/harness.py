"""Declarative Monte Carlo experiments over the spiked model.

Three experiment kinds cover the simulation study: Density (sampling the
centered-scaled eigenvalue statistic against its Gaussian and corrected
approximations), Accuracy (exact-recovery rates of the spike-count methods),
and Moments (calibration of the moment estimators against analytic truth).

Determinism contract: (spec, seed) fixes every output bit regardless of the
worker count. Each replicate owns a private generator whose seed is derived
from the master seed by counter-mode mixing; replicates are dispatched in
fixed-size chunks whose boundaries depend only on the replicate count, and
chunk results are concatenated in submission order before any reduction.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .edgeworth import (
    EdgeworthCoefficients,
    SpikeContext,
    coefficients,
    edgeworth_cdf,
    edgeworth_pdf,
)
from .inference import CI_METHODS, estimate_spike_count_multi, phase_threshold
from .linalg import FloatArray, sample_covariance, sym_eigen
from .model import (
    DISTRIBUTION_TAGS,
    EmbeddedHaar,
    FullHaar,
    Identity,
    Rotation,
    SpikedModel,
    build_model,
    generate_data,
    population_moments,
    sample_entries,
    v_power_sums,
)
from .moments import estimate_all

EXPERIMENT_KINDS = ("Density", "Accuracy", "Moments")

# Spike/rotation configurations 1-9 of the density study: three spike sets
# crossed with identity, 3x3-block Haar, and full Haar rotations.
SETTINGS: dict[int, tuple[tuple[float, ...], Rotation]] = {
    1: ((4.0,), Identity()),
    2: ((6.0, 4.0), Identity()),
    3: ((8.0, 6.0, 4.0), Identity()),
    4: ((4.0,), EmbeddedHaar(3)),
    5: ((6.0, 4.0), EmbeddedHaar(3)),
    6: ((8.0, 6.0, 4.0), EmbeddedHaar(3)),
    7: ((4.0,), FullHaar()),
    8: ((6.0, 4.0), FullHaar()),
    9: ((8.0, 6.0, 4.0), FullHaar()),
}

# (p, n) cells of the accuracy tables, grouped by ratio 0.1 / 0.2 / 0.3.
ACCURACY_CELLS: tuple[tuple[int, int], ...] = (
    (5, 50), (10, 100), (20, 200), (40, 400),
    (10, 50), (20, 100), (40, 200), (80, 400),
    (15, 50), (30, 100), (60, 200), (120, 400),
)

ACCURACY_SPIKES = (3.5, 3.0, 2.5)

SEED_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
# Counter reserved for drawing the rotation/model, far above any replicate.
MODEL_SEED_INDEX = SEED_MASK

HIST_RANGE = (-4.0, 4.0)
HIST_BINS = 60
CURVE_POINTS = 401


def _splitmix_finalize(x: int) -> int:
    x &= SEED_MASK
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & SEED_MASK
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & SEED_MASK
    x ^= x >> 31
    return x


def derive_seed(master: int, index: int) -> int:
    """Collision-free 64-bit stream seed for one replicate index.

    Bit-exact definition: finalize((master + C * (index + 1)) mod 2^64) where
    C = 0x9e3779b97f4a7c15 and finalize is the splitmix64 output mix
    (xor-shift 30, mul 0xbf58476d1ce4e5b9, xor-shift 27,
    mul 0x94d049bb133111eb, xor-shift 31).
    """
    if not 0 <= master <= SEED_MASK:
        raise ValueError(f"master seed must be a 64-bit unsigned value, got {master}")
    if index < 0:
        raise ValueError(f"replicate index must be >= 0, got {index}")
    return _splitmix_finalize(master + _GOLDEN * ((index + 1) & SEED_MASK))


def resolve_workers(workers: int | None) -> int:
    """Explicit count, else EDGEWORTH_WORKERS, else the machine CPU count."""
    if workers is None:
        env = os.environ.get("EDGEWORTH_WORKERS", "").strip()
        if env:
            try:
                workers = int(env)
            except ValueError:
                raise ValueError(f"EDGEWORTH_WORKERS must be an integer, got {env!r}") from None
        else:
            workers = os.cpu_count() or 1
    if workers < 1:
        raise ValueError(f"worker count must be >= 1, got {workers}")
    return workers


def _chunk_size(reps: int) -> int:
    # Depends only on reps so chunk boundaries (and therefore output bytes)
    # are identical for every worker count.
    return max(1, math.ceil(reps / 64))


def _chunk_ranges(reps: int) -> list[tuple[int, int]]:
    size = _chunk_size(reps)
    return [(lo, min(lo + size, reps)) for lo in range(0, reps, size)]


def _run_chunked(fn, payloads: list, workers: int) -> list:
    # A pool is used even for one worker so the execution environment does
    # not depend on the worker count.
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, payloads))


@dataclass(frozen=True, slots=True)
class ExperimentSpec:
    """One fully determined experiment; p is the total dimension of S.

    Either a density setting id (1-9) or explicit spikes/rotation must be
    given for Density and Accuracy runs; Moments runs draw pure-noise data
    and ignore spikes.
    """

    kind: str
    dist: str
    n: int
    p: int
    reps: int
    seed: int
    setting: int | None = None
    spikes: tuple[float, ...] = ()
    rotation: Rotation = Identity()
    methods: tuple[str, ...] = CI_METHODS
    r0: int = 5
    level: float = 0.90
    bootstrap_m: int = 1000
    out_dir: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(f"unknown kind {self.kind!r}; expected one of {EXPERIMENT_KINDS}")
        if self.dist not in DISTRIBUTION_TAGS:
            raise ValueError(f"unknown distribution {self.dist!r}")
        if self.n < 2:
            raise ValueError(f"need n >= 2, got {self.n}")
        if self.p < 1:
            raise ValueError(f"need p >= 1, got {self.p}")
        if self.reps < 1:
            raise ValueError(f"need reps >= 1, got {self.reps}")
        if not 0 <= self.seed <= SEED_MASK:
            raise ValueError(f"seed must be a 64-bit unsigned value, got {self.seed}")
        if self.setting is not None:
            if self.spikes:
                raise ValueError("give either a setting id or explicit spikes, not both")
            if self.setting not in SETTINGS:
                raise ValueError(f"setting must be 1..9, got {self.setting}")
            spikes, rotation = SETTINGS[self.setting]
            object.__setattr__(self, "spikes", spikes)
            object.__setattr__(self, "rotation", rotation)
        if self.kind != "Moments":
            if not self.spikes:
                raise ValueError(f"{self.kind} experiments need spikes or a setting id")
            if self.p < len(self.spikes) + 1:
                raise ValueError(
                    f"need p >= r + 1 = {len(self.spikes) + 1}, got p = {self.p}"
                )
        for method in self.methods:
            if method not in CI_METHODS:
                raise ValueError(f"unknown method {method!r}")
        if not 0.0 < self.level < 1.0:
            raise ValueError(f"level must lie in (0, 1), got {self.level}")
        if self.r0 < 1:
            raise ValueError(f"r0 must be >= 1, got {self.r0}")
        if self.bootstrap_m < 10:
            raise ValueError(f"bootstrap size must be >= 10, got {self.bootstrap_m}")

    @property
    def r(self) -> int:
        return len(self.spikes)

    @property
    def bulk_dim(self) -> int:
        return self.p - self.r

    @property
    def gamma_theory(self) -> float:
        """Bulk-to-sample ratio entering the oracle coefficients."""
        return self.bulk_dim / self.n


@dataclass(frozen=True, slots=True)
class DensityResult:
    """Sampled statistic with its histogram, overlay curves, and KS fits.

    samples has one row per replicate and one column per spike; histogram,
    curves, and KS distances describe the top spike only. Mass conservation:
    counts.sum() + excluded == reps.
    """

    spec: ExperimentSpec
    samples: FloatArray
    supercritical: np.ndarray
    bin_edges: FloatArray
    counts: np.ndarray
    curve_x: FloatArray
    curve_gauss: FloatArray
    curve_edgeworth: FloatArray
    ks_gauss: float
    ks_edgeworth: float
    excluded: int
    coefficients: tuple[EdgeworthCoefficients, ...]

    def __post_init__(self) -> None:
        if int(self.counts.sum()) + self.excluded != self.spec.reps:
            raise ValueError("histogram mass was lost: counts + excluded != reps")


@dataclass(frozen=True, slots=True)
class AccuracyResult:
    """Exact-recovery percentages for one (p, n) cell, one method each."""

    spec: ExperimentSpec
    percents: dict[str, float]
    reps: int
    seed: int

    def __post_init__(self) -> None:
        for method, pct in self.percents.items():
            if not 0.0 <= pct <= 100.0:
                raise ValueError(f"{method} percentage out of range: {pct}")


@dataclass(frozen=True, slots=True)
class MomentsResult:
    """Replicate means and standard errors per estimator, with analytic truth."""

    spec: ExperimentSpec
    means: dict[str, float]
    ses: dict[str, float]
    truths: dict[str, float]


def oracle_coefficients(spec: ExperimentSpec, model: SpikedModel) -> tuple[EdgeworthCoefficients, ...]:
    """True-parameter coefficient bundles, one per spike of the model."""
    moments = population_moments(spec.dist)
    gamma = spec.gamma_theory
    out = []
    for k in range(spec.r):
        ctx = SpikeContext(
            l_k=spec.spikes[k],
            all_spikes=spec.spikes,
            k=k,
            gamma_n=gamma,
            n=spec.n,
        )
        out.append(coefficients(ctx, moments, v_power_sums(model.V1, k)))
    return tuple(out)


def _build_model(spec: ExperimentSpec) -> SpikedModel:
    rng = np.random.default_rng(derive_seed(spec.seed, MODEL_SEED_INDEX))
    return build_model(spec.spikes, spec.bulk_dim, spec.rotation, rng)


def _density_chunk(payload) -> tuple[FloatArray, np.ndarray]:
    model, dist, n, seeds, rho, sig, theta = payload
    r = len(rho)
    stats = np.empty((len(seeds), r))
    flags = np.empty((len(seeds), r), dtype=bool)
    for i, seed in enumerate(seeds):
        rng = np.random.default_rng(seed)
        X = generate_data(model, dist, n, rng)
        eigs = sym_eigen(sample_covariance(X)).eigenvalues[:r]
        stats[i] = np.sqrt(n) * (eigs - rho) / sig
        flags[i] = eigs > theta
    return stats, flags


def ks_distance(sample: FloatArray, cdf_values: FloatArray) -> float:
    """One-sample Kolmogorov-Smirnov distance; both arrays sorted ascending."""
    n = sample.size
    if n == 0:
        return float("nan")
    i = np.arange(1, n + 1)
    return float(max(np.max(cdf_values - (i - 1) / n), np.max(i / n - cdf_values)))


def run_density(spec: ExperimentSpec, workers: int | None = None) -> DensityResult:
    """Sample the statistic under its true model and fit both approximations.

    Replicates with a top eigenvalue at or below the detection threshold are
    excluded from the histogram and KS fits but kept (flagged) in samples.
    """
    if spec.kind != "Density":
        raise ValueError(f"run_density needs a Density spec, got {spec.kind!r}")
    workers = resolve_workers(workers)
    model = _build_model(spec)
    coeffs = oracle_coefficients(spec, model)
    rho = np.array([c.rho for c in coeffs])
    sig = np.array([np.sqrt(c.tilde_sigma_sq) for c in coeffs])
    theta = phase_threshold(spec.gamma_theory, spec.n)

    payloads = [
        (model, spec.dist, spec.n, [derive_seed(spec.seed, i) for i in range(lo, hi)], rho, sig, theta)
        for lo, hi in _chunk_ranges(spec.reps)
    ]
    parts = _run_chunked(_density_chunk, payloads, workers)
    samples = np.concatenate([s for s, _ in parts], axis=0)
    flags = np.concatenate([f for _, f in parts], axis=0)

    top = samples[flags[:, 0], 0]
    excluded = int(spec.reps - top.size)
    # Out-of-range values are folded into the terminal bins so no observed
    # replicate loses histogram mass.
    clipped = np.clip(top, HIST_RANGE[0], HIST_RANGE[1])
    counts, bin_edges = np.histogram(clipped, bins=HIST_BINS, range=HIST_RANGE)

    x = np.linspace(HIST_RANGE[0], HIST_RANGE[1], CURVE_POINTS)
    curve_gauss = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    curve_edgeworth = np.asarray(edgeworth_pdf(x, coeffs[0], spec.n))

    srt = np.sort(top)
    ks_gauss = ks_distance(srt, np.asarray(ndtr(srt)))
    ks_edge = ks_distance(srt, np.asarray(edgeworth_cdf(srt, coeffs[0], spec.n)))

    return DensityResult(
        spec=spec,
        samples=samples,
        supercritical=flags,
        bin_edges=bin_edges,
        counts=counts,
        curve_x=x,
        curve_gauss=curve_gauss,
        curve_edgeworth=curve_edgeworth,
        ks_gauss=ks_gauss,
        ks_edgeworth=ks_edge,
        excluded=excluded,
        coefficients=coeffs,
    )


def _accuracy_chunk(payload) -> np.ndarray:
    model, dist, n, seeds, methods, r0, level, m = payload
    out = np.empty((len(seeds), len(methods)), dtype=np.int64)
    for i, seed in enumerate(seeds):
        rng = np.random.default_rng(seed)
        X = generate_data(model, dist, n, rng)
        counts = estimate_spike_count_multi(X, methods, r0=r0, level=level, rng=rng, m=m)
        out[i] = [counts[method].r_hat for method in methods]
    return out


def cell_seed(master: int, p: int, n: int) -> int:
    """Per-cell master seed, mixed so cells decorrelate under one master."""
    return derive_seed(derive_seed(master, p), n)


def run_accuracy(spec: ExperimentSpec, workers: int | None = None) -> AccuracyResult:
    """Exact-recovery rate of r_hat = r for every requested method."""
    if spec.kind != "Accuracy":
        raise ValueError(f"run_accuracy needs an Accuracy spec, got {spec.kind!r}")
    workers = resolve_workers(workers)
    row_seed = cell_seed(spec.seed, spec.p, spec.n)
    rng_model = np.random.default_rng(derive_seed(row_seed, MODEL_SEED_INDEX))
    model = build_model(spec.spikes, spec.bulk_dim, spec.rotation, rng_model)

    payloads = [
        (
            model,
            spec.dist,
            spec.n,
            [derive_seed(row_seed, i) for i in range(lo, hi)],
            spec.methods,
            spec.r0,
            spec.level,
            spec.bootstrap_m,
        )
        for lo, hi in _chunk_ranges(spec.reps)
    ]
    parts = _run_chunked(_accuracy_chunk, payloads, workers)
    r_hats = np.concatenate(parts, axis=0)
    percents = {
        method: float(100.0 * np.mean(r_hats[:, j] == spec.r))
        for j, method in enumerate(spec.methods)
    }
    return AccuracyResult(spec=spec, percents=percents, reps=spec.reps, seed=row_seed)


def _moments_chunk(payload) -> np.ndarray:
    dist, n, p, seeds = payload
    out = np.empty((len(seeds), 3))
    for i, seed in enumerate(seeds):
        rng = np.random.default_rng(seed)
        X = sample_entries(dist, (n, p), rng)
        est = estimate_all(X)
        out[i] = (est.beta_z_hat, est.gamma_sq_hat, est.delta_hat)
    return out


def run_moments(spec: ExperimentSpec, workers: int | None = None) -> MomentsResult:
    """Calibrate the moment estimators on pure-noise data of the given law."""
    if spec.kind != "Moments":
        raise ValueError(f"run_moments needs a Moments spec, got {spec.kind!r}")
    workers = resolve_workers(workers)
    payloads = [
        (spec.dist, spec.n, spec.p, [derive_seed(spec.seed, i) for i in range(lo, hi)])
        for lo, hi in _chunk_ranges(spec.reps)
    ]
    parts = _run_chunked(_moments_chunk, payloads, workers)
    values = np.concatenate(parts, axis=0)
    truth = population_moments(spec.dist)
    names = ("beta_z", "gamma_sq", "delta")
    means = {name: float(np.mean(values[:, j])) for j, name in enumerate(names)}
    if spec.reps > 1:
        ses = {
            name: float(np.std(values[:, j], ddof=1) / np.sqrt(spec.reps))
            for j, name in enumerate(names)
        }
    else:
        ses = {name: float("nan") for name in names}
    truths = {"beta_z": truth.beta_z, "gamma_sq": truth.gamma_sq, "delta": truth.delta}
    return MomentsResult(spec=spec, means=means, ses=ses, truths=truths)
