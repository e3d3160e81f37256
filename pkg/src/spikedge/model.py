"""Spiked population models, standardized entry laws, and data generation.

The population covariance is Sigma = V diag(l_1, ..., l_r, 1, ..., 1) V' of
total dimension bulk_dim + r, with spikes l_1 > ... > l_r > 1 attached to the
first r columns of V. Data are X = Z Sigma^{1/2} with i.i.d. standardized
entries Z_ij.

Entry distributions. All laws are normalized to mean 0, variance 1. The
gamma laws use the Ga(shape, rate) parameterization, so Ga(1, 2) has mean
1/2; this is the only reading under which every tabulated entry standardizes
to unit variance. Note that std_ga11 (Ga(1,1) - 1) and std_ga12
(2 Ga(1,2) - 1) are the same standardized exponential law; both tags exist
because both forms are conventional.

Moment identities used for the analytic triples: a standardized gamma with
shape a has beta_z = 6/a, Gamma^2 = 4/a and E Z^6 = 120/a^2 + 130/a + 15
(chi^2(1) is the shape-1/2 case), while U(-sqrt(3), sqrt(3)) has
E Z^(2k) = 3^k / (2k + 1).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .linalg import FloatArray

SQRT3 = float(np.sqrt(3.0))

DISTRIBUTION_TAGS = (
    "gaussian",
    "uniform_sqrt3",
    "std_chi1",
    "std_ga11",
    "std_ga12",
    "std_ga22",
    "std_ga33",
)

# Gamma shape behind each standardized-gamma tag (chi^2(1) = Ga(1/2, 1/2)).
_GAMMA_SHAPES = {
    "std_chi1": 0.5,
    "std_ga11": 1.0,
    "std_ga12": 1.0,
    "std_ga22": 2.0,
    "std_ga33": 3.0,
}


@dataclass(frozen=True, slots=True)
class MomentTriple:
    """(beta_z, Gamma^2, Delta) = (E Z^4 - 3, (E Z^3)^2, E Z^6)."""

    beta_z: float
    gamma_sq: float
    delta: float

    def __post_init__(self) -> None:
        if self.delta < 1.0:
            raise ValueError(f"E Z^6 >= 1 for unit-variance Z, got {self.delta}")
        if self.beta_z < -2.0:
            raise ValueError(f"E Z^4 >= 1 forces beta_z >= -2, got {self.beta_z}")


@dataclass(frozen=True, slots=True)
class Identity:
    """No rotation: spike eigenvectors are the leading basis vectors."""


@dataclass(frozen=True, slots=True)
class EmbeddedHaar:
    """A block x block Haar rotation acting on the leading coordinates."""

    block: int = 3


@dataclass(frozen=True, slots=True)
class FullHaar:
    """A Haar rotation of the full total_dim x total_dim space."""


Rotation = Identity | EmbeddedHaar | FullHaar


@dataclass(slots=True)
class SpikedModel:
    """Population description; gamma_n is filled in at sampling time."""

    spikes: tuple[float, ...]
    bulk_dim: int
    rotation: Rotation
    V1: FloatArray
    gamma_n: float | None = field(default=None)

    @property
    def r(self) -> int:
        return len(self.spikes)

    @property
    def total_dim(self) -> int:
        return self.bulk_dim + len(self.spikes)


@dataclass(frozen=True, slots=True)
class VSums:
    """Power sums of one spike eigenvector: s_m = sum_t v_tk^m."""

    s3: float
    s4: float
    s6: float
    s3sq: float


DIAGONAL_VSUMS = VSums(s3=1.0, s4=1.0, s6=1.0, s3sq=1.0)


def _check_tag(dist: str) -> str:
    if dist not in DISTRIBUTION_TAGS:
        raise ValueError(f"unknown distribution tag {dist!r}; expected one of {DISTRIBUTION_TAGS}")
    return dist


def sample_entries(dist: str, shape: tuple[int, ...] | int, rng: np.random.Generator) -> FloatArray:
    """Draw an array of i.i.d. standardized entries from the tagged law."""
    _check_tag(dist)
    if dist == "gaussian":
        return rng.standard_normal(shape)
    if dist == "uniform_sqrt3":
        return rng.uniform(-SQRT3, SQRT3, size=shape)
    if dist == "std_chi1":
        return (rng.chisquare(1.0, size=shape) - 1.0) / np.sqrt(2.0)
    if dist == "std_ga11":
        return rng.gamma(1.0, 1.0, size=shape) - 1.0
    if dist == "std_ga12":
        return 2.0 * rng.gamma(1.0, 0.5, size=shape) - 1.0
    if dist == "std_ga22":
        return np.sqrt(2.0) * (rng.gamma(2.0, 0.5, size=shape) - 1.0)
    assert dist == "std_ga33"
    return SQRT3 * (rng.gamma(3.0, 1.0 / 3.0, size=shape) - 1.0)


def sample_entry(dist: str, rng: np.random.Generator) -> float:
    """Single draw from the tagged standardized law."""
    return float(sample_entries(dist, 1, rng)[0])


def population_moments(dist: str) -> MomentTriple:
    """Exact analytic (beta_z, Gamma^2, Delta) for the tagged law."""
    _check_tag(dist)
    if dist == "gaussian":
        # Normal moments: E Z^4 = 3, E Z^6 = 5!! = 15.
        return MomentTriple(beta_z=0.0, gamma_sq=0.0, delta=15.0)
    if dist == "uniform_sqrt3":
        return MomentTriple(beta_z=9.0 / 5.0 - 3.0, gamma_sq=0.0, delta=27.0 / 7.0)
    a = _GAMMA_SHAPES[dist]
    return MomentTriple(
        beta_z=6.0 / a,
        gamma_sq=4.0 / a,
        delta=120.0 / a**2 + 130.0 / a + 15.0,
    )


def haar_orthogonal(d: int, rng: np.random.Generator) -> FloatArray:
    """Haar-distributed d x d orthogonal matrix.

    Gaussian matrix followed by QR, with columns re-signed so the R diagonal
    is positive; that sign correction is what makes the QR factor Haar.
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    Z = rng.standard_normal((d, d))
    Q, R = np.linalg.qr(Z)
    signs = np.sign(np.diag(R))
    signs[signs == 0.0] = 1.0
    return Q * signs


def build_model(
    spikes: tuple[float, ...] | list[float],
    p: int,
    rotation: Rotation,
    rng: np.random.Generator | None = None,
) -> SpikedModel:
    """Assemble a SpikedModel with bulk dimension p and the given rotation.

    Sigma's eigenvector matrix is V = Q' where Q is the rotation (identity,
    a leading Haar block padded by identity, or a full Haar matrix); the
    spikes attach to the first r columns of V in descending order.
    """
    spikes = tuple(float(l) for l in spikes)
    r = len(spikes)
    if any(l <= 1.0 for l in spikes):
        raise ValueError(f"every spike must exceed 1, got {spikes}")
    if any(spikes[i] <= spikes[i + 1] for i in range(r - 1)):
        raise ValueError(f"spikes must be strictly decreasing, got {spikes}")
    if p < 1:
        raise ValueError(f"bulk dimension must be >= 1, got {p}")
    total = p + r
    if isinstance(rotation, Identity):
        V1 = np.eye(total, r)
    else:
        if rng is None:
            raise ValueError("Haar rotations need a random generator")
        if isinstance(rotation, EmbeddedHaar):
            if not 1 <= rotation.block <= total:
                raise ValueError(f"Haar block {rotation.block} out of range for dim {total}")
            Q = np.eye(total)
            Q[: rotation.block, : rotation.block] = haar_orthogonal(rotation.block, rng)
        elif isinstance(rotation, FullHaar):
            Q = haar_orthogonal(total, rng)
        else:
            raise TypeError(f"unknown rotation {rotation!r}")
        V1 = np.ascontiguousarray(Q.T[:, :r])
    gram_err = float(np.abs(V1.T @ V1 - np.eye(r)).max(initial=0.0))
    if gram_err > 1e-10:
        raise ValueError(f"spike eigenvectors lost orthonormality ({gram_err:.2e})")
    return SpikedModel(spikes=spikes, bulk_dim=int(p), rotation=rotation, V1=V1)


def generate_data(
    model: SpikedModel,
    dist: str,
    n: int,
    rng: np.random.Generator,
) -> FloatArray:
    """Draw X = Z Sigma^{1/2} with n rows; sets model.gamma_n = bulk_dim / n.

    Sigma^{1/2} = I + V1 (diag(sqrt(l)) - I) V1', so the product costs
    O(n * total * r) beyond entry generation. Subcritical spikes
    (l <= 1 + sqrt(gamma_n)) trigger a warning, not an error.
    """
    if n < 2:
        raise ValueError(f"need n >= 2 observations, got {n}")
    total = model.total_dim
    Z = sample_entries(dist, (n, total), rng)
    model.gamma_n = model.bulk_dim / n
    for k, l in enumerate(model.spikes):
        if l <= 1.0 + np.sqrt(model.gamma_n):
            warnings.warn(
                f"spike l_{k + 1} = {l} is subcritical at gamma_n = {model.gamma_n:.4g}",
                RuntimeWarning,
                stacklevel=2,
            )
    if model.r == 0:
        return Z
    scale = np.sqrt(np.asarray(model.spikes)) - 1.0
    return Z + ((Z @ model.V1) * scale) @ model.V1.T


def v_power_sums(V1: FloatArray, k: int) -> VSums:
    """Entry power sums (s3, s4, s6, (s3)^2) of the k-th spike eigenvector."""
    V1 = np.asarray(V1, dtype=np.float64)
    if V1.ndim != 2:
        raise ValueError(f"V1 must be 2-d, got shape {V1.shape}")
    if not 0 <= k < V1.shape[1]:
        raise IndexError(f"column {k} out of range for r={V1.shape[1]}")
    v = V1[:, k]
    s3 = float(np.sum(v**3))
    return VSums(s3=s3, s4=float(np.sum(v**4)), s6=float(np.sum(v**6)), s3sq=s3 * s3)
