"""Uplink scenario generation: activity, clustered angular channels, pilots.

Conventions
-----------
* The aggregate ``X = Hbar diag(s)`` is ``Mt x N``; its real vector form is
  ``x = [Re vec X; Im vec X]`` with column-major ``vec`` so that device ``n``
  owns offsets ``n*Mt ... (n+1)*Mt - 1`` in each half.
* ``Phi = embed((G^{1/2} D)^T kron U_R)`` so that ``y = Phi x + v``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
import math

import numpy as np

from .linops import KronMeasurement, to_real, vec
from .sparse_prior import PriorHyper

MIN_DISTANCE_KM = 0.05


@dataclass(frozen=True)
class SystemConfig:
    """Scenario parameters.

    ``adc_bits`` is ``None`` for an unquantized (infinite-resolution) receiver.
    ``eps_rel`` scales the inactive-branch variance relative to the power
    ``1 / (2 Mt)`` of one real component of an active device. ``b = None``
    ties the Gamma rate to ``a * epsilon``, which puts the activity threshold
    at the prior odds ``log((1 - q_s) / q_s)``.
    """

    N: int = 50
    M: int = 32
    Mt: int | None = None
    T: int = 64
    q_s: float = 0.1
    N_c: int = 2
    snr_db: float = 10.0
    cell_radius_km: float = 1.0
    adc_bits: int | None = 3
    on_grid: bool = False
    a: float = 1.0
    b: float | None = None
    eps_rel: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.Mt is None:
            object.__setattr__(self, "Mt", self.M)
        if self.N < 1 or self.M < 1 or self.T < 1:
            raise ValueError("N, M and T must be positive")
        if self.Mt != self.M:
            raise ValueError(f"grid size Mt={self.Mt} must equal M={self.M}")
        if not 0.0 <= self.q_s <= 1.0:
            raise ValueError(f"q_s={self.q_s} outside [0, 1]")
        if not 1 <= self.N_c <= self.Mt:
            raise ValueError(f"N_c={self.N_c} must lie in [1, Mt]")
        if self.adc_bits is not None and not 1 <= self.adc_bits <= 12:
            raise ValueError(f"adc_bits={self.adc_bits} must be in 1..12 or None")
        if self.cell_radius_km <= MIN_DISTANCE_KM:
            raise ValueError("cell radius must exceed the exclusion radius")
        if min(self.a, self.eps_rel) <= 0 or (self.b is not None and self.b <= 0):
            raise ValueError("a, b and eps_rel must be positive")

    @property
    def prior_component_variance(self) -> float:
        """Mean power of one real component of ``x`` under the generative model."""
        return self.q_s / (2.0 * self.Mt)

    def prior_hyper(self) -> PriorHyper:
        eps = self.eps_rel / (2.0 * self.Mt)
        b = self.a * eps if self.b is None else self.b
        return PriorHyper(q_s=self.q_s, a=self.a, b=b, epsilon=eps)

    def with_overrides(self, **kw) -> "SystemConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SystemConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


PROFILES = {
    "desk": SystemConfig(),
    "paper": SystemConfig(N=200, M=128, T=100, snr_db=10.0, adc_bits=3),
}


@dataclass
class Scene:
    s: np.ndarray
    Hbar: np.ndarray
    g: np.ndarray
    X: np.ndarray
    distances_km: np.ndarray
    aoas: list = field(default_factory=list)
    gains: list = field(default_factory=list)


@dataclass
class PilotMatrix:
    D: np.ndarray


@dataclass
class RealMeasurement:
    Phi: KronMeasurement
    y: np.ndarray
    x_true: np.ndarray
    v: np.ndarray
    sigma_v2: float


def steering_vector(theta: float, M: int) -> np.ndarray:
    m = np.arange(M)
    return np.exp(-1j * np.pi * m * np.sin(theta)) / np.sqrt(M)


def grid_sines(Mt: int) -> np.ndarray:
    return -1.0 + 2.0 * np.arange(Mt) / Mt


def build_grid(M: int, Mt: int | None = None) -> np.ndarray:
    """Array-response matrix on a grid uniform in ``sin(theta)``."""
    Mt = M if Mt is None else Mt
    if Mt != M:
        raise ValueError(f"unsupported grid: Mt={Mt} != M={M}")
    theta = np.arcsin(grid_sines(Mt))
    return np.stack([steering_vector(t, M) for t in theta], axis=1)


def sample_activity(N: int, q_s: float, rng: np.random.Generator) -> np.ndarray:
    return (rng.random(N) < q_s).astype(int)


def large_scale_gain(distance_km):
    return 10.0 ** (-12.81 - 3.67 * np.log10(distance_km))


def sample_distances(N: int, radius_km: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform over the disc, excluding a small ball around the BS."""
    u = rng.random(N)
    return np.sqrt(MIN_DISTANCE_KM**2 + u * (radius_km**2 - MIN_DISTANCE_KM**2))


def sample_channel(cfg: SystemConfig, rng: np.random.Generator, U: np.ndarray | None = None):
    """Clustered channel projected onto the angular grid.

    Returns ``(Hbar, H, aoas, gains)`` where ``aoas`` and ``gains`` are
    ``N x N_c`` arrays of cluster angles and complex cluster gains.
    """
    U = build_grid(cfg.M, cfg.Mt) if U is None else U
    gains = rng.standard_normal((cfg.N, cfg.N_c)) + 1j * rng.standard_normal((cfg.N, cfg.N_c))
    gains *= np.sqrt(1.0 / (2.0 * cfg.N_c))
    if cfg.on_grid:
        idx = rng.integers(0, cfg.Mt, size=(cfg.N, cfg.N_c))
        aoas = np.arcsin(grid_sines(cfg.Mt))[idx]
        Hbar = np.zeros((cfg.Mt, cfg.N), dtype=complex)
        for c in range(cfg.N_c):
            np.add.at(Hbar, (idx[:, c], np.arange(cfg.N)), gains[:, c])
        return Hbar, U @ Hbar, aoas, gains
    aoas = rng.uniform(-np.pi / 2, np.pi / 2, size=(cfg.N, cfg.N_c))
    H = np.zeros((cfg.M, cfg.N), dtype=complex)
    for c in range(cfg.N_c):
        H += gains[:, c][None, :] * np.stack([steering_vector(t, cfg.M) for t in aoas[:, c]], axis=1)
    return U.conj().T @ H, H, aoas, gains


def generate_pilots(N: int, T: int, rng: np.random.Generator) -> PilotMatrix:
    re = rng.choice([-1.0, 1.0], size=(N, T))
    im = rng.choice([-1.0, 1.0], size=(N, T))
    return PilotMatrix(D=(re + 1j * im) / np.sqrt(2.0))


def noise_variance(g: np.ndarray, snr_db: float) -> float:
    """Noise power giving the requested device-averaged received SNR (unit channel energy)."""
    return float(np.mean(g) / 10.0 ** (snr_db / 10.0))


def generate_scene(cfg: SystemConfig, rng: np.random.Generator, U: np.ndarray | None = None) -> Scene:
    s = sample_activity(cfg.N, cfg.q_s, rng)
    dist = sample_distances(cfg.N, cfg.cell_radius_km, rng)
    g = large_scale_gain(dist)
    Hbar, _, aoas, gains = sample_channel(cfg, rng, U)
    X = Hbar * s[None, :]
    return Scene(s=s, Hbar=Hbar, g=g, X=X, distances_km=dist, aoas=aoas, gains=gains)


def measurement_operator(U: np.ndarray, g: np.ndarray, D: np.ndarray) -> KronMeasurement:
    B = (np.sqrt(g)[:, None] * D).T
    return KronMeasurement(B, U)


def synthesize(cfg: SystemConfig, scene: Scene, pilots: PilotMatrix, rng: np.random.Generator,
               U: np.ndarray | None = None, sigma_v2: float | None = None):
    """Received signal ``Y = U_R X G^{1/2} D + V`` and its real-valued form."""
    U = build_grid(cfg.M, cfg.Mt) if U is None else U
    D = pilots.D
    if scene.X.shape != (cfg.Mt, cfg.N) or D.shape != (cfg.N, cfg.T) or U.shape != (cfg.M, cfg.Mt):
        raise ValueError(
            f"dimension mismatch: X{scene.X.shape}, D{D.shape}, U{U.shape} for "
            f"N={cfg.N}, M={cfg.M}, T={cfg.T}"
        )
    if sigma_v2 is None:
        sigma_v2 = noise_variance(scene.g, cfg.snr_db)
    V = math.sqrt(sigma_v2 / 2.0) * (
        rng.standard_normal((cfg.M, cfg.T)) + 1j * rng.standard_normal((cfg.M, cfg.T))
    )
    Y = U @ scene.X @ (np.sqrt(scene.g)[:, None] * D) + V
    Phi = measurement_operator(U, scene.g, D)
    meas = RealMeasurement(
        Phi=Phi, y=to_real(vec(Y)), x_true=to_real(vec(scene.X)), v=to_real(vec(V)), sigma_v2=sigma_v2
    )
    return Y, meas
