"""Problem instances: system parameters, SAR matrices and Rician channel draws."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

HERMITIAN_TOL = 1e-12
PSD_REL_TOL = 1e-10


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(watts):
    return 10.0 * np.log10(np.asarray(watts, dtype=float)) + 30.0


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def _frozen(arr, dtype):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def check_sar_matrix(A, name="SAR matrix"):
    """Validate Hermitian-ness and positive semidefiniteness; returns a complex copy."""
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square, got shape {A.shape}")
    if np.max(np.abs(A - A.conj().T), initial=0.0) > HERMITIAN_TOL:
        raise ValueError(f"{name} is not Hermitian")
    scale = np.linalg.norm(A, 2) if A.size else 0.0
    if A.size and np.linalg.eigvalsh(A)[0] < -PSD_REL_TOL * scale:
        raise ValueError(f"{name} is not positive semidefinite")
    return A


def default_sar_matrix() -> np.ndarray:
    """The 4-antenna SAR matrix from the reference simulation setup (W/kg).

    Upper triangle: -1.2i on the first superdiagonal and -0.42 on the second;
    the lower triangle is its conjugate mirror.
    """
    A = np.diag(np.full(4, 1.6)).astype(complex)
    for i in range(3):
        A[i, i + 1] = -1.2j
    for i in range(2):
        A[i, i + 2] = -0.42
    A = np.triu(A) + np.triu(A, 1).conj().T
    A.setflags(write=False)
    return A


@dataclass(frozen=True, eq=False)
class SystemScenario:
    """A complete problem instance apart from the channels.

    All powers are in watts, SAR limits in W/kg, SINR targets linear.
    """

    num_antennas: int
    num_users: int
    noise_antenna: float
    noise_circuit: float
    power_budget: float
    sar_limits: tuple = ()
    sar_matrices: tuple = ()
    sinr_targets: np.ndarray = None
    eh_targets: np.ndarray = None

    def __post_init__(self):
        Nt, K = int(self.num_antennas), int(self.num_users)
        if Nt < 1 or K < 1:
            raise ValueError("num_antennas and num_users must be positive")
        object.__setattr__(self, "num_antennas", Nt)
        object.__setattr__(self, "num_users", K)
        for name in ("noise_antenna", "noise_circuit", "power_budget"):
            value = float(getattr(self, name))
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")
            object.__setattr__(self, name, value)

        limits = tuple(float(p) for p in np.atleast_1d(self.sar_limits)) if len(self.sar_limits) else ()
        mats = tuple(self.sar_matrices)
        if len(limits) != len(mats):
            raise ValueError(f"{len(limits)} SAR limits but {len(mats)} SAR matrices")
        if any(not p > 0 for p in limits):
            raise ValueError("SAR limits must be positive")
        checked = []
        for l, A in enumerate(mats):
            A = check_sar_matrix(A, f"SAR matrix {l}")
            if A.shape != (Nt, Nt):
                raise ValueError(f"SAR matrix {l} has shape {A.shape}, expected {(Nt, Nt)}")
            checked.append(_frozen(A, complex))
        object.__setattr__(self, "sar_limits", limits)
        object.__setattr__(self, "sar_matrices", tuple(checked))

        for name in ("sinr_targets", "eh_targets"):
            value = getattr(self, name)
            if value is None:
                raise ValueError(f"{name} is required")
            arr = np.broadcast_to(np.asarray(value, dtype=float), (K,))
            if np.any(~(arr > 0)):
                raise ValueError(f"{name} must be positive")
            object.__setattr__(self, name, _frozen(arr, float))

    @property
    def num_sar(self) -> int:
        return len(self.sar_limits)

    def replace(self, **changes) -> "SystemScenario":
        return dataclasses.replace(self, **changes)

    def without_sar(self) -> "SystemScenario":
        return self.replace(sar_limits=(), sar_matrices=())

    def with_sar_limit(self, limit: float) -> "SystemScenario":
        """Same matrices, every SAR limit set to ``limit``."""
        return self.replace(sar_limits=tuple(limit for _ in self.sar_limits))

    @classmethod
    def default(cls, num_users=4, num_antennas=4, **overrides) -> "SystemScenario":
        """Reference operating point: N0=-70 dBm, NC=-50 dBm, PT=2 W, one SAR
        constraint at 1.6 W/kg, SINR target 10 dB, EH target -15 dBm."""
        if num_antennas != 4 and "sar_matrices" not in overrides:
            raise ValueError("the default SAR matrix is 4x4; pass sar_matrices explicitly")
        params = dict(
            num_antennas=num_antennas,
            num_users=num_users,
            noise_antenna=float(dbm_to_watts(-70.0)),
            noise_circuit=float(dbm_to_watts(-50.0)),
            power_budget=2.0,
            sar_limits=(1.6,),
            sar_matrices=(default_sar_matrix(),),
            sinr_targets=np.full(num_users, float(db_to_linear(10.0))),
            eh_targets=np.full(num_users, float(dbm_to_watts(-15.0))),
        )
        params.update(overrides)
        return cls(**params)


@dataclass(frozen=True)
class ChannelConfig:
    frequency: float = 915e6  # Hz
    gain_tx_dbi: float = 8.0
    gain_rx_dbi: float = 3.0
    path_loss_exponent: float = 2.5
    reference_distance: float = 1.0  # m
    distance_range: tuple = (1.0, 5.0)  # m
    angle_range: tuple = (-np.pi, np.pi)
    rician_factor_db: float = 5.0


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """Rows of ``vectors`` are the user channels h_k (length Nt)."""

    vectors: np.ndarray
    distances: np.ndarray = None
    angles: np.ndarray = None
    path_loss: np.ndarray = None

    def __post_init__(self):
        h = np.atleast_2d(np.asarray(self.vectors, dtype=complex))
        if not np.all(np.isfinite(h)):
            raise ValueError("channel vectors must be finite")
        if np.any(np.linalg.norm(h, axis=1) == 0):
            raise ValueError("channel vectors must be nonzero")
        object.__setattr__(self, "vectors", _frozen(h, complex))
        K = h.shape[0]
        for name in ("distances", "angles", "path_loss"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, _frozen(np.broadcast_to(value, (K,)), float))

    @property
    def num_users(self) -> int:
        return self.vectors.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.vectors.shape[1]

    def __getitem__(self, k):
        return self.vectors[k]

    def norms_squared(self):
        return np.sum(np.abs(self.vectors) ** 2, axis=1)

    def subset(self, users) -> "ChannelSet":
        users = list(users)
        pick = lambda arr: None if arr is None else arr[users]
        return ChannelSet(self.vectors[users], pick(self.distances), pick(self.angles), pick(self.path_loss))

    def perturbed(self, deltas) -> "ChannelSet":
        return ChannelSet(self.vectors + deltas, self.distances, self.angles, self.path_loss)


@dataclass(frozen=True, eq=False)
class UncertaintyModel:
    """Norm-ball radii: ||dh_k|| <= channel_bounds[k], ||dA_l||_F <= sar_bounds[l]."""

    channel_bounds: np.ndarray
    sar_bounds: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        for name in ("channel_bounds", "sar_bounds"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if np.any(arr < 0) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite and nonnegative")
            object.__setattr__(self, name, _frozen(arr, float))

    @classmethod
    def uniform(cls, num_users, num_sar, channel_radius, sar_radius) -> "UncertaintyModel":
        return cls(np.full(num_users, float(channel_radius)), np.full(num_sar, float(sar_radius)))

    def check(self, scenario: SystemScenario):
        if len(self.channel_bounds) != scenario.num_users or len(self.sar_bounds) != scenario.num_sar:
            raise ValueError("uncertainty radii do not match the scenario dimensions")


def los_steering(zeta: float, num_antennas: int) -> np.ndarray:
    """Half-wavelength ULA response: entry m is exp(-i m pi sin(zeta))."""
    if num_antennas < 1:
        raise ValueError("num_antennas must be at least 1")
    m = np.arange(num_antennas)
    return np.exp(-1j * m * np.pi * np.sin(zeta))


def friis_path_loss(distance, frequency=915e6, gain_tx_dbi=8.0, gain_rx_dbi=3.0, exponent=2.5,
                    reference_distance=1.0):
    """Linear power gain: antenna gains times free-space loss at the reference
    distance, then a power-law decay beyond it."""
    d = np.asarray(distance, dtype=float)
    if np.any(d < reference_distance):
        raise ValueError(f"distance below the {reference_distance} m reference distance")
    if frequency <= 0:
        raise ValueError("frequency must be positive")
    gains = db_to_linear(gain_tx_dbi) * db_to_linear(gain_rx_dbi)
    free_space = (SPEED_OF_LIGHT / (4 * np.pi * frequency * reference_distance)) ** 2
    out = gains * free_space * (reference_distance / d) ** exponent
    return float(out) if out.ndim == 0 else out


def generate_channels(scenario: SystemScenario, rng_seed: int, rician_factor_db: float | None = None,
                      config: ChannelConfig | None = None) -> ChannelSet:
    """Draw one block-fading realization of all user channels.

    ``rician_factor_db=np.inf`` gives pure line-of-sight channels.
    """
    config = config or ChannelConfig()
    if rician_factor_db is None:
        rician_factor_db = config.rician_factor_db
    K, Nt = scenario.num_users, scenario.num_antennas
    rng = np.random.default_rng(int(rng_seed) & 0xFFFFFFFFFFFFFFFF)
    distances = rng.uniform(*config.distance_range, size=K)
    angles = rng.uniform(*config.angle_range, size=K)
    nlos = (rng.standard_normal((K, Nt)) + 1j * rng.standard_normal((K, Nt))) / np.sqrt(2)
    loss = friis_path_loss(distances, config.frequency, config.gain_tx_dbi, config.gain_rx_dbi,
                           config.path_loss_exponent, config.reference_distance)
    loss = np.atleast_1d(loss)
    if np.isinf(rician_factor_db):
        w_los, w_nlos = 1.0, 0.0
    else:
        R = float(db_to_linear(rician_factor_db))
        w_los, w_nlos = np.sqrt(R / (1 + R)), np.sqrt(1 / (1 + R))
    h = np.empty((K, Nt), dtype=complex)
    for k in range(K):
        amp = np.sqrt(loss[k])
        h[k] = w_los * amp * los_steering(angles[k], Nt) + w_nlos * amp * nlos[k]
    return ChannelSet(h, distances, angles, loss)
