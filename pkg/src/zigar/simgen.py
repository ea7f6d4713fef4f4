"""Synthetic data generator for the simulation study.

Latent intensities are multivariate lognormal with a block hub correlation
structure (4 groups of 50; groups 1-3 hub-correlated, group 4 independent).
Zeros of two kinds are layered on top: structural zeros (Bernoulli absence,
drawn per cell) and sampling zeros (deterministic thresholding below a
per-column lognormal quantile).  Outcomes come from the linear model

    y = b0 + a * U @ beta_u + (1 - a) * P @ beta_d + eps,

where P is the structural presence matrix, U is the log intensity with
absent cells filled at the latent log mean, the mixing weight a and the
noise variance are calibrated on a large pilot draw to hit a target R^2,
and eps is Gaussian.  The analyst-facing matrix additionally carries the
sampling zeros, so the modelling task never sees the clean split.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.special import ndtri

from .errors import ConfigError, InvalidInputError
from .preprocess import IntensityMatrix
from .rng import make_rng

OGMS = ("A", "B", "C")
MAX_ZEROS = (0.25, 0.5, 0.75)
STRUCTURAL_SHARES = (1.0 / 3.0, 2.0 / 3.0)
TARGET_R2S = (0.3, 0.6, 1.0)
UD_SETTINGS = ("U", "U=D", "U=2D")
N_TRAINS = (100, 200, 400)

DEFAULT_MASTER_SEED = 2024
MU_LOG = 10.0
SD_LOG = 1.0
RHO_HUB_MAX = 0.9
RHO_HUB_MIN = 0.1


def predictor_ids(q: int) -> list:
    return [f"p{j + 1:03d}" for j in range(q)]


# ---------------------------------------------------------------------------
# Configuration and ground truth
# ---------------------------------------------------------------------------

@dataclass
class ScenarioConfig:
    """One cell of the simulation factorial."""

    scenario_id: int
    ogm: str
    n_train: int
    max_zero: float
    structural_share: float
    target_r2: float
    ud_setting: str
    q: int = 200
    n_groups: int = 4
    group_size: int = 50
    reps: int = 500
    n_valid: int = 100_000
    master_seed: int = DEFAULT_MASTER_SEED

    def __post_init__(self):
        if self.ogm not in OGMS:
            raise ConfigError(f"unknown outcome-generating mechanism {self.ogm!r}")
        if self.ud_setting not in UD_SETTINGS:
            raise ConfigError(f"unknown UD setting {self.ud_setting!r}")
        if not 0 <= self.max_zero < 1:
            raise ConfigError("max_zero must lie in [0, 1)")
        if not 0 <= self.structural_share <= 1:
            raise ConfigError("structural_share must lie in [0, 1]")
        if not 0 < self.target_r2 <= 1:
            raise ConfigError("target_r2 must lie in (0, 1]")
        if self.q != self.n_groups * self.group_size:
            raise ConfigError("q must equal n_groups * group_size")

    def column_ids(self) -> list:
        return predictor_ids(self.q)


@dataclass
class GroundTruth:
    """Realized coefficients and calibrated nuisance parameters of a scenario."""

    beta_u: np.ndarray
    beta_d: np.ndarray
    beta0: float
    true_idx: np.ndarray       # indices with any nonzero coefficient
    a: float
    sigma2: float

    def __post_init__(self):
        if not 0 <= self.a <= 1:
            raise ConfigError("mixing weight must lie in [0, 1]")
        if self.sigma2 < 0:
            raise ConfigError("noise variance must be nonnegative")

    def true_ids(self, q: Optional[int] = None) -> list:
        ids = predictor_ids(q if q is not None else self.beta_u.shape[0])
        return [ids[j] for j in self.true_idx]


@dataclass
class ValidationSet:
    Z_a: IntensityMatrix
    y: np.ndarray


@dataclass
class SimulatedDataset:
    Z_a: IntensityMatrix
    y: np.ndarray
    truth: GroundTruth
    rep_index: int
    validation: Optional[ValidationSet] = None


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------

def hub_sigma(n_groups: int = 4, group_size: int = 50,
              rho_hub_max: float = RHO_HUB_MAX, rho_hub_min: float = RHO_HUB_MIN) -> np.ndarray:
    """Block-diagonal correlation matrix with hub blocks and one identity block.

    In each of the first n_groups - 1 blocks the leading variable is the
    hub; correlation with the hub declines linearly from rho_hub_max (second
    variable) to rho_hub_min (last), and two non-hub variables i, j correlate
    as the product of their hub correlations.  That product form is a
    single-factor construction, so the matrix is positive definite by
    construction.  The last block is the identity.
    """
    if not 0 <= rho_hub_min <= rho_hub_max < 1:
        raise ConfigError("hub correlations must satisfy 0 <= min <= max < 1")
    if group_size < 3:
        raise ConfigError("hub blocks need at least 3 variables")
    q = n_groups * group_size
    sigma = np.eye(q)
    ranks = np.arange(2, group_size + 1, dtype=np.float64)
    rho = rho_hub_max - (ranks - 2) * (rho_hub_max - rho_hub_min) / (group_size - 2)
    loadings = np.concatenate([[1.0], rho])
    block = np.outer(loadings, loadings)
    np.fill_diagonal(block, 1.0)
    for g in range(n_groups - 1):
        lo = g * group_size
        sigma[lo:lo + group_size, lo:lo + group_size] = block
    return sigma


@lru_cache(maxsize=8)
def _hub_cholesky(n_groups: int, group_size: int,
                  rho_hub_max: float, rho_hub_min: float) -> np.ndarray:
    sigma = hub_sigma(n_groups, group_size, rho_hub_max, rho_hub_min)
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise InvalidInputError("correlation matrix is not positive definite") from exc


def sample_latent(n: int, sigma: np.ndarray, mu_log: float = MU_LOG,
                  sd_log: float = SD_LOG, rng=None) -> np.ndarray:
    """Lognormal draw: exp of a Gaussian with mean mu_log and covariance sd^2 sigma."""
    rng = rng if rng is not None else np.random.default_rng()
    try:
        L = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise InvalidInputError("correlation matrix is not positive definite") from exc
    G = rng.standard_normal((n, sigma.shape[0]))
    return np.exp(mu_log + sd_log * (G @ L.T))


def zero_profiles(config: ScenarioConfig):
    """Per-predictor structural and sampling zero proportions.

    Within each group the total zero share ramps linearly from 0 at the hub
    to max_zero at the last variable; the split between structural and
    sampling zeros is the scenario's structural_share.
    """
    ramp = config.max_zero * np.arange(config.group_size) / (config.group_size - 1)
    total = np.tile(ramp, config.n_groups)
    return config.structural_share * total, (1.0 - config.structural_share) * total


def inject_structural_zeros(Z: np.ndarray, p_struc: np.ndarray, rng):
    """Bernoulli presence per cell; returns (Z with absences zeroed, presence)."""
    if np.any(p_struc < 0) or np.any(p_struc >= 1):
        raise ConfigError("structural zero proportions must lie in [0, 1)")
    presence = rng.random(Z.shape) >= p_struc
    return Z * presence, presence


def inject_sampling_zeros(Z_D: np.ndarray, p_samp: np.ndarray,
                          mu_log: float = MU_LOG, sd_log: float = SD_LOG) -> np.ndarray:
    """Zero every entry below its column's theoretical lognormal quantile."""
    if np.any(p_samp < 0) or np.any(p_samp >= 1):
        raise ConfigError("sampling zero proportions must lie in [0, 1)")
    with np.errstate(divide="ignore", over="ignore"):
        thresholds = np.exp(mu_log + sd_log * ndtri(p_samp))
    return np.where(Z_D < thresholds, 0.0, Z_D)


def ogm_coefficients(ogm: str, config: ScenarioConfig, rng):
    """True coefficient vectors for both components plus the true index set.

    A: every predictor in groups 1 and 3 carries a coefficient from an
       equally spaced grid on [0.1, 1], shared by both components.
    B: the first five predictors of every group carry coefficients from an
       equally spaced grid on [1, 2], ordered independently (and randomly)
       for the two components.
    C: groups 1 and 3 again, grid on [0.1, 0.4], identical components.
    """
    q, gs = config.q, config.group_size
    beta_u = np.zeros(q)
    beta_d = np.zeros(q)
    if ogm in ("A", "C"):
        hi = 1.0 if ogm == "A" else 0.4
        vals = np.linspace(0.1, hi, gs)
        for g in (0, 2):
            lo = g * gs
            beta_u[lo:lo + gs] = vals
            beta_d[lo:lo + gs] = vals
    elif ogm == "B":
        vals = np.linspace(1.0, 2.0, 5)
        for g in range(config.n_groups):
            lo = g * gs
            beta_u[lo:lo + 5] = vals[rng.permutation(5)]
            beta_d[lo:lo + 5] = vals[rng.permutation(5)]
    else:
        raise ConfigError(f"unknown outcome-generating mechanism {ogm!r}")
    true_idx = np.nonzero((beta_u != 0) | (beta_d != 0))[0]
    return beta_u, beta_d, true_idx


def calibrate(config: ScenarioConfig, beta_u: np.ndarray, beta_d: np.ndarray,
              rng, pilot_n: int = 100_000):
    """Mixing weight, noise variance and intercept from a large pilot draw.

    The weight a balances the variance contributions of the two components
    according to the UD setting; the noise variance then scales the total
    signal variance to the target R^2 (exactly zero noise at target 1).
    """
    L = _hub_cholesky(config.n_groups, config.group_size, RHO_HUB_MAX, RHO_HUB_MIN)
    G = rng.standard_normal((pilot_n, config.q))
    logZ = MU_LOG + SD_LOG * (G @ L.T)
    del G
    p_struc, _ = zero_profiles(config)
    presence = rng.random(logZ.shape) >= p_struc
    U = np.where(presence, logZ, MU_LOG)
    del logZ
    t_u = U @ beta_u
    del U
    t_d = presence @ beta_d.astype(np.float64)
    del presence
    if config.ud_setting == "U":
        a = 1.0
    else:
        ratio = 1.0 if config.ud_setting == "U=D" else 2.0
        var_u, var_d = t_u.var(), t_d.var()
        if var_u <= 0 or var_d <= 0:
            raise ConfigError("component contribution has zero variance; "
                              "check the coefficient specification")
        t = math.sqrt(ratio * var_d / var_u)
        a = t / (1.0 + t)
    signal_var = (a * t_u + (1.0 - a) * t_d).var()
    if signal_var <= 0:
        raise ConfigError("signal variance is zero under this configuration")
    if config.target_r2 == 1.0:
        sigma2 = 0.0
    else:
        sigma2 = signal_var * (1.0 - config.target_r2) / config.target_r2
    return a, float(sigma2), 0.0


def build_truth(config: ScenarioConfig) -> GroundTruth:
    """Coefficients plus calibration for one scenario (deterministic in the seed)."""
    rng_coef = make_rng(config.master_seed, config.scenario_id, "coef")
    beta_u, beta_d, true_idx = ogm_coefficients(config.ogm, config, rng_coef)
    rng_pilot = make_rng(config.master_seed, config.scenario_id, "pilot")
    a, sigma2, beta0 = calibrate(config, beta_u, beta_d, rng_pilot)
    return GroundTruth(beta_u=beta_u, beta_d=beta_d, beta0=beta0,
                       true_idx=true_idx, a=a, sigma2=sigma2)


# ---------------------------------------------------------------------------
# Dataset assembly
# ---------------------------------------------------------------------------

def _draw_block(config: ScenarioConfig, truth: GroundTruth, n: int,
                rng_latent, rng_struct, rng_noise):
    """One (analyst matrix, outcome) block of n rows.

    The outcome sees only the structural zeros; the sampling zeros (a
    deterministic threshold on the already-zeroed matrix) degrade only the
    analyst-facing intensities.
    """
    L = _hub_cholesky(config.n_groups, config.group_size, RHO_HUB_MAX, RHO_HUB_MIN)
    G = rng_latent.standard_normal((n, config.q))
    Z = np.exp(MU_LOG + SD_LOG * (G @ L.T))
    del G
    p_struc, p_samp = zero_profiles(config)
    presence = rng_struct.random(Z.shape) >= p_struc
    logZ = np.log(Z)
    U = np.where(presence, logZ, MU_LOG)
    del logZ
    signal = truth.a * (U @ truth.beta_u) + (1.0 - truth.a) * (presence @ truth.beta_d)
    del U
    noise = rng_noise.standard_normal(n) * math.sqrt(truth.sigma2)
    y = truth.beta0 + signal + noise
    Z_a = inject_sampling_zeros(Z * presence, p_samp)
    del Z, presence
    return IntensityMatrix(Z_a, config.column_ids()), y


def make_validation(config: ScenarioConfig, truth: GroundTruth) -> ValidationSet:
    """The scenario's single validation block, shared by all replicates."""
    Z_a, y = _draw_block(
        config, truth, config.n_valid,
        make_rng(config.master_seed, config.scenario_id, "valid", "latent"),
        make_rng(config.master_seed, config.scenario_id, "valid", "struct"),
        make_rng(config.master_seed, config.scenario_id, "valid", "noise"))
    return ValidationSet(Z_a=Z_a, y=y)


def generate_replicate(config: ScenarioConfig, truth: GroundTruth, rep_index: int,
                       validation: Optional[ValidationSet] = None) -> SimulatedDataset:
    """Training block for one replicate; seeds derive from (seed, scenario, rep)."""
    Z_a, y = _draw_block(
        config, truth, config.n_train,
        make_rng(config.master_seed, config.scenario_id, "rep", rep_index, "latent"),
        make_rng(config.master_seed, config.scenario_id, "rep", rep_index, "struct"),
        make_rng(config.master_seed, config.scenario_id, "rep", rep_index, "noise"))
    return SimulatedDataset(Z_a=Z_a, y=y, truth=truth, rep_index=rep_index,
                            validation=validation)


def enumerate_scenarios(master_seed: int = DEFAULT_MASTER_SEED,
                        reps: int = 500, n_valid: int = 100_000) -> list:
    """The full factorial: 3 OGM x 3 zero levels x 2 splits x 3 R^2 x 3 UD x 3 n."""
    configs = []
    sid = 0
    for ogm in OGMS:
        for max_zero in MAX_ZEROS:
            for share in STRUCTURAL_SHARES:
                for r2 in TARGET_R2S:
                    for ud in UD_SETTINGS:
                        for n in N_TRAINS:
                            sid += 1
                            configs.append(ScenarioConfig(
                                scenario_id=sid, ogm=ogm, n_train=n,
                                max_zero=max_zero, structural_share=share,
                                target_r2=r2, ud_setting=ud,
                                reps=reps, n_valid=n_valid,
                                master_seed=master_seed))
    return configs
