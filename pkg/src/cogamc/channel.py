"""Block-fading channel statistics, sampling and SNIR computation.

Gains follow the ``s[i][j]`` = Tx_i -> Rx_j convention: link 1 is the
primary, link 2 the cognitive link, so ``s21`` is the interference the
cognitive transmitter puts on the primary receiver.  Power gains are
exponential (Rayleigh envelopes) with the configured means.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .amc_model import BerTargets


def make_rng(seed: int, stream: int | None = None) -> np.random.Generator:
    """Counter-based generator; ``stream`` selects an independent substream."""
    spawn_key = () if stream is None else (stream,)
    ss = np.random.SeedSequence(entropy=seed, spawn_key=spawn_key)
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class PathLossGeometry:
    exponent: float = 3.0
    tx_separation: float = 1.0


def pathloss_means(geometry: PathLossGeometry) -> dict[str, float]:
    """Mean gains for transceivers on a normalised rectangle."""
    if geometry.exponent <= 0:
        raise ValueError("path-loss exponent must be positive")
    if geometry.tx_separation < 0:
        raise ValueError("transmitter separation must be non-negative")
    cross = (1.0 + geometry.tx_separation**2) ** (-geometry.exponent / 2)
    return {"s11": 1.0, "s22": 1.0, "s12": cross, "s21": cross}


@dataclass(frozen=True)
class Scenario:
    s11: float = 1.0
    s12: float = 0.05
    s21: float = 0.05
    s22: float = 1.0
    noise_power: float = 1e-5
    primary_power: float = 1.0
    cognitive_power_budget: float = 1.0
    ber_targets: BerTargets = field(default_factory=BerTargets)
    required_primary_ase: float = 0.0
    underlay_pth: float | None = None
    tdma_tau: float | None = None

    def __post_init__(self):
        for name in ("s11", "s12", "s21", "s22"):
            if not getattr(self, name) > 0:
                raise ValueError(f"mean gain {name} must be positive")
        if not self.noise_power > 0:
            raise ValueError("noise_power must be positive")
        if not self.primary_power > 0:
            raise ValueError("primary_power must be positive")
        if self.cognitive_power_budget < 0:
            raise ValueError("cognitive_power_budget must be non-negative")
        if self.required_primary_ase < 0:
            raise ValueError("required_primary_ase must be non-negative")

    @property
    def mean_gain(self) -> np.ndarray:
        """2x2 array ``[[s11, s12], [s21, s22]]`` of mean power gains."""
        return np.array([[self.s11, self.s12], [self.s21, self.s22]])

    def with_requirement(self, k1: float) -> "Scenario":
        return replace(self, required_primary_ase=k1)


@dataclass(frozen=True)
class FadingSample:
    """Realised power gains of one block, or of a batch of blocks (arrays)."""

    s11: np.ndarray
    s12: np.ndarray
    s21: np.ndarray
    s22: np.ndarray

    def __len__(self):
        return np.size(self.s11)


@dataclass(frozen=True)
class ScaledSnir:
    alpha: np.ndarray
    beta: np.ndarray


def _positive_exponential(rng, mean, size):
    x = rng.exponential(mean, size)
    if np.ndim(x) == 0:
        while x <= 0:
            x = rng.exponential(mean)
        return x
    zero = x <= 0
    while zero.any():
        x[zero] = rng.exponential(mean, int(zero.sum()))
        zero = x <= 0
    return x


def sample_block(scenario: Scenario, rng: np.random.Generator, size=None) -> FadingSample:
    """Draw independent exponential power gains for ``size`` blocks.

    Exact zeros (floating-point underflow only) are redrawn so that scaled
    SNIRs are always defined.
    """
    # Draw order is part of the reproducibility contract.
    s11 = _positive_exponential(rng, scenario.s11, size)
    s12 = _positive_exponential(rng, scenario.s12, size)
    s21 = _positive_exponential(rng, scenario.s21, size)
    s22 = _positive_exponential(rng, scenario.s22, size)
    return FadingSample(s11, s12, s21, s22)


def snir(sample: FadingSample, p1, p2, n0):
    """Signal to interference-plus-noise ratios ``(gamma1, gamma2)``."""
    gamma1 = p1 * sample.s11 / (p2 * sample.s21 + n0)
    gamma2 = p2 * sample.s22 / (p1 * sample.s12 + n0)
    return gamma1, gamma2


def scaled_snirs(sample: FadingSample) -> ScaledSnir:
    """Interference-limited SNIRs with transmit powers factored out."""
    return ScaledSnir(alpha=sample.s11 / sample.s21, beta=sample.s22 / sample.s12)


def ratio_cdf(z, direct_mean: float, cross_mean: float):
    """CDF of ``s_direct / s_cross`` for independent exponential gains."""
    z = np.asarray(z, dtype=float)
    return np.where(z > 0, 1.0 - 1.0 / (1.0 + np.maximum(z, 0) * cross_mean / direct_mean), 0.0)


def alpha_cdf(z, scenario: Scenario):
    return ratio_cdf(z, scenario.s11, scenario.s21)


def beta_cdf(z, scenario: Scenario):
    return ratio_cdf(z, scenario.s22, scenario.s12)


# --- scenario documents ------------------------------------------------------

_FLOAT_KEYS = {
    "s11_mean": "s11",
    "s12_mean": "s12",
    "s21_mean": "s21",
    "s22_mean": "s22",
    "n0": "noise_power",
    "p1": "primary_power",
    "p2_budget": "cognitive_power_budget",
    "k1_required": "required_primary_ase",
    "underlay_pth": "underlay_pth",
    "tdma_tau": "tdma_tau",
}
_BER_KEYS = {"b1": "primary", "b2": "cognitive", "design_margin": "design_margin"}
_GEOMETRY_KEYS = ("pathloss_d", "pathloss_e")


def parse_scenario_values(text: str) -> dict[str, float]:
    """Parse ``key = value`` lines into a dict, rejecting unknown keys."""
    known = set(_FLOAT_KEYS) | set(_BER_KEYS) | set(_GEOMETRY_KEYS)
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ValueError(f"line {lineno}: unknown scenario key {key!r}")
        try:
            values[key] = float(value)
        except ValueError:
            raise ValueError(f"line {lineno}: value of {key!r} is not a number: {value!r}") from None
    return values


def scenario_from_values(values: dict[str, float], base: Scenario | None = None) -> Scenario:
    """Build a scenario from document keys; unspecified keys keep ``base`` values."""
    base = base or Scenario()
    kwargs = {}
    if "pathloss_d" in values or "pathloss_e" in values:
        if any(k in values for k in ("s11_mean", "s12_mean", "s21_mean", "s22_mean")):
            raise ValueError("give either explicit mean gains or pathloss_d/pathloss_e, not both")
        geometry = PathLossGeometry(
            exponent=values.get("pathloss_e", PathLossGeometry.exponent),
            tx_separation=values.get("pathloss_d", PathLossGeometry.tx_separation),
        )
        kwargs.update(pathloss_means(geometry))
    for key, attr in _FLOAT_KEYS.items():
        if key in values:
            kwargs[attr] = values[key]
    ber_kwargs = {attr: values[key] for key, attr in _BER_KEYS.items() if key in values}
    if ber_kwargs:
        kwargs["ber_targets"] = replace(base.ber_targets, **ber_kwargs)
    return replace(base, **kwargs)


def load_scenario(path, base: Scenario | None = None) -> Scenario:
    return scenario_from_values(parse_scenario_values(Path(path).read_text(encoding="utf-8")), base)


def format_scenario(scenario: Scenario) -> str:
    t = scenario.ber_targets
    rows = [
        ("s11_mean", scenario.s11),
        ("s12_mean", scenario.s12),
        ("s21_mean", scenario.s21),
        ("s22_mean", scenario.s22),
        ("n0", scenario.noise_power),
        ("p1", scenario.primary_power),
        ("p2_budget", scenario.cognitive_power_budget),
        ("b1", t.primary),
        ("b2", t.cognitive),
        ("design_margin", t.design_margin),
        ("k1_required", scenario.required_primary_ase),
    ]
    if scenario.underlay_pth is not None:
        rows.append(("underlay_pth", scenario.underlay_pth))
    if scenario.tdma_tau is not None:
        rows.append(("tdma_tau", scenario.tdma_tau))
    return "".join(f"{k} = {v!r}\n" for k, v in rows)


CHUNK_SIZE = 1 << 17


def iter_sample_chunks(scenario: Scenario, n_samples: int, seed: int, chunk_size: int = CHUNK_SIZE):
    """Yield ``(chunk_index, FadingSample)`` batches totalling ``n_samples`` blocks.

    Chunk ``k`` always comes from substream ``k`` of ``seed``, so results do
    not depend on how chunks are distributed over workers.
    """
    n_chunks = -(-n_samples // chunk_size)
    for k in range(n_chunks):
        size = min(chunk_size, n_samples - k * chunk_size)
        yield k, sample_block(scenario, make_rng(seed, k), size)
