"""AMC mode tables, the exponential BER model and single-link mode selection.

A mode ``n >= 1`` has BER ``coeff * exp(-decay * gamma)`` at linear SNIR
``gamma``. Mode 0 is the outage mode: rate 0, nothing is sent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.special import erfc


class TableError(ValueError):
    """Raised for malformed or inconsistent AMC table documents."""


@dataclass(frozen=True)
class AmcMode:
    index: int
    rate: float
    coeff: float = 0.0
    decay: float = 0.0

    @property
    def is_outage(self) -> bool:
        return self.index == 0


@dataclass(frozen=True)
class BerTargets:
    """Application BER targets and the design margin applied to them.

    Thresholds used for design and mode selection are computed at
    ``target / design_margin``.
    """

    primary: float = 1e-3
    cognitive: float = 1e-3
    design_margin: float = 10.0

    def __post_init__(self):
        for name in ("primary", "cognitive"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} BER target must lie in (0, 1), got {value}")
        if self.design_margin < 1.0:
            raise ValueError(f"design_margin must be >= 1, got {self.design_margin}")

    @property
    def design_primary(self) -> float:
        return self.primary / self.design_margin

    @property
    def design_cognitive(self) -> float:
        return self.cognitive / self.design_margin


def ber(gamma, mode: AmcMode):
    """BER of ``mode`` at linear SNIR ``gamma`` (scalar or array)."""
    if mode.is_outage:
        raise ValueError("BER is undefined for mode 0 (no transmission)")
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise ValueError("SNIR must be non-negative")
    out = mode.coeff * np.exp(-mode.decay * gamma)
    return float(out) if out.ndim == 0 else out


def snir_threshold(mode: AmcMode, target: float) -> float:
    """Minimum SNIR at which ``mode`` meets the BER ``target``."""
    if mode.is_outage:
        raise ValueError("mode 0 has no SNIR threshold")
    if target <= 0:
        raise ValueError(f"BER target must be positive, got {target}")
    if target > mode.coeff:
        raise ValueError(
            f"BER target {target} exceeds the fit coefficient {mode.coeff} of mode {mode.index}"
        )
    return -math.log(target / mode.coeff) / mode.decay


@dataclass(frozen=True)
class AmcTable:
    modes: tuple[AmcMode, ...]

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        _validate_modes(self.modes)

    @property
    def n_modes(self) -> int:
        """Number of transmitting modes (the table holds ``n_modes + 1`` entries)."""
        return len(self.modes) - 1

    @property
    def rates(self) -> np.ndarray:
        return np.array([m.rate for m in self.modes])

    @property
    def max_rate(self) -> float:
        return self.modes[-1].rate

    def __getitem__(self, index: int) -> AmcMode:
        return self.modes[index]

    def __len__(self) -> int:
        return len(self.modes)

    def thresholds(self, target: float) -> np.ndarray:
        """SNIR thresholds ``[0, g(R_1), ..., g(R_N)]`` at BER ``target``.

        Index 0 is the outage mode, whose threshold is 0 by convention.
        """
        return np.array([0.0] + [snir_threshold(m, target) for m in self.modes[1:]])

    def check_targets(self, *targets: float) -> None:
        """Reject the table if thresholds are not strictly increasing at any target."""
        for target in targets:
            if target > min(m.coeff for m in self.modes[1:]):
                raise TableError(f"BER target {target} exceeds a fit coefficient of the table")
            th = self.thresholds(target)[1:]
            bad = np.flatnonzero(np.diff(th) <= 0)
            if bad.size:
                n = int(bad[0]) + 1
                raise TableError(
                    f"SNIR thresholds not increasing at BER {target}: "
                    f"mode {n + 1} needs {th[n]:.4g} <= mode {n} needs {th[n - 1]:.4g}"
                )

    def select_index(self, gamma, target: float):
        """Vectorised mode selection; returns mode indices (0 = outage)."""
        th = self.thresholds(target)[1:]
        idx = np.searchsorted(th, np.asarray(gamma, dtype=float), side="right")
        return int(idx) if np.ndim(idx) == 0 else idx

    def select_rate(self, gamma, target: float):
        idx = self.select_index(gamma, target)
        rates = self.rates
        return float(rates[idx]) if np.ndim(idx) == 0 else rates[idx]


def _validate_modes(modes) -> None:
    if len(modes) < 2:
        raise TableError("a table needs the outage mode and at least one transmitting mode")
    for pos, m in enumerate(modes):
        if m.index != pos:
            raise TableError(f"mode at position {pos} has index {m.index}")
    if modes[0].rate != 0:
        raise TableError("mode 0 must have rate 0")
    for prev, cur in zip(modes, modes[1:]):
        if not cur.rate > prev.rate:
            raise TableError(
                f"rates must be strictly increasing: mode {cur.index} rate {cur.rate} "
                f"<= mode {prev.index} rate {prev.rate}"
            )
    for m in modes[1:]:
        if not (m.coeff > 0 and m.decay > 0):
            raise TableError(f"mode {m.index} needs positive coeff and decay")


def select_mode(gamma: float, table: AmcTable, target: float) -> AmcMode:
    """Highest-rate mode whose threshold does not exceed ``gamma``."""
    if gamma < 0:
        raise ValueError("SNIR must be non-negative")
    return table[table.select_index(gamma, target)]


def fit_mode_constants(samples) -> tuple[float, float]:
    """Least-squares fit of ``ln(ber) = ln(coeff) - decay * gamma``.

    Parameters
    ----------
    samples : iterable of (gamma, ber) pairs
        At least two points with distinct SNIRs and BER in (0, 1).

    Returns
    -------
    (coeff, decay)
    """
    pts = np.asarray(list(samples), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
        raise ValueError("need at least two (gamma, ber) samples")
    gamma, p = pts[:, 0], pts[:, 1]
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("BER samples must lie in (0, 1)")
    if np.unique(gamma).size < 2:
        raise ValueError("SNIR samples must not all coincide")
    slope, intercept = np.polyfit(gamma, np.log(p), 1)
    decay = -slope
    if decay <= 0:
        raise ValueError(f"fitted decay {decay:.4g} is not positive")
    return float(math.exp(intercept)), float(decay)


# --- default table -----------------------------------------------------------

DEFAULT_RATES = (0.0, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0)

# (bits per symbol, code rate) of the convolutionally coded modes; the product
# is the spectral efficiency.
REFERENCE_MODES = ((1, 1 / 2), (1, 3 / 4), (2, 1 / 2), (2, 3 / 4), (4, 1 / 2), (4, 3 / 4), (6, 2 / 3))

# Effective soft-decision coding gains (dB) of the K=7 code and its punctured rates.
CODING_GAIN_DB = {1 / 2: 5.0, 2 / 3: 4.4, 3 / 4: 4.0}

FIT_BER_RANGE = (1e-6, 1e-2)


def reference_ber(gamma, bits_per_symbol: int, code_rate: float):
    """Synthetic coded Gray-QAM BER curve used to derive the default table.

    Uncoded Gray-mapped BPSK/QAM bit error probability evaluated at the
    information-bit Eb/N0 raised by an effective coding gain.
    """
    gamma = np.asarray(gamma, dtype=float)
    gain = 10 ** (CODING_GAIN_DB[code_rate] / 10)
    ebn0 = gamma / (bits_per_symbol * code_rate) * gain
    q = lambda x: 0.5 * erfc(x / math.sqrt(2))  # noqa: E731
    if bits_per_symbol == 1:
        return q(np.sqrt(2 * ebn0))
    m = 2**bits_per_symbol
    return (4 / bits_per_symbol) * (1 - 1 / math.sqrt(m)) * q(
        np.sqrt(3 * bits_per_symbol / (m - 1) * ebn0)
    )


def _reference_samples(bits_per_symbol, code_rate, n_points=64):
    lo, hi = FIT_BER_RANGE
    gmax = 1.0
    while reference_ber(gmax, bits_per_symbol, code_rate) > lo:
        gmax *= 2
    grid = np.linspace(0, gmax, 20001)
    p = reference_ber(grid, bits_per_symbol, code_rate)
    inside = grid[(p >= lo) & (p <= hi)]
    gammas = np.linspace(inside[0], inside[-1], n_points)
    return list(zip(gammas, reference_ber(gammas, bits_per_symbol, code_rate)))


def build_default_table() -> AmcTable:
    """Fit the exponential model to the reference curves of the 802.11a-style modes."""
    modes = [AmcMode(0, 0.0)]
    for n, (rate, (b, rc)) in enumerate(zip(DEFAULT_RATES[1:], REFERENCE_MODES), start=1):
        coeff, decay = fit_mode_constants(_reference_samples(b, rc))
        modes.append(AmcMode(n, rate, coeff, decay))
    return AmcTable(tuple(modes))


# --- table documents ---------------------------------------------------------

DEFAULT_CHECK_TARGETS = (1e-3, 1e-4)


def parse_table(text: str, check_targets=DEFAULT_CHECK_TARGETS) -> AmcTable:
    """Parse a table document (``index rate coeff decay`` per line, ``#`` comments)."""
    modes = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 4:
            raise TableError(f"line {lineno}: expected 'index rate coeff decay', got {raw!r}")
        try:
            index, rate = int(fields[0]), float(fields[1])
        except ValueError as exc:
            raise TableError(f"line {lineno}: {exc}") from None
        if index == 0:
            if fields[2:] != ["-", "-"]:
                raise TableError(f"line {lineno}: mode 0 must be written as '0 0 - -'")
            modes.append(AmcMode(0, rate))
            continue
        if "-" in fields[2:]:
            raise TableError(f"line {lineno}: mode {index} is missing its fit constants")
        try:
            modes.append(AmcMode(index, rate, float(fields[2]), float(fields[3])))
        except ValueError as exc:
            raise TableError(f"line {lineno}: {exc}") from None
    modes.sort(key=lambda m: m.index)
    table = AmcTable(tuple(modes))
    if check_targets:
        table.check_targets(*check_targets)
    return table


def load_table(source=None, check_targets=DEFAULT_CHECK_TARGETS) -> AmcTable:
    """Load a table document from a path, or the shipped default when ``source`` is None."""
    if source is None:
        text = resources.files("cogamc.data").joinpath("default_table.txt").read_text("utf-8")
    else:
        text = Path(source).read_text(encoding="utf-8")
    return parse_table(text, check_targets)


def format_table(table: AmcTable, header: str = "") -> str:
    lines = [f"# {h}" for h in header.splitlines()] if header else []
    lines.append("# index rate coeff decay")
    for m in table.modes:
        if m.is_outage:
            lines.append(f"{m.index} {m.rate:g} - -")
        else:
            lines.append(f"{m.index} {m.rate:g} {m.coeff:.10g} {m.decay:.10g}")
    return "\n".join(lines) + "\n"
