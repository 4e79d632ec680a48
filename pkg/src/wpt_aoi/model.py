"""System parameters and derived constants shared by the analytic and simulation code.

A master node with a fixed power supply alternates between sending data packets
to a slave node (FCFS queue, Bernoulli(p) arrivals per block) and transferring
energy to it during idle blocks.  Both links see block Rayleigh fading in the
low-SNR regime, so the nats deliverable in one block are exponentially
distributed.  Everything downstream is parameterized by a handful of constants
computed here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class InvalidParameterError(ValueError):
    """A field of SystemParams violates its range constraint."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class ConfigError(ValueError):
    """A parameter config file could not be parsed."""


# config keys, in canonical order; "lambda" is a keyword so the dataclass
# field is named lam
_FIELD_MAP = {
    "P_t": "P_t",
    "W": "W",
    "N0": "N0",
    "lambda": "lam",
    "T_B": "T_B",
    "eta": "eta",
    "ell": "ell",
    "p": "p",
}


@dataclass(frozen=True)
class SystemParams:
    """Physical and protocol parameters of the two-way link.

    P_t   transmit power (W), shared by data transmission and energy transfer
    W     system bandwidth (Hz)
    N0    noise spectral density (W/Hz)
    lam   Rayleigh power-gain rate; gain ~ Exponential(lam), mean 1/lam
    T_B   block length (s)
    eta   energy-transfer efficiency, in (0, 1]
    ell   packet length (nats)
    p     downlink data rate: per-block packet-generation probability, in [0, 1)
    """

    P_t: float
    W: float
    N0: float
    lam: float
    T_B: float
    eta: float
    ell: float
    p: float

    def __post_init__(self):
        for name in ("P_t", "W", "N0", "lam", "T_B", "eta", "ell"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise InvalidParameterError(name, f"must be strictly positive, got {v!r}")
        if self.eta > 1:
            raise InvalidParameterError("eta", f"must be <= 1, got {self.eta!r}")
        if not (0 <= self.p < 1):
            raise InvalidParameterError("p", f"must be in [0, 1), got {self.p!r}")

    @property
    def avg_snr(self) -> float:
        """Mean received SNR, E[gain]*P_t/(W*N0).

        The per-block nat count uses the low-SNR linearization of the Shannon
        rate; callers should check this is well below 1 before trusting it.
        """
        return self.P_t / (self.W * self.N0 * self.lam)


@dataclass(frozen=True)
class DerivedParams:
    """Constants computed once from SystemParams.

    theta  mean extra service blocks per packet (E[S] = 1 + theta)
    m      lam/eta, mean idle blocks to harvest one block's transmit energy
    mu     lam/(eta*P_t*T_B), rate of the Erlang harvested-energy law (1/J)
    p_max  1/(1+theta), the downlink rate above which the queue is unstable
    """

    theta: float
    m: float
    mu: float
    p_max: float


def derive(params: SystemParams) -> DerivedParams:
    """Compute theta, m, mu and the stability boundary p_max."""
    theta = params.lam * params.N0 * params.ell / (params.P_t * params.T_B)
    m = params.lam / params.eta
    mu = params.lam / (params.eta * params.P_t * params.T_B)
    return DerivedParams(theta=theta, m=m, mu=mu, p_max=1.0 / (1.0 + theta))


def is_stable(params: SystemParams, derived: DerivedParams) -> bool:
    """True iff (theta+1)*p < 1 (strict: p == p_max counts as unstable)."""
    return (derived.theta + 1.0) * params.p < 1.0


def parse_config(text: str, overrides: dict | None = None) -> SystemParams:
    """Parse a flat key=value config into SystemParams.

    Blank lines and '#' comments are ignored.  Unknown keys and malformed
    lines raise ConfigError with the line number.  `overrides` (canonical
    field names) take precedence over file values.
    """
    values: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _FIELD_MAP:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        field = _FIELD_MAP[key]
        if field in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[field] = float(val.strip())
        except ValueError:
            raise ConfigError(f"line {lineno}: {key}: not a number: {val.strip()!r}") from None
    if overrides:
        values.update(overrides)
    missing = [k for k, f in _FIELD_MAP.items() if f not in values]
    if missing:
        raise ConfigError(f"missing keys: {', '.join(missing)}")
    try:
        return SystemParams(**values)
    except InvalidParameterError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, overrides: dict | None = None) -> SystemParams:
    """Read a config file from disk; see parse_config."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        return parse_config(text, overrides)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
