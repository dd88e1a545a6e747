"""Stationary random roughness processes.

A wall is described by a finite trigonometric sum

    h(y) = mean + sum_k a_k sin(k_k * (y + offset) + phase_k)

which can be evaluated in closed form at any abscissa.  Three families are
provided:

* ``truncated-fourier``: fixed, rationally independent frequencies and
  independent uniform phases.  The phase vector lives on a torus on which
  the translation flow is ergodic, so the process is stationary and
  ergodic.
* ``shifted-periodic``: a fixed periodic profile F translated by one
  uniformly distributed shift, ``h(y) = F(y + U)``.
* ``flat-offset``: constant walls, used for closed-form baselines.

Amplitudes are budgeted so that values stay in (delta, 1 - delta) and the
Lipschitz constant stays below K without any clipping.
"""

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .config import get_float, get_int, load_kv, parse_kv
from .errors import ConfigurationError

KINDS = ("truncated-fourier", "shifted-periodic", "flat-offset")

# sqrt of distinct primes are linearly independent over the rationals.
_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53,
           59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113)


@dataclass(frozen=True)
class RoughnessSpec:
    kind: str = "truncated-fourier"
    mode_count: int = 8
    amplitude: float = 0.2
    delta: float = 0.05
    K: float = 4.0
    period: float = 1.0

    def __post_init__(self):
        validate_spec(self)

    def to_dict(self):
        return {"kind": self.kind, "modes": self.mode_count, "amplitude": self.amplitude,
                "delta": self.delta, "K": self.K, "period": self.period}

    @classmethod
    def from_mapping(cls, cfg):
        kind = str(cfg.get("kind", "truncated-fourier")).strip()
        return cls(kind=kind,
                   mode_count=get_int(cfg, "modes", cfg.get("mode_count", 8)),
                   amplitude=get_float(cfg, "amplitude", 0.2),
                   delta=get_float(cfg, "delta", 0.05),
                   K=get_float(cfg, "K", 4.0),
                   period=get_float(cfg, "period", 1.0))

    @classmethod
    def from_file(cls, path):
        return cls.from_mapping(load_kv(path))

    @classmethod
    def from_text(cls, text):
        return cls.from_mapping(parse_kv(text))


def validate_spec(spec):
    if spec.kind not in KINDS:
        raise ConfigurationError(f"unknown roughness kind {spec.kind!r}; expected one of {KINDS}")
    if not spec.K > 0:
        raise ConfigurationError(f"Lipschitz cap K must be positive, got {spec.K}")
    if spec.amplitude + spec.delta >= 1:
        raise ConfigurationError(
            f"amplitude + delta = {spec.amplitude + spec.delta} must be < 1")
    if spec.kind == "flat-offset":
        if not 0 <= spec.amplitude < 1:
            raise ConfigurationError(f"flat-offset depth must lie in [0, 1), got {spec.amplitude}")
        return
    if spec.mode_count < 1:
        raise ConfigurationError(f"mode_count must be >= 1, got {spec.mode_count}")
    if not 0 < spec.delta < 0.5:
        raise ConfigurationError(f"clamp margin delta must lie in (0, 0.5), got {spec.delta}")
    if not 0 < spec.amplitude < 0.5 - spec.delta:
        # mean is 1/2, so the range invariant needs amplitude < 1/2 - delta
        raise ConfigurationError(
            f"amplitude {spec.amplitude} must lie in (0, 0.5 - delta) = (0, {0.5 - spec.delta})")
    if not spec.period > 0:
        raise ConfigurationError(f"period must be positive, got {spec.period}")
    if spec.kind == "shifted-periodic":
        n = spec.mode_count
        lip = 2 * math.pi / spec.period * spec.amplitude / n * sum(range(1, n + 1))
        if lip > spec.K:
            raise ConfigurationError(
                f"periodic profile has Lipschitz bound {lip:.4g} > K = {spec.K}")
    if spec.kind == "truncated-fourier" and spec.mode_count > len(_PRIMES):
        raise ConfigurationError(f"at most {len(_PRIMES)} Fourier modes are supported")


@dataclass(frozen=True)
class WallProcess:
    """Coefficient record of one wall: mean + sum a sin(k y + phase)."""

    mean: float
    freq: np.ndarray
    amp: np.ndarray
    phase: np.ndarray

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if self.freq.size == 0:
            return np.full(y.shape, self.mean)
        arg = y[..., None] * self.freq + self.phase
        return self.mean + np.sin(arg) @ self.amp

    def derivative(self, y):
        y = np.asarray(y, dtype=float)
        if self.freq.size == 0:
            return np.zeros(y.shape)
        arg = y[..., None] * self.freq + self.phase
        return np.cos(arg) @ (self.amp * self.freq)

    @property
    def sup(self):
        return self.mean + float(np.sum(np.abs(self.amp)))

    @property
    def inf(self):
        return self.mean - float(np.sum(np.abs(self.amp)))

    @property
    def lipschitz_bound(self):
        return float(np.sum(np.abs(self.amp * self.freq)))

    def to_list(self):
        return [[float(k), float(a), float(p)] for k, a, p in zip(self.freq, self.amp, self.phase)]

    @classmethod
    def from_list(cls, mean, triples):
        arr = np.asarray(triples, dtype=float).reshape(-1, 3)
        return cls(float(mean), arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy())


@dataclass(frozen=True)
class BoundaryPair:
    seed: int
    spec: RoughnessSpec
    lower: WallProcess
    upper: WallProcess
    offset: float = 0.0
    window: float = None
    metadata: dict = field(default_factory=dict, compare=False)

    def to_dict(self):
        return {
            "spec": self.spec.to_dict(),
            "seed": self.seed,
            "coefficients": {
                "lower": {"mean": self.lower.mean, "terms": self.lower.to_list()},
                "upper": {"mean": self.upper.mean, "terms": self.upper.to_list()},
                "offset": self.offset,
                "window": self.window,
            },
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, d):
        spec = RoughnessSpec.from_mapping(d["spec"])
        c = d["coefficients"]
        return cls(seed=int(d["seed"]), spec=spec,
                   lower=WallProcess.from_list(c["lower"]["mean"], c["lower"]["terms"]),
                   upper=WallProcess.from_list(c["upper"]["mean"], c["upper"]["terms"]),
                   offset=float(c.get("offset", 0.0)), window=c.get("window"),
                   metadata=dict(d.get("metadata", {})))

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    @property
    def is_flat(self):
        return self.lower.freq.size == 0 and self.upper.freq.size == 0

    def max_height(self):
        return max(self.lower.sup, self.upper.sup)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def fourier_frequencies(n, period=1.0):
    """Angular frequencies 2*pi*sqrt(p)/(2T) for the first n primes p."""
    return 2 * math.pi * np.sqrt(np.asarray(_PRIMES[:n], dtype=float)) / (2.0 * period)


def _fourier_amplitudes(spec, freq):
    amp = np.full(freq.size, spec.amplitude / freq.size)
    lip = float(np.sum(amp * freq))
    if lip > spec.K:
        amp *= spec.K / lip
    return amp


def sample_boundary(spec, seed):
    """Draw one realization of the (lower, upper) wall pair."""
    validate_spec(spec)
    seed = int(seed)
    meta = {"ergodic_family": spec.kind == "truncated-fourier"}
    if spec.kind == "flat-offset":
        wall = WallProcess(float(spec.amplitude), np.zeros(0), np.zeros(0), np.zeros(0))
        return BoundaryPair(seed, spec, wall, wall, metadata=meta)
    rng = np.random.default_rng(seed)
    if spec.kind == "truncated-fourier":
        freq = fourier_frequencies(spec.mode_count, spec.period)
        amp = _fourier_amplitudes(spec, freq)
        phases = rng.uniform(0.0, 2 * math.pi, size=(2, freq.size))
        lower = WallProcess(0.5, freq.copy(), amp.copy(), phases[0])
        upper = WallProcess(0.5, freq.copy(), amp.copy(), phases[1])
        meta["frequency_rule"] = "2*pi*sqrt(prime)/(2*period)"
        return BoundaryPair(seed, spec, lower, upper, metadata=meta)
    shift = float(rng.uniform(0.0, spec.period))
    return periodic_pair(spec, shift, seed=seed)


def periodic_pair(spec, shift, seed=0):
    """Shifted-periodic realization with an explicit shift U: h(y) = F(y + U).

    F(y) = 1/2 + (amplitude/n) * sum_{k=1..n} sin(2 pi k y / T); both walls
    share the same shift.
    """
    if spec.kind != "shifted-periodic":
        raise ConfigurationError("periodic_pair requires a shifted-periodic spec")
    n = spec.mode_count
    k = 2 * math.pi * np.arange(1, n + 1) / spec.period
    amp = np.full(n, spec.amplitude / n)
    phase = k * shift
    wall = WallProcess(0.5, k, amp, phase)
    return BoundaryPair(int(seed), spec, wall, wall, metadata={"shift": float(shift),
                                                               "ergodic_family": False})


def evaluate(b, y1):
    """Closed-form wall heights (h_l, h_u) at abscissa ``y1``."""
    y = np.asarray(y1, dtype=float) + b.offset
    return b.lower(y), b.upper(y)


def evaluate_derivative(b, y1):
    y = np.asarray(y1, dtype=float) + b.offset
    return b.lower.derivative(y), b.upper.derivative(y)


def shift(b, h):
    """Translate the realization: evaluate(shift(b, h), y) == evaluate(b, y + h)."""
    if h == 0:
        return b
    return replace(b, offset=b.offset + float(h))


def lipschitz_estimate(b, window, n_samples=None):
    """Largest difference quotient of either wall over a dense grid on [0, window]."""
    if not window > 0:
        raise ConfigurationError(f"window must be positive, got {window}")
    kmax = max([0.0] + [float(np.max(w.freq)) for w in (b.lower, b.upper) if w.freq.size])
    if kmax == 0.0:
        return 0.0
    if n_samples is None:
        # about 400 samples per shortest wavelength, capped for huge windows
        n_samples = int(min(2_000_000, max(1000, window * kmax / (2 * math.pi) * 400)))
    y = np.linspace(0.0, window, n_samples + 1)
    dy = y[1] - y[0]
    hl, hu = evaluate(b, y)
    return float(max(np.max(np.abs(np.diff(hl))), np.max(np.abs(np.diff(hu)))) / dy)


def periodize(b, window):
    """Return a realization that is exactly periodic with period ``window``.

    Frequencies are moved down to the nearest harmonic 2*pi*m/window
    (m >= 1), keeping amplitudes and phases, so the range and Lipschitz
    budgets are preserved.  Shifted-periodic realizations must already be
    compatible with the window.
    """
    if not window > 0:
        raise ConfigurationError(f"periodization window must be positive, got {window}")
    if b.window is not None and abs(b.window - window) <= 1e-12 * window:
        return b
    if b.is_flat:
        return replace(b, window=float(window))
    if b.spec.kind == "shifted-periodic":
        ratio = window / b.spec.period
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
            raise ConfigurationError(
                f"window {window} is not a multiple of the roughness period {b.spec.period}")
        return replace(b, window=float(window))
    if b.window is not None:
        raise ConfigurationError("realization is already periodized over a different window")
    base = 2 * math.pi / window

    def snap(w):
        m = np.maximum(1.0, np.floor(w.freq / base * (1 + 1e-12)))
        return replace(w, freq=m * base)

    meta = dict(b.metadata)
    meta["periodized_window"] = float(window)
    return replace(b, lower=snap(b.lower), upper=snap(b.upper), window=float(window), metadata=meta)


def reflected_wall(b, side):
    """Wall depth function used by the boundary-layer solver for ``side``."""
    if side == "lower":
        return b.lower
    if side == "upper":
        return b.upper
    raise ConfigurationError(f"side must be 'lower' or 'upper', got {side!r}")
