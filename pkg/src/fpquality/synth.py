"""Seeded synthetic matcher scores and image features.

This is a stand-in for a real fingerprint database.  Every imprint gets a
latent quality ``q`` in (0, 1).  A genuine score depends only on the lower
quality of the two imprints compared; impostor scores do not depend on
quality at all.  Features are noisy monotone functions of ``q``.

Randomness comes from numpy's Philox counter-based generator, so output is
identical on every platform for a given seed and numpy release.

Score model, in a matcher-independent base scale:

* genuine ``g_m(min(q, q')) + quality_noise * genuine_sd * e`` with
  ``g_m(q) = lo + (hi - lo) / (1 + exp(-slope_m (q - mid_m)))``; the unit
  noise ``e`` mixes a per-pair part common to all matchers (variance share
  ``genuine_shared``) with a per-matcher part;
* impostor: a stratified standard-normal draw, shifted and scaled by
  per-sample jitter proportional to ``quality_noise``;
* each matcher maps base scores through its own affine map ``a_m s + b_m``;
  the thresholding matcher then sets impostor scores below its cutoff to 0.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .errors import InputError
from .scores import SampleId, ScoreTable

N_FEATURES = 11

# (scale a_m, offset b_m, logistic slope, logistic midpoint) per matcher; cycled
# when more matchers are requested.
MATCHER_PROFILES = (
    (12.0, 20.0, 9.0, 0.30),
    (0.05, 0.10, 7.0, 0.26),
    (150.0, 400.0, 11.0, 0.33),
    (1.0, 0.0, 8.0, 0.28),
    (30.0, 5.0, 10.0, 0.31),
)


def make_rng(seed: int) -> np.random.Generator:
    """Generator used everywhere a seed is accepted."""
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class SynthConfig:
    subjects: int = 50
    fingers_per_subject: int = 8
    imprints_per_finger: int = 9
    matchers: int = 3
    impostors_per_sample: int = 442
    thresholding_matcher: bool = True
    quality_noise: float = 1.0
    feature_noise: float = 2.0
    seed: int = 42
    quality_beta: tuple = (2.0, 5.0)
    # share of an imprint's quality that is common to its finger
    finger_quality_share: float = 0.3
    genuine_low: float = 0.3
    genuine_high: float = 8.0
    genuine_sd: float = 0.7
    genuine_shared: float = 0.5
    impostor_location_jitter: float = 0.08
    impostor_scale_jitter: float = 0.08
    # in base units; the thresholding matcher zeroes impostors below it
    threshold_cutoff: float = 1.0

    def validate(self):
        for name in ("subjects", "fingers_per_subject", "imprints_per_finger", "matchers", "impostors_per_sample"):
            if getattr(self, name) < 1:
                raise InputError(f"{name} must be positive")
        if self.imprints_per_finger < 2:
            raise InputError("at least 2 imprints per finger are needed for genuine scores")
        if self.quality_noise < 0 or self.feature_noise < 0:
            raise InputError("noise levels must be non-negative")
        if not 0.0 <= self.finger_quality_share <= 1.0:
            raise InputError("finger_quality_share must lie in [0, 1]")
        if not 0.0 <= self.genuine_shared <= 1.0:
            raise InputError("genuine_shared must lie in [0, 1]")
        others = (self.subjects - 1) * self.fingers_per_subject * self.imprints_per_finger
        if others < self.impostors_per_sample:
            raise InputError(
                f"{self.impostors_per_sample} impostor scores per sample need at least that many "
                f"imprints of other subjects, only {others} exist"
            )

    @property
    def matcher_names(self) -> list[str]:
        return [f"m{k}" for k in range(self.matchers)]

    @property
    def thresholding_name(self) -> str | None:
        return self.matcher_names[-1] if self.thresholding_matcher else None


@dataclass(frozen=True)
class MatcherProfile:
    name: str
    scale: float
    offset: float
    slope: float
    mid: float
    thresholding: bool

    def genuine_mean(self, q_min, low, high):
        """Base-scale genuine mean as a function of the lower pair quality."""
        return low + (high - low) / (1.0 + np.exp(-self.slope * (np.asarray(q_min) - self.mid)))


def matcher_profiles(config: SynthConfig) -> list[MatcherProfile]:
    out = []
    for k, name in enumerate(config.matcher_names):
        a, b, slope, mid = MATCHER_PROFILES[k % len(MATCHER_PROFILES)]
        out.append(MatcherProfile(name, a, b, slope, mid, name == config.thresholding_name))
    return out


def feature_means(q) -> np.ndarray:
    """Noise-free features as strictly monotone functions of quality.

    Column 0 imitates the foreground pixel count, column 1 the total minutiae
    count (falling with quality as spurious minutiae disappear), columns 2-5
    minutiae above increasing reliability thresholds and columns 6-10 image
    blocks above increasing quality thresholds.
    """
    q = np.asarray(q, dtype=float)[:, None]
    cols = [
        40000.0 + 80000.0 * q,
        90.0 - 40.0 * q,
        60.0 * q ** 0.8,
        50.0 * q ** 1.2,
        40.0 * q ** 1.6,
        30.0 * q ** 2.2,
        700.0 * q ** 0.5,
        600.0 * q ** 0.9,
        500.0 * q ** 1.3,
        400.0 * q ** 1.8,
        300.0 * q ** 2.5,
    ]
    return np.hstack(cols)


FEATURE_NOISE_SD = np.array([6000.0, 6.0, 6.0, 5.0, 4.0, 3.0, 60.0, 55.0, 50.0, 40.0, 30.0])


@dataclass
class SynthDataset:
    """A generated data set held in memory.

    Row ``i`` of every array is sample ``samples[i]``; samples are sorted and
    laid out finger by finger, ``row = finger * imprints + imprint``.
    ``genuine[m]`` is an ``(n, imprints)`` matrix, NaN on the own imprint;
    ``impostor[m]`` is ``(n, impostors)`` with gallery rows in ``gallery``.
    """

    config: SynthConfig
    samples: list
    subject: np.ndarray
    finger: np.ndarray
    quality: np.ndarray
    features: np.ndarray
    genuine: dict
    impostor: dict
    gallery: np.ndarray
    profiles: list = field(default_factory=list)

    @property
    def matcher_names(self) -> list[str]:
        return list(self.genuine)

    def score_table(self, matcher: str) -> ScoreTable:
        return ScoreTable.from_arrays(matcher, self.samples, self.genuine[matcher], self.impostor[matcher])

    def score_tables(self) -> dict:
        return {m: self.score_table(m) for m in self.matcher_names}

    def write(self, out_dir, header_extra: dict | None = None) -> dict:
        from . import io

        return io.write_synth(self, Path(out_dir), header_extra)


def _sample_gallery(rng, config: SynthConfig, n_fingers: int) -> np.ndarray:
    m = config.imprints_per_finger
    fps = config.fingers_per_subject
    k = config.impostors_per_sample
    n = n_fingers * m
    other_fingers = n_fingers - fps
    gallery = np.empty((n, k), dtype=np.int64)
    distinct_fingers = other_fingers >= k
    for i in range(n):
        s = (i // m) // fps
        if distinct_fingers:
            r = rng.choice(other_fingers, size=k, replace=False)
            f = np.where(r < s * fps, r, r + fps)
            gallery[i] = f * m + rng.integers(0, m, size=k)
        else:
            r = rng.choice(n - fps * m, size=k, replace=False)
            gallery[i] = np.where(r < s * fps * m, r, r + fps * m)
    return gallery


def generate(config: SynthConfig = SynthConfig()) -> SynthDataset:
    """Generate scores, features and latent qualities for ``config``."""
    config.validate()
    rng = make_rng(config.seed)
    m = config.imprints_per_finger
    n_fingers = config.subjects * config.fingers_per_subject
    n = n_fingers * m
    k = config.impostors_per_sample

    finger = np.repeat(np.arange(n_fingers), m)
    subject = finger // config.fingers_per_subject
    imprint = np.tile(np.arange(m), n_fingers)
    samples = [
        SampleId(f"s{s:05d}", f"s{s:05d}_f{f % config.fingers_per_subject:02d}", int(j))
        for s, f, j in zip(subject, finger, imprint)
    ]

    a, b = config.quality_beta
    share = config.finger_quality_share
    q_finger = rng.beta(a, b, size=n_fingers)
    q_imprint = rng.beta(a, b, size=n)
    quality = share * q_finger[finger] + (1.0 - share) * q_imprint

    gallery = _sample_gallery(rng, config, n_fingers)

    iu, ju = np.triu_indices(m, k=1)
    grid = ndtri((np.arange(k) + 0.5) / k)
    strat = min(config.quality_noise, 1.0)
    profiles = matcher_profiles(config)
    shared = rng.standard_normal((n_fingers, iu.size))
    w_shared, w_own = np.sqrt(config.genuine_shared), np.sqrt(1.0 - config.genuine_shared)
    genuine, impostor = {}, {}
    for prof in profiles:
        qf = quality.reshape(n_fingers, m)
        qmin = np.minimum(qf[:, iu], qf[:, ju])
        base = prof.genuine_mean(qmin, config.genuine_low, config.genuine_high)
        noise = w_shared * shared + w_own * rng.standard_normal(base.shape)
        base = base + config.quality_noise * config.genuine_sd * noise
        pair = prof.scale * base + prof.offset
        g = np.full((n_fingers, m, m), np.nan)
        g[:, iu, ju] = pair
        g[:, ju, iu] = pair
        genuine[prof.name] = g.reshape(n, m)

        u = 0.5 + strat * (rng.random((n, k)) - 0.5)
        z = ndtri((np.arange(k) + u) / k) if strat > 0 else np.broadcast_to(grid, (n, k))
        loc = config.quality_noise * config.impostor_location_jitter * rng.standard_normal((n, 1))
        spread = np.exp(config.quality_noise * config.impostor_scale_jitter * rng.standard_normal((n, 1)))
        imp = loc + spread * z
        if prof.thresholding:
            imp = np.where(imp < config.threshold_cutoff, 0.0, prof.scale * imp + prof.offset)
        else:
            imp = prof.scale * imp + prof.offset
        impostor[prof.name] = np.ascontiguousarray(imp)

    features = feature_means(quality)
    features = features + config.feature_noise * FEATURE_NOISE_SD * rng.standard_normal(features.shape)
    features[:, 0] = np.round(features[:, 0])

    return SynthDataset(config, samples, subject, finger, quality, features, genuine, impostor, gallery, profiles)


def config_from_mapping(values: dict) -> SynthConfig:
    """Build a config from string or typed values, ignoring unknown keys."""
    kwargs = {}
    for f in dataclasses.fields(SynthConfig):
        if f.name not in values:
            continue
        v = values[f.name]
        default = f.default
        if isinstance(default, bool):
            v = v if isinstance(v, bool) else str(v).strip().lower() in ("1", "true", "yes", "on")
        elif isinstance(default, int):
            v = int(v)
        elif isinstance(default, float):
            v = float(v)
        elif isinstance(default, tuple):
            v = tuple(float(t) for t in (v.split(",") if isinstance(v, str) else v))
        kwargs[f.name] = v
    return SynthConfig(**kwargs)


def expected_rows(config: SynthConfig) -> int:
    return config.subjects * config.fingers_per_subject * config.imprints_per_finger


def genuine_mean_for_pair(profile: MatcherProfile, q1: float, q2: float, config: SynthConfig) -> float:
    """Base-scale genuine mean for one imprint pair (used by tests)."""
    return float(profile.genuine_mean(min(q1, q2), config.genuine_low, config.genuine_high))


__all__ = [
    "SynthConfig",
    "SynthDataset",
    "MatcherProfile",
    "generate",
    "make_rng",
    "matcher_profiles",
    "feature_means",
    "config_from_mapping",
    "expected_rows",
    "genuine_mean_for_pair",
    "N_FEATURES",
]
