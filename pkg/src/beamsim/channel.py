"""2-D line-of-sight mmWave channel: planar-array beam gains, log-distance
pathloss with shadowing, and labeled RSS dataset generation.

All RSS values are dBm at the module boundary.  A sample's label is the
index of its strongest beam; shadowing is drawn once per sample (the beams
share one propagation path, so a per-beam draw would scramble which beam is
genuinely best).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

# Pattern floor keeps the gain finite at exact array-factor nulls.
_PATTERN_FLOOR = 1e-6


def _default_azimuths(n_beams: int) -> list[float]:
    return [i * 360.0 / n_beams for i in range(n_beams)]


@dataclass
class ScenarioConfig:
    """Geometry, array, and propagation parameters for one scenario."""

    tx_position: tuple[float, float] = (0.0, 0.0)
    cell_half_width: float = 25.0
    tx_power_dbm: float = 20.0
    n_beams: int = 24
    beam_azimuths_deg: list[float] = field(
        default_factory=lambda: _default_azimuths(24)
    )
    array_rows: int = 10
    array_cols: int = 10
    element_spacing_wl: float = 0.35
    pathloss_ref_db: float = 61.4
    pathloss_exponent: float = 2.0
    shadowing_sigma_db: float = 5.8
    rng_seed: int = 12345

    def validate(self) -> None:
        if self.n_beams < 2:
            raise ValidationError("n_beams: must be >= 2")
        if self.cell_half_width <= 0:
            raise ValidationError("cell_half_width: must be > 0")
        if self.shadowing_sigma_db < 0:
            raise ValidationError("shadowing_sigma_db: must be >= 0")
        if self.array_rows < 1 or self.array_cols < 1:
            raise ValidationError("array_rows/array_cols: must be >= 1")
        if self.element_spacing_wl <= 0:
            raise ValidationError("element_spacing_wl: must be > 0")
        az = np.asarray(self.beam_azimuths_deg, dtype=float)
        if az.shape != (self.n_beams,):
            raise ValidationError(
                "beam_azimuths_deg: need exactly one azimuth per beam"
            )
        if len(np.unique(az)) != self.n_beams:
            raise ValidationError("beam_azimuths_deg: azimuths must be distinct")
        if np.any(np.diff(az) <= 0):
            raise ValidationError("beam_azimuths_deg: azimuths must be sorted")
        if np.any(az < 0) or np.any(az >= 360.0):
            raise ValidationError("beam_azimuths_deg: azimuths must lie in [0, 360)")
        spacing = 360.0 / self.n_beams
        if not np.allclose(np.diff(az), spacing, atol=1e-9):
            raise ValidationError(
                "beam_azimuths_deg: azimuths must be uniformly spaced at "
                f"{spacing} degrees"
            )


@dataclass
class BeamRssSample:
    """One UE position with its full per-beam RSS vector and best-beam label."""

    position: tuple[float, float]
    rss_full: np.ndarray
    label: int


@dataclass
class Dataset:
    """Labeled RSS samples plus the measured-beam subset and split markers.

    Samples are stored columnar (positions, rss, labels) in draw order;
    splits are contiguous: [0, n_train) train, [n_train, n_train + n_val)
    validation, remainder test.
    """

    config: ScenarioConfig
    subset_indices: np.ndarray
    positions: np.ndarray
    rss: np.ndarray
    labels: np.ndarray
    n_train: int
    n_val: int
    n_test: int

    @property
    def n_samples(self) -> int:
        return len(self.labels)

    @property
    def x_m(self) -> np.ndarray:
        """RSS restricted to the measured subset (the classifier input)."""
        return self.rss[:, self.subset_indices]

    def split_indices(self, split: str) -> np.ndarray:
        bounds = {
            "train": (0, self.n_train),
            "val": (self.n_train, self.n_train + self.n_val),
            "test": (self.n_train + self.n_val, self.n_samples),
        }
        if split not in bounds:
            raise ValidationError(f"split: unknown split {split!r}")
        lo, hi = bounds[split]
        return np.arange(lo, hi)

    def sample(self, i: int) -> BeamRssSample:
        return BeamRssSample(
            position=(float(self.positions[i, 0]), float(self.positions[i, 1])),
            rss_full=self.rss[i].copy(),
            label=int(self.labels[i]),
        )


def wrap_angle_deg(angle_deg):
    """Wrap an angle in degrees to (-180, 180]."""
    return -((-np.asarray(angle_deg, dtype=float) + 180.0) % 360.0 - 180.0)


def bearing_deg(ue_position, tx_position):
    """Bearing of the UE as seen from the transmitter, degrees in (-180, 180]."""
    dx = ue_position[0] - tx_position[0]
    dy = ue_position[1] - tx_position[1]
    return float(np.degrees(np.arctan2(dy, dx)))


def array_gain(azimuth_deg, beam_azimuth_deg, cfg: ScenarioConfig):
    """Azimuth-plane power gain (dB, relative to one element) of the planar
    array steered to ``beam_azimuth_deg`` and observed at ``azimuth_deg``.

    The azimuth cut of the uniform planar array: the steered column dimension
    contributes its full array factor, the row dimension only its boresight
    factor, and a cardioid element pattern suppresses the rear half-plane.
    Broadcasting over array inputs is supported.
    """
    delta = np.radians(wrap_angle_deg(np.asarray(azimuth_deg, dtype=float)
                                      - np.asarray(beam_azimuth_deg, dtype=float)))
    n_col = cfg.array_cols
    psi_half = np.pi * cfg.element_spacing_wl * np.sin(delta)
    num = np.sin(n_col * psi_half)
    den = n_col * np.sin(psi_half)
    # At psi -> 0 the ratio tends to 1 (boresight of the array factor).
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(np.abs(den) < 1e-12, 1.0,
                         num / np.where(den == 0.0, 1.0, den))
    array_factor = ratio ** 2
    element = np.cos(0.5 * delta) ** 2
    pattern = np.maximum(array_factor * element, _PATTERN_FLOOR)
    gain = 10.0 * np.log10(cfg.array_rows * cfg.array_cols * pattern)
    if np.ndim(gain) == 0:
        return float(gain)
    return gain


def path_loss(distance_m, cfg: ScenarioConfig):
    """Log-distance pathloss in dB; strictly increasing in distance."""
    d = np.asarray(distance_m, dtype=float)
    if np.any(d <= 0):
        raise ValidationError("distance_m: must be > 0")
    loss = cfg.pathloss_ref_db + 10.0 * cfg.pathloss_exponent * np.log10(d)
    if np.ndim(loss) == 0:
        return float(loss)
    return loss


def _rss_matrix(positions: np.ndarray, cfg: ScenarioConfig,
                shadows: np.ndarray) -> np.ndarray:
    """RSS (dBm) for each (position, beam) pair; one shadow value per sample."""
    dx = positions[:, 0] - cfg.tx_position[0]
    dy = positions[:, 1] - cfg.tx_position[1]
    brg = np.degrees(np.arctan2(dy, dx))
    dist = np.hypot(dx, dy)
    az = np.asarray(cfg.beam_azimuths_deg, dtype=float)
    gains = array_gain(brg[:, None], az[None, :], cfg)
    pl = path_loss(dist, cfg)
    return cfg.tx_power_dbm + gains - np.asarray(pl)[:, None] + shadows[:, None]


def rss_vector(ue_position, cfg: ScenarioConfig, noise_source) -> np.ndarray:
    """Per-beam RSS (dBm) at one UE position.

    ``noise_source`` is a numpy Generator supplying the single shadowing
    draw shared by all beams of the sample (same link, same blockage state).
    """
    if (ue_position[0] == cfg.tx_position[0]
            and ue_position[1] == cfg.tx_position[1]):
        raise ValidationError("ue_position: coincides with the transmitter")
    shadow = float(noise_source.normal(0.0, cfg.shadowing_sigma_db))
    pos = np.asarray([ue_position], dtype=float)
    return _rss_matrix(pos, cfg, np.asarray([shadow]))[0]


def select_subset(n_beams: int, m: int) -> np.ndarray:
    """Evenly spaced measured-beam indices: floor(i * N / M) for i < M."""
    if m < 1 or m > n_beams:
        raise ValidationError("m: must satisfy 1 <= m <= n_beams")
    return np.array([(i * n_beams) // m for i in range(m)], dtype=np.int64)


def sample_stream(rng_seed: int, sample_index: int) -> np.random.Generator:
    """The canonical per-sample random stream.

    Each sample draws from its own independently seeded stream, so dataset
    generation can be reproduced sample-by-sample (and parallelized) without
    a shared sequential generator.  Draw order within the stream: x, y,
    shadow.
    """
    return np.random.default_rng([rng_seed, sample_index])


def generate_dataset(cfg: ScenarioConfig, n_samples: int, m: int) -> Dataset:
    """Draw UE positions uniformly over the square cell and build the
    labeled RSS dataset, split 80/10/10 in draw order."""
    cfg.validate()
    if n_samples < 1:
        raise ValidationError("n_samples: must be >= 1")
    subset = select_subset(cfg.n_beams, m)

    h = cfg.cell_half_width
    positions = np.empty((n_samples, 2))
    shadows = np.empty(n_samples)
    sigma = cfg.shadowing_sigma_db
    for i in range(n_samples):
        st = sample_stream(cfg.rng_seed, i)
        positions[i, 0] = st.uniform(-h, h)
        positions[i, 1] = st.uniform(-h, h)
        shadows[i] = st.normal(0.0, sigma)

    rss = _rss_matrix(positions, cfg, shadows)
    labels = np.argmax(rss, axis=1).astype(np.int32)

    n_train = (n_samples * 8) // 10
    n_val = n_samples // 10
    n_test = n_samples - n_train - n_val
    return Dataset(
        config=cfg,
        subset_indices=subset,
        positions=positions,
        rss=rss,
        labels=labels,
        n_train=n_train,
        n_val=n_val,
        n_test=n_test,
    )


def label_histogram(dataset: Dataset) -> np.ndarray:
    """Sample count per beam label."""
    return np.bincount(dataset.labels, minlength=dataset.config.n_beams)
