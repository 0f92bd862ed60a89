"""fNIRS cleaning and oxygenation.

Three stages: a zero-phase Butterworth low-pass, accelerometer-driven
sliding-window motion-artifact rejection with segment leveling, and the
Modified Beer-Lambert Law conversion of intensities to ΔHbO/ΔHbR.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy import signal

from .core import Modality, TimeSeriesChannel
from .errors import (
    CutoffAboveNyquistError,
    EmptyBaselineError,
    NonPositiveIntensityError,
    NonUniformSamplingError,
    SingularExtinctionMatrixError,
    SpanMismatchError,
)

MAX_JITTER = 0.01
MAX_CONDITION = 1e12


def _load_defaults() -> dict:
    text = resources.files("aeroload").joinpath("data/fnirs_defaults.json").read_text("utf-8")
    return json.loads(text)


@dataclass(frozen=True, eq=False)
class FnirsConfig:
    lowpass_cutoff_hz: float = 2.0
    filter_order: int = 4
    smar_window_s: float = 2.0
    smar_accel_threshold: float = 0.1
    extinction: np.ndarray = field(default_factory=lambda: np.array(_load_defaults()["extinction"]))
    pathlength_cm: float = 2.5
    dpf: float = 6.0

    def __post_init__(self):
        eps = np.asarray(self.extinction, dtype=np.float64)
        if eps.shape != (2, 2):
            raise ValueError("extinction must be 2x2 (wavelength x chromophore)")
        object.__setattr__(self, "extinction", eps)
        if not self.lowpass_cutoff_hz > 0:
            raise ValueError("lowpass_cutoff_hz must be positive")
        if not (self.pathlength_cm > 0 and self.dpf > 0):
            raise ValueError("pathlength_cm and dpf must be positive")
        if not self.smar_window_s > 0:
            raise ValueError("smar_window_s must be positive")
        cond = np.linalg.cond(eps)
        if not np.isfinite(cond) or cond > MAX_CONDITION:
            raise SingularExtinctionMatrixError(f"extinction matrix condition number {cond:g}")

    @classmethod
    def from_dict(cls, d: dict | None = None) -> "FnirsConfig":
        base = _load_defaults()
        base.update(d or {})
        keys = ("lowpass_cutoff_hz", "filter_order", "smar_window_s", "smar_accel_threshold",
                "extinction", "pathlength_cm", "dpf")
        return cls(**{k: base[k] for k in keys if k in base})

    def to_dict(self) -> dict:
        return {"lowpass_cutoff_hz": self.lowpass_cutoff_hz, "filter_order": self.filter_order,
                "smar_window_s": self.smar_window_s,
                "smar_accel_threshold": self.smar_accel_threshold,
                "extinction": self.extinction.tolist(), "pathlength_cm": self.pathlength_cm,
                "dpf": self.dpf}


@dataclass(frozen=True, eq=False)
class OxygenationSeries:
    timestamps: np.ndarray
    hbo: np.ndarray
    hbr: np.ndarray
    artifact_mask: np.ndarray

    def to_channel(self, nominal_rate_hz=None) -> TimeSeriesChannel:
        return TimeSeriesChannel(Modality.FNIRS, self.timestamps, np.hstack([self.hbo, self.hbr]),
                                 nominal_rate_hz=nominal_rate_hz,
                                 artifact_mask=self.artifact_mask)


def sampling_rate(t: np.ndarray) -> float:
    """Rate of a uniformly sampled clock; raises if the step jitter exceeds 1%."""
    dt = np.diff(t)
    if len(dt) == 0:
        raise NonUniformSamplingError("need at least 2 samples to infer a sampling rate")
    step = float(np.median(dt))
    jitter = float(np.max(np.abs(dt - step))) / step
    if jitter >= MAX_JITTER:
        raise NonUniformSamplingError(f"sampling jitter {jitter:.3%} exceeds {MAX_JITTER:.0%}")
    return 1.0 / step


def lowpass_filter(ch: TimeSeriesChannel, cutoff_hz: float, order: int = 4) -> TimeSeriesChannel:
    """Zero-phase Butterworth low-pass (forward-backward), odd-reflected edges."""
    fs = sampling_rate(ch.timestamps)
    if not cutoff_hz < fs / 2:
        raise CutoffAboveNyquistError(f"cutoff {cutoff_hz} Hz >= Nyquist {fs / 2} Hz")
    sos = signal.butter(order, cutoff_hz, btype="low", fs=fs, output="sos")
    padlen = min(3 * order, len(ch) - 1)
    y = signal.sosfiltfilt(sos, ch.samples, axis=0, padtype="odd", padlen=padlen)
    return ch.replace(samples=y)


def _accel_window_std(accel: TimeSeriesChannel, window_s: float):
    t0 = accel.timestamps[0]
    mag = np.linalg.norm(accel.samples, axis=1)
    k = np.floor((accel.timestamps - t0) / window_s).astype(np.int64)
    n_win = int(k[-1]) + 1
    count = np.bincount(k, minlength=n_win).astype(np.float64)
    s1 = np.bincount(k, weights=mag, minlength=n_win)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = s1 / count
        s2 = np.bincount(k, weights=(mag - mean[k]) ** 2, minlength=n_win)
        std = np.sqrt(s2 / count)
    std[count == 0] = 0.0
    return t0, std


def _level_offset(seg: np.ndarray, prev: np.ndarray, n_edge: int) -> np.ndarray:
    lead = seg[:n_edge].mean(axis=0)
    trail = prev[-n_edge:].mean(axis=0)
    off = lead - trail
    # offsets at rounding level are treated as zero so re-leveling is a no-op
    scale = np.maximum(np.abs(lead), np.abs(trail)) + 1.0
    off[np.abs(off) <= 1e-9 * scale] = 0.0
    return off


def smar_reject(optodes: TimeSeriesChannel, accel: TimeSeriesChannel,
                cfg: FnirsConfig) -> tuple[TimeSeriesChannel, np.ndarray]:
    """Mask motion artifacts from accelerometer windows and level the clean segments.

    The accelerometer clock is tiled into ``smar_window_s`` windows; each
    optode sample takes the window whose centre is nearest.  Samples in
    windows whose acceleration-magnitude std exceeds the threshold are
    artifacts.  Every clean segment after the first is shifted so its
    leading mean matches the trailing mean of the previous (already
    leveled) clean segment; edge means span one window.
    """
    w = cfg.smar_window_s
    t = optodes.timestamps
    if (abs(t[0] - accel.timestamps[0]) > w or abs(t[-1] - accel.timestamps[-1]) > w):
        raise SpanMismatchError(
            f"optodes span [{t[0]:g}, {t[-1]:g}] vs accelerometer "
            f"[{accel.timestamps[0]:g}, {accel.timestamps[-1]:g}]")
    t0, std = _accel_window_std(accel, w)
    win = np.clip(np.rint((t - t0) / w - 0.5), 0, len(std) - 1).astype(np.int64)
    mask = std[win] > cfg.smar_accel_threshold
    if optodes.artifact_mask is not None:
        mask = mask | optodes.artifact_mask

    x = np.array(optodes.samples, copy=True)
    step = float(np.median(np.diff(t))) if len(t) > 1 else w
    n_edge = max(1, int(round(w / step)))
    clean = ~mask
    edges = np.flatnonzero(np.diff(clean.astype(np.int8)))
    starts = np.concatenate(([0], edges + 1))
    ends = np.concatenate((edges + 1, [len(t)]))
    prev = None
    for a, b in zip(starts, ends):
        if not clean[a]:
            continue
        if prev is not None:
            x[a:b] -= _level_offset(x[a:b], x[prev[0]:prev[1]], n_edge)
        prev = (a, b)
    return optodes.replace(samples=x, artifact_mask=mask), mask


def mbll_oxygenation(raw_intensity: TimeSeriesChannel, baseline: tuple[float, float] | None,
                     cfg: FnirsConfig) -> OxygenationSeries:
    """ΔHbO/ΔHbR per optode from interleaved two-wavelength intensities.

    ``ΔOD = -log10(I / I_ref)`` with ``I_ref`` the geometric mean of the
    baseline window (artifact-free samples when any exist), then
    ``extinction @ Δc * pathlength * dpf = ΔOD`` is solved per sample.  With
    ``baseline=None`` the whole recording serves as reference.
    """
    I = raw_intensity.samples
    if np.any(I <= 0):
        raise NonPositiveIntensityError("intensities must be strictly positive")
    if I.shape[1] % 2:
        raise ValueError("intensity columns must come in wavelength pairs")
    t = raw_intensity.timestamps
    if baseline is None:
        sel = np.ones(len(t), dtype=bool)
    else:
        sel = (t >= baseline[0]) & (t < baseline[1])
    if not sel.any():
        raise EmptyBaselineError(f"no samples in baseline window {baseline}")
    clean_sel = sel & raw_intensity.clean
    if clean_sel.any():
        sel = clean_sel

    log_i = np.log10(I)
    dod = -(log_i - log_i[sel].mean(axis=0))
    a = cfg.extinction * (cfg.pathlength_cm * cfg.dpf)
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularExtinctionMatrixError(f"extinction matrix condition number {cond:g}")
    n, n_opt = len(t), I.shape[1] // 2
    pairs = dod.reshape(n * n_opt, 2).T           # rows: wavelengths
    conc = np.linalg.solve(a, pairs).T.reshape(n, n_opt, 2)
    mask = ~raw_intensity.clean
    return OxygenationSeries(t.copy(), conc[:, :, 0], conc[:, :, 1], mask)


def process_fnirs(raw: TimeSeriesChannel, accel: TimeSeriesChannel | None,
                  baseline: tuple[float, float] | None, cfg: FnirsConfig) -> TimeSeriesChannel:
    """Low-pass, motion-artifact rejection (when an accelerometer exists), MBLL."""
    ch = lowpass_filter(raw, cfg.lowpass_cutoff_hz, cfg.filter_order)
    if accel is not None:
        ch, _ = smar_reject(ch, accel, cfg)
    oxy = mbll_oxygenation(ch, baseline, cfg)
    return oxy.to_channel(raw.nominal_rate_hz)
