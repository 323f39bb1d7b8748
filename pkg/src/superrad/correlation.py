"""Intensity correlations from photon records and from state moments."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, EmptyEstimateError
from .model import OperatorSet, Regime, classify_pump
from .records import JumpRecord

G2_SCHEMA_VERSION = 1
_CHUNK_CELLS = 4_000_000


class UndefinedResultWarning(RuntimeWarning):
    pass


@dataclass(frozen=True, eq=False)
class G2Estimate:
    """Binned ``g2(j * bin_width)`` for ``j = 0 .. n_lags - 1``.

    Bin ``j`` collects delays in ``(j*dt, (j+1)*dt]``. ``std_errors`` are 1-sigma
    standard errors of the mean, treating per-trigger histograms as
    independent (they overlap in time, so this is an approximation).
    """

    bin_width: float
    values: np.ndarray
    std_errors: np.ndarray
    n_phot: int
    n_bins: int
    window: tuple
    n_events: int = 0

    @property
    def tau(self) -> np.ndarray:
        return self.bin_width * np.arange(self.values.size)

    @property
    def centers(self) -> np.ndarray:
        return self.bin_width * (np.arange(self.values.size) + 0.5)

    def to_csv(self, path: str | Path, extra: dict | None = None) -> None:
        write_g2_csv(path, self, extra)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_g2_csv(path: str | Path, est: G2Estimate, extra: dict | None = None) -> None:
    """CSV with columns ``tau,g2,g2_err`` plus any ``extra`` columns."""
    extra = extra or {}
    lines = [
        "# superrad-g2",
        f"# schema_version: {G2_SCHEMA_VERSION}",
        f"# bin_width: {_fmt(est.bin_width)}",
        f"# window: {_fmt(est.window[0])},{_fmt(est.window[1])}",
        f"# n_phot: {est.n_phot}",
        f"# n_bins: {est.n_bins}",
        "# errors: 1-sigma standard error, per-trigger histograms treated as independent",
        ",".join(["tau", "g2", "g2_err", *extra]),
    ]
    cols = [est.tau, est.values, est.std_errors, *(np.asarray(v) for v in extra.values())]
    for row in zip(*cols):
        lines.append(",".join(_fmt(x) for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_g2_csv(path: str | Path) -> tuple[dict, dict]:
    """Return ``(header, columns)`` of a file written by :func:`write_g2_csv`."""
    header, rows, names = {}, [], None
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(":")
            if value:
                header[key.strip()] = value.strip()
        elif names is None:
            names = line.split(",")
        elif line:
            rows.append([float(x) for x in line.split(",")])
    data = np.array(rows).reshape(-1, len(names))
    return header, {n: data[:, i] for i, n in enumerate(names)}


def _trigger_counts(times: np.ndarray, triggers: np.ndarray, bin_width: float, n_lags: int):
    """Counts of events in ``(t_i + j*dt, t_i + (j+1)*dt]``, one row per trigger."""
    offsets = bin_width * np.arange(n_lags + 1)
    chunk = max(1, _CHUNK_CELLS // (n_lags + 1))
    for start in range(0, triggers.size, chunk):
        edges = triggers[start : start + chunk, None] + offsets[None, :]
        yield np.diff(np.searchsorted(times, edges, side="right"), axis=1)


def g2_histogram(
    records,
    channel: str = "cavity",
    bin_width: float = 0.1,
    n_lags: int = 50,
    window: tuple | None = None,
) -> G2Estimate:
    """Histogram estimator of ``g2(tau)`` from jump times.

    A trigger ``t_i`` is valid only if ``t_i + n_lags * bin_width <= t_end``,
    so every valid trigger contributes a complete row of ``n_lags`` bins.
    Each record is normalized by its own mean count per bin, computed from
    all events of ``channel`` inside the window; records are then combined
    with weights proportional to their number of valid triggers.

    ``window`` defaults to ``(record.burn_in, record.total_time)`` per record.
    """
    if isinstance(records, JumpRecord):
        records = [records]
    if not records:
        raise ValueError("no records given")
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    if n_lags < 1:
        raise ValueError("n_lags must be at least 1")
    sums = np.zeros(n_lags)
    sumsq = np.zeros(n_lags)
    n_trig = 0
    n_events = 0
    starts, ends = [], []
    for rec in records:
        t0, t1 = (rec.burn_in, rec.total_time) if window is None else window
        length = t1 - t0
        if bin_width > length:
            raise ValueError(f"bin_width {bin_width} exceeds the analysis window length {length}")
        starts.append(t0)
        ends.append(t1)
        times = rec.channel_times(channel)
        times = times[(times >= t0) & (times <= t1)]
        n_events += times.size
        triggers = times[times + n_lags * bin_width <= t1]
        if triggers.size == 0:
            continue
        per_bin = times.size * bin_width / length
        for counts in _trigger_counts(times, triggers, bin_width, n_lags):
            x = counts / per_bin
            sums += x.sum(axis=0)
            sumsq += (x * x).sum(axis=0)
        n_trig += triggers.size
    if n_trig == 0:
        raise EmptyEstimateError(f"no valid '{channel}' triggers inside the analysis window")
    mean = sums / n_trig
    if n_trig > 1:
        var = np.clip(sumsq - n_trig * mean**2, 0.0, None) / (n_trig - 1)
        se = np.sqrt(var / n_trig)
    else:
        se = np.full(n_lags, np.nan)
    lo, hi = min(starts), max(ends)
    return G2Estimate(
        bin_width=float(bin_width),
        values=mean,
        std_errors=se,
        n_phot=int(n_trig),
        n_bins=int(math.ceil((hi - lo) / bin_width - 1e-9)),
        window=(float(lo), float(hi)),
        n_events=int(n_events),
    )


def default_bin_width(w: float, n_atoms: int, gc: float) -> float:
    """Regime-dependent default bin width (configurable everywhere it is used).

    Subradiant: ``0.1/gc``; superradiant: ``0.02/(N gc) * N``; strong
    pumping: ``0.1/w``. Threshold points take the neighbouring superradiant
    value.
    """
    regime = classify_pump(w, n_atoms, gc)
    if regime is Regime.SUBRADIANT:
        return 0.1 / gc
    if regime is Regime.STRONG_PUMPING:
        return 0.1 / w
    return 0.02 / (n_atoms * gc) * n_atoms


def _moment_names(ops: OperatorSet) -> tuple[str, str]:
    if ops.model_tag == "full":
        return "nn", "n"
    return "jppjmm", "jpjm"


def g2_zero_estimate(ensemble, ops: OperatorSet) -> tuple[float, float]:
    """``g2(0)`` from time-and-ensemble averaged moments with a delta-method error.

    Full model: ``<a^dag a^dag a a> / <a^dag a>^2``; adiabatic model:
    ``<J+ J+ J- J-> / <J+ J->^2``. Returns ``(nan, nan)`` with an
    :class:`UndefinedResultWarning` when the emission vanishes.
    """
    num_name, den_name = _moment_names(ops)
    try:
        a = ensemble.trajectory_means(num_name)
        b = ensemble.trajectory_means(den_name)
    except KeyError as exc:
        raise ConfigError(f"ensemble lacks the sampled observable {exc}") from exc
    A, B = a.mean(), b.mean()
    if not B > 1e-300:
        warnings.warn("g2(0) undefined: zero emission (dark ensemble)", UndefinedResultWarning, stacklevel=2)
        return math.nan, math.nan
    value = A / B**2
    n = a.size
    if n < 2:
        return float(value), math.nan
    cov = np.cov(np.vstack([a, b]), ddof=1)
    var = (cov[0, 0] / B**4 + 4 * A**2 * cov[1, 1] / B**6 - 4 * A * cov[0, 1] / B**5) / n
    return float(value), float(math.sqrt(max(var, 0.0)))


def g2_zero_from_states(ensemble, ops: OperatorSet) -> float:
    return g2_zero_estimate(ensemble, ops)[0]


def intensity_variance(mean_flux: float, g2_zero: float, bandwidth: float) -> float:
    """Photocurrent variance ``I**2 (g2(0) - 1) + B I`` for detector bandwidth ``B``."""
    if mean_flux < 0 or bandwidth < 0:
        raise ValueError("mean_flux and bandwidth must be non-negative")
    return mean_flux**2 * (g2_zero - 1.0) + bandwidth * mean_flux
