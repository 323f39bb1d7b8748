"""Jump records and their text serialization.

File layout (schema version 1)::

    # superrad-jump-record
    # schema_version: 1
    # model_tag: adiabatic
    # seed: 1234
    # total_time: 100
    # burn_in: 10
    # params: {"coupling": 1.0, ...}
    0.012345678901234567<TAB>cavity
    ...

Several records may be concatenated in one stream; each starts with the
``# superrad-jump-record`` marker line. Times use 17 significant digits so
that a write/read cycle is exact.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

RECORD_SCHEMA_VERSION = 1
_MARKER = "# superrad-jump-record"


@dataclass(frozen=True, eq=False)
class JumpRecord:
    """Time-ordered jump events of one trajectory.

    Events with ``time < burn_in`` are kept but flagged by
    :attr:`in_burn_in`; estimators use the post burn-in window by default.
    """

    times: np.ndarray
    channels: tuple
    total_time: float
    seed: int
    model_tag: str
    burn_in: float = 0.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "channels", tuple(self.channels))
        if times.ndim != 1 or times.size != len(self.channels):
            raise ValueError("times and channels must have equal length")
        if times.size:
            if np.any(np.diff(times) <= 0):
                raise ValueError("event times must be strictly increasing")
            if times[0] < 0 or times[-1] > self.total_time:
                raise ValueError("event times must lie in [0, total_time]")

    @property
    def events(self) -> list[tuple[float, str]]:
        return list(zip(self.times.tolist(), self.channels))

    @property
    def in_burn_in(self) -> np.ndarray:
        return self.times < self.burn_in

    def channel_times(self, label: str) -> np.ndarray:
        mask = np.fromiter((c == label for c in self.channels), dtype=bool, count=len(self.channels))
        return self.times[mask]

    def count(self, label: str, start: float | None = None, end: float | None = None) -> int:
        t = self.channel_times(label)
        start = self.burn_in if start is None else start
        end = self.total_time if end is None else end
        return int(np.count_nonzero((t >= start) & (t <= end)))

    def __eq__(self, other):
        if not isinstance(other, JumpRecord):
            return NotImplemented
        return (
            np.array_equal(self.times, other.times)
            and self.channels == other.channels
            and self.total_time == other.total_time
            and self.seed == other.seed
            and self.model_tag == other.model_tag
            and self.burn_in == other.burn_in
            and self.params == other.params
        )

    __hash__ = None


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def format_record(record: JumpRecord) -> str:
    lines = [
        _MARKER,
        f"# schema_version: {RECORD_SCHEMA_VERSION}",
        f"# model_tag: {record.model_tag}",
        f"# seed: {int(record.seed)}",
        f"# total_time: {_fmt(record.total_time)}",
        f"# burn_in: {_fmt(record.burn_in)}",
        f"# params: {json.dumps(record.params, sort_keys=True)}",
    ]
    lines += [f"{_fmt(t)}\t{c}" for t, c in zip(record.times.tolist(), record.channels)]
    return "\n".join(lines) + "\n"


def write_records(path: str | Path, records) -> None:
    if isinstance(records, JumpRecord):
        records = [records]
    Path(path).write_text("".join(format_record(r) for r in records))


def parse_records(text: str) -> list[JumpRecord]:
    records = []
    header: dict | None = None
    times: list[float] = []
    labels: list[str] = []

    def flush():
        if header is None:
            return
        try:
            version = int(header["schema_version"])
            if version != RECORD_SCHEMA_VERSION:
                raise ConfigError(f"unsupported jump-record schema_version {version}")
            records.append(
                JumpRecord(
                    times=np.array(times, dtype=float),
                    channels=tuple(labels),
                    total_time=float(header["total_time"]),
                    seed=int(header["seed"]),
                    model_tag=header["model_tag"],
                    burn_in=float(header.get("burn_in", 0.0)),
                    params=json.loads(header.get("params", "{}")),
                )
            )
        except KeyError as exc:
            raise ConfigError(f"jump record header lacks {exc}") from exc

    for lineno, raw in enumerate(io.StringIO(text), 1):
        line = raw.rstrip("\n")
        if not line:
            continue
        if line == _MARKER:
            flush()
            header, times, labels = {}, [], []
            continue
        if header is None:
            raise ConfigError(f"line {lineno}: data before a record header")
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(":")
            header[key.strip()] = value.strip()
            continue
        t, sep, label = line.partition("\t")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'time<TAB>label'")
        times.append(float(t))
        labels.append(label)
    flush()
    return records


def read_records(path: str | Path) -> list[JumpRecord]:
    return parse_records(Path(path).read_text())
