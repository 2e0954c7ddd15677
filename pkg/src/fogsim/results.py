"""Event records, their CSV files, and post-simulation metrics.

Timestamps are kept on a dyadic grid (multiples of ``2**-29``) so time
differences and their sums are exact in binary floating point; the grid is
also coarse enough that values printed with nine decimals snap back to the
same grid point when read.
"""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import astuple, dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, NamedTuple, Sequence

TIME_GRID = 2**29

COMPUTE_HEADER = (
    "id,type,app,module,message,DES.src,DES.dst,TOPO.src,TOPO.dst,"
    "module.src,service,time_in,time_out,time_emit,time_reception"
).split(",")
LINK_HEADER = "id,type,src,dst,app,latency,message,ctime,size,buffer".split(",")
DROP_HEADER = "id,reason,ctime,context".split(",")

COMPUTE_FILE = "compute.csv"
LINK_FILE = "link.csv"
DROP_FILE = "drops.csv"

COMP_M = "COMP_M"
SINK_M = "SINK_M"
LINK = "LINK"

NO_PATH = "NO_PATH"
NODE_REMOVED = "NODE_REMOVED"
LINK_REMOVED = "LINK_REMOVED"
UNDEPLOYED = "UNDEPLOYED"
UNROUTABLE = "UNROUTABLE"


def quantize(t: float) -> float:
    return round(t * TIME_GRID) / TIME_GRID


def fmt_number(x: float | int | None) -> str:
    if x is None:
        return ""
    if isinstance(x, int):
        return str(x)
    s = f"{x:.9f}".rstrip("0")
    return s + "0" if s.endswith(".") else s


@dataclass(frozen=True)
class ComputeRecord:
    id: int
    type: str
    app: str
    module: str
    message: str
    des_src: int
    des_dst: int
    topo_src: int
    topo_dst: int
    module_src: str
    service: float | None
    time_in: float
    time_out: float
    time_emit: float
    time_reception: float

    def row(self) -> list[str]:
        return [fmt_number(v) if not isinstance(v, str) else v for v in astuple(self)]


@dataclass(frozen=True)
class LinkRecord:
    id: int
    type: str
    src: int
    dst: int
    app: str
    latency: float
    message: str
    ctime: float
    size: float
    buffer: int

    def row(self) -> list[str]:
        return [fmt_number(v) if not isinstance(v, str) else v for v in astuple(self)]


@dataclass(frozen=True)
class DropRecord:
    id: int
    reason: str
    ctime: float
    context: str

    def row(self) -> list[str]:
        return [str(self.id), self.reason, fmt_number(self.ctime), self.context]


@dataclass
class ResultSet:
    """Everything a run produced.

    ``events`` is the process log (deployments, failures, reroutes and any
    custom entries); it is not part of the CSV triple.
    """

    compute: list[ComputeRecord] = field(default_factory=list)
    link: list[LinkRecord] = field(default_factory=list)
    drops: list[DropRecord] = field(default_factory=list)
    events: list[dict[str, Any]] = field(default_factory=list)
    until: float = 0.0

    def events_of(self, kind: str) -> list[dict[str, Any]]:
        return [e for e in self.events if e["event"] == kind]

    def write_csv(self, directory: str | Path) -> dict[str, Path]:
        return write_csv(self, directory)


def write_csv(results: ResultSet, directory: str | Path) -> dict[str, Path]:
    """Write the compute, link and drop files; return their paths."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"compute": out / COMPUTE_FILE, "link": out / LINK_FILE, "drops": out / DROP_FILE}
    for key, header, rows in (
        ("compute", COMPUTE_HEADER, results.compute),
        ("link", LINK_HEADER, results.link),
        ("drops", DROP_HEADER, results.drops),
    ):
        with open(paths[key], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for rec in rows:
                w.writerow(rec.row())
    return paths


def _read_rows(path: Path, header: list[str]) -> list[list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected header") from None
        if got != header:
            raise ValueError(f"{path}: unexpected header {got}")
        return list(reader)


def _t(s: str) -> float:
    return quantize(float(s))


def read_csv(directory: str | Path) -> ResultSet:
    """Inverse of :func:`write_csv`. Missing drop file reads as empty."""
    d = Path(directory)
    rs = ResultSet()
    for r in _read_rows(d / COMPUTE_FILE, COMPUTE_HEADER):
        rs.compute.append(
            ComputeRecord(
                int(r[0]), r[1], r[2], r[3], r[4], int(r[5]), int(r[6]), int(r[7]), int(r[8]), r[9],
                None if r[10] == "" else _t(r[10]), _t(r[11]), _t(r[12]), _t(r[13]), _t(r[14]),
            )
        )
    for r in _read_rows(d / LINK_FILE, LINK_HEADER):
        rs.link.append(
            LinkRecord(int(r[0]), r[1], int(r[2]), int(r[3]), r[4], _t(r[5]), r[6], _t(r[7]), float(r[8]), int(r[9]))
        )
    if (d / DROP_FILE).exists():
        for r in _read_rows(d / DROP_FILE, DROP_HEADER):
            rs.drops.append(DropRecord(int(r[0]), r[1], _t(r[2]), r[3]))
    return rs


# -- timestamp algebra -------------------------------------------------------------


class Times(NamedTuple):
    latency: float
    waiting: float
    service: float
    response: float
    total_response: float


def times(rec: ComputeRecord) -> Times:
    """The five derived durations of a compute record."""
    stamps = (rec.time_emit, rec.time_reception, rec.time_in, rec.time_out)
    if any(s is None or (isinstance(s, float) and math.isnan(s)) for s in stamps):
        raise ValueError(f"record {rec.id} is missing a timestamp")
    return Times(
        latency=rec.time_reception - rec.time_emit,
        waiting=rec.time_in - rec.time_reception,
        service=rec.time_out - rec.time_in,
        response=rec.time_out - rec.time_reception,
        total_response=rec.time_out - rec.time_emit,
    )


COMPUTE_METRICS = Times._fields
LINK_METRICS = ("latency", "buffer", "size")


@dataclass(frozen=True)
class SequenceLatency:
    mean: float | None
    complete: int
    incomplete: int
    values: tuple[float, ...] = ()


def sequence_latency(
    records: Iterable[ComputeRecord],
    sequence: Sequence[str],
    messages: Iterable[str] | None = None,
) -> SequenceLatency:
    """Mean end-to-end time along a chain of message types sharing an id.

    For each instance id, every stage contributes its latency plus response
    (the record's total response); ids missing a stage are counted as
    incomplete and left out of the mean.
    """
    records = list(records)
    if not sequence:
        raise ValueError("empty message sequence")
    known = set(messages) if messages is not None else {r.message for r in records}
    if records or messages is not None:
        unknown = [m for m in sequence if m not in known]
        if unknown:
            raise ValueError(f"unknown message name(s) in sequence: {unknown}")
    wanted = set(sequence)
    first: dict[tuple[int, str], ComputeRecord] = {}
    for r in records:
        if r.message not in wanted:
            continue
        key = (r.id, r.message)
        prev = first.get(key)
        if prev is None or r.time_in < prev.time_in:
            first[key] = r
    ids = sorted({i for i, _ in first})
    values = []
    incomplete = 0
    for i in ids:
        stages = [first.get((i, m)) for m in sequence]
        if any(s is None for s in stages):
            incomplete += 1
            continue
        values.append(sum(s.time_out - s.time_emit for s in stages))
    mean = statistics.fmean(values) if values else None
    return SequenceLatency(mean, len(values), incomplete, tuple(values))


@dataclass(frozen=True)
class MetricSeries:
    """Aggregates over consecutive time buckets of width ``window``.

    ``values[i]`` covers ``[i*window, (i+1)*window)``; None marks an empty bucket.
    """

    window: float
    values: tuple[float | None, ...]
    counts: tuple[int, ...]
    metric: str = ""
    agg: str = "mean"

    @property
    def starts(self) -> list[float]:
        return [i * self.window for i in range(len(self.values))]

    def nonempty(self) -> list[tuple[float, float]]:
        return [(s, v) for s, v in zip(self.starts, self.values) if v is not None]

    def rows(self) -> list[tuple[float, float | None, int]]:
        return list(zip(self.starts, self.values, self.counts))


_AGGS: dict[str, Callable[[list[float]], float]] = {
    "mean": statistics.fmean,
    "max": max,
    "min": min,
    "count": len,
    "sum": math.fsum,
}


def _bucketize(
    keyed: list[tuple[float, float]], window: float, until: float | None, agg: str, metric: str
) -> MetricSeries:
    if not window > 0:
        raise ValueError("window must be positive")
    if agg not in _AGGS:
        raise ValueError(f"unknown aggregate {agg!r}; choose from {sorted(_AGGS)}")
    horizon = until if until is not None else max((t for t, _ in keyed), default=0.0)
    n = max(1, math.ceil(horizon / window)) if horizon > 0 else (1 if keyed else 0)
    buckets: list[list[float]] = [[] for _ in range(n)]
    for t, v in keyed:
        i = min(int(t // window), n - 1)
        buckets[i].append(v)
    fn = _AGGS[agg]
    values = tuple(float(fn(b)) if b else None for b in buckets)
    return MetricSeries(window, values, tuple(len(b) for b in buckets), metric, agg)


def windowed(
    records: Iterable[ComputeRecord | LinkRecord],
    metric: str,
    window: float,
    until: float | None = None,
    agg: str = "mean",
) -> MetricSeries:
    """Bucket records by time (``time_in`` for compute, ``ctime`` for link)
    and aggregate ``metric`` in each bucket.

    Records stamped exactly at ``until`` land in the last bucket.
    """
    keyed: list[tuple[float, float]] = []
    for r in records:
        if isinstance(r, LinkRecord):
            if metric not in LINK_METRICS:
                raise ValueError(f"link records have no metric {metric!r}")
            keyed.append((r.ctime, float(getattr(r, metric))))
        else:
            if metric not in COMPUTE_METRICS:
                raise ValueError(f"compute records have no metric {metric!r}")
            keyed.append((r.time_in, getattr(times(r), metric)))
    return _bucketize(keyed, window, until, agg, metric)


@dataclass(frozen=True)
class Saturation:
    max: MetricSeries
    mean: MetricSeries


def saturation_series(
    records: Iterable[LinkRecord],
    window: float,
    until: float | None = None,
    group: Mapping[int, Any] | Callable[[int], Any] | None = None,
) -> Saturation | dict[Any, Saturation]:
    """Windowed max and mean of the network buffer gauge.

    With ``group`` (node -> tag), returns one :class:`Saturation` per tag of
    the sending node; otherwise a single one.
    """
    records = list(records)
    if until is None:
        until = max((r.ctime for r in records), default=0.0)

    def build(rs: list[LinkRecord]) -> Saturation:
        keyed = [(r.ctime, float(r.buffer)) for r in rs]
        return Saturation(
            _bucketize(keyed, window, until, "max", "buffer"),
            _bucketize(keyed, window, until, "mean", "buffer"),
        )

    if group is None:
        return build(records)
    tag_of = group if callable(group) else group.get
    grouped: dict[Any, list[LinkRecord]] = {}
    for r in records:
        grouped.setdefault(tag_of(r.src), []).append(r)
    return {tag: build(rs) for tag, rs in sorted(grouped.items(), key=lambda kv: str(kv[0]))}


def summarize(values: Sequence[float]) -> dict[str, float]:
    """Mean, sample variance, min and max of a set of replication values."""
    if not values:
        raise ValueError("no values to summarize")
    return {
        "mean": statistics.fmean(values),
        "var": statistics.variance(values) if len(values) > 1 else 0.0,
        "min": min(values),
        "max": max(values),
        "n": len(values),
    }

