"""Loading and preparation of dual-domain ICS telemetry.

Physical sensor tables and network packet logs are brought to a common
1-second grid per node, min-max normalized against the training span, and
cut into sliding windows with next-step targets.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

PHYSICAL = "physical"
NETWORK = "network"

# network channels, fixed order
NET_CHANNELS = ("sent_count", "recv_count", "sent_payload")


class SchemaError(ValueError):
    pass


class ParseError(ValueError):
    pass


@dataclass
class RawPhysicalTable:
    timestamps: np.ndarray  # int seconds, uniform 1 s spacing
    values: np.ndarray  # T x N
    labels: np.ndarray  # T, binary
    sensor_names: list[str]

    @property
    def span(self) -> tuple[int, int]:
        return int(self.timestamps[0]), int(self.timestamps[-1])


@dataclass
class RawNetworkLog:
    # (timestamp, src, dst, payload_bytes), sorted by timestamp
    records: list[tuple[int, str, str, int]]


@dataclass
class DomainSeries:
    domain_id: str
    data: np.ndarray  # N x C x T
    labels: np.ndarray  # T, binary

    @property
    def num_nodes(self) -> int:
        return self.data.shape[0]

    @property
    def num_steps(self) -> int:
        return self.data.shape[2]


@dataclass
class NormStats:
    min: np.ndarray  # N x C
    max: np.ndarray  # N x C

    @property
    def constant_mask(self) -> np.ndarray:
        return self.max <= self.min


@dataclass
class WindowedDataset:
    inputs: np.ndarray  # W x N x C x w
    targets: np.ndarray  # W x N x C
    target_timestamps: np.ndarray  # W
    target_labels: np.ndarray  # W
    window: int

    @property
    def count(self) -> int:
        return self.inputs.shape[0]


def load_node_map(path) -> dict[str, int]:
    """CSV `device_id,node_index` -> mapping, validated injective."""
    entries: dict[str, int] = {}
    used: dict[int, str] = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"device_id", "node_index"} <= set(reader.fieldnames):
            raise SchemaError(f"{path}: expected header device_id,node_index")
        for lineno, row in enumerate(reader, start=2):
            dev, idx = row["device_id"], int(row["node_index"])
            if dev in entries:
                raise ParseError(f"{path}:{lineno}: duplicate device {dev!r}")
            entries[dev] = idx
            used.setdefault(idx, dev)
    return entries


def load_physical(path, sensor_columns: list[str] | None = None) -> RawPhysicalTable:
    """Parse a physical CSV (`timestamp,<sensor...>,label`) and forward-fill
    any missing seconds."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty file")
        if header[0] != "timestamp" or header[-1] != "label":
            raise SchemaError(
                f"{path}: expected columns timestamp,<sensor...>,label, got {header[:3]}..."
            )
        names = header[1:-1]
        if sensor_columns is not None and names != list(sensor_columns):
            raise SchemaError(f"{path}: sensor columns {names} != expected {sensor_columns}")
        if not names:
            raise SchemaError(f"{path}: no sensor columns")

        ts, rows, labels = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            try:
                t = int(float(row[0]))
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad timestamp {row[0]!r}") from None
            vals = []
            for col, cell in zip(names, row[1:-1]):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"{path}:{lineno}: non-numeric value {cell!r} in column {col}"
                    ) from None
            try:
                lab = int(row[-1])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad label {row[-1]!r}") from None
            if lab not in (0, 1):
                raise ParseError(f"{path}:{lineno}: label must be 0 or 1, got {lab}")
            if ts and t <= ts[-1]:
                raise ParseError(f"{path}:{lineno}: timestamps must be strictly increasing")
            ts.append(t)
            rows.append(vals)
            labels.append(lab)

    if not ts:
        raise ParseError(f"{path}: no data rows")

    # forward-fill gaps so the grid is uniform at 1 s
    full_ts, full_rows, full_labels = [ts[0]], [rows[0]], [labels[0]]
    for t, vals, lab in zip(ts[1:], rows[1:], labels[1:]):
        while full_ts[-1] + 1 < t:
            full_ts.append(full_ts[-1] + 1)
            full_rows.append(full_rows[-1])
            full_labels.append(full_labels[-1])
        full_ts.append(t)
        full_rows.append(vals)
        full_labels.append(lab)

    return RawPhysicalTable(
        timestamps=np.array(full_ts, dtype=np.int64),
        values=np.array(full_rows, dtype=np.float64),
        labels=np.array(full_labels, dtype=np.int64),
        sensor_names=names,
    )


def physical_series(table: RawPhysicalTable) -> DomainSeries:
    """Physical domain as N x 1 x T."""
    return DomainSeries(
        domain_id=PHYSICAL,
        data=table.values.T[:, None, :].copy(),
        labels=table.labels.copy(),
    )


def load_network(path) -> RawNetworkLog:
    """Parse a network CSV (`timestamp,src,dst,payload_bytes`), output sorted
    by timestamp."""
    records = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        expected = {"timestamp", "src", "dst", "payload_bytes"}
        if reader.fieldnames is None or not expected <= set(reader.fieldnames):
            raise SchemaError(f"{path}: expected header timestamp,src,dst,payload_bytes")
        for lineno, row in enumerate(reader, start=2):
            try:
                t = int(float(row["timestamp"]))
                payload = int(row["payload_bytes"])
            except (ValueError, TypeError):
                raise ParseError(f"{path}:{lineno}: malformed record {row}") from None
            if payload < 0:
                raise ParseError(f"{path}:{lineno}: negative payload {payload}")
            records.append((t, row["src"], row["dst"], payload))
    records.sort(key=lambda r: r[0])
    return RawNetworkLog(records=records)


def extract_network_features(
    log: RawNetworkLog,
    node_map: dict[str, int],
    span: tuple[int, int],
    num_nodes: int,
    labels: np.ndarray | None = None,
) -> tuple[DomainSeries, int]:
    """Per-node, per-second sent-count / received-count / sent-payload over
    `span` (inclusive). Seconds without packets are zero. Records touching an
    unmapped device are skipped whole; the skip tally is returned."""
    t0, t1 = span
    T = t1 - t0 + 1
    if T <= 0:
        raise ValueError(f"empty span {span}")
    data = np.zeros((num_nodes, 3, T), dtype=np.float64)
    skipped = 0
    for t, src, dst, payload in log.records:
        if t < t0 or t > t1:
            continue
        si = node_map.get(src)
        di = node_map.get(dst)
        if si is None or di is None:
            skipped += 1
            continue
        b = t - t0
        data[si, 0, b] += 1
        data[si, 2, b] += payload
        data[di, 1, b] += 1
    if labels is None:
        labels = np.zeros(T, dtype=np.int64)
    elif len(labels) != T:
        raise ValueError(f"labels length {len(labels)} != span length {T}")
    return DomainSeries(domain_id=NETWORK, data=data, labels=np.asarray(labels)), skipped


def fit_normalizer(train: DomainSeries) -> NormStats:
    if train.num_steps == 0:
        raise ValueError("cannot fit normalizer on an empty series")
    return NormStats(min=train.data.min(axis=2), max=train.data.max(axis=2))


def apply_normalizer(series: DomainSeries, stats: NormStats) -> DomainSeries:
    """(x - min) / (max - min), without clamping; constant channels map to 0."""
    lo = stats.min[:, :, None]
    span = (stats.max - stats.min)[:, :, None]
    safe = np.where(span > 0, span, 1.0)
    data = np.where(span > 0, (series.data - lo) / safe, 0.0)
    return DomainSeries(domain_id=series.domain_id, data=data, labels=series.labels.copy())


def make_windows(series: DomainSeries, window: int, t0: int = 0) -> WindowedDataset:
    """All T - w (input, next-step target) pairs, in time order."""
    T = series.num_steps
    if T <= window:
        raise ValueError(f"series length {T} must exceed window {window}")
    count = T - window
    strided = np.lib.stride_tricks.sliding_window_view(series.data, window, axis=2)
    # strided: N x C x count+? x w -> take the first `count` starts
    inputs = strided[:, :, :count, :].transpose(2, 0, 1, 3).copy()
    targets = series.data[:, :, window:].transpose(2, 0, 1).copy()
    return WindowedDataset(
        inputs=inputs,
        targets=targets,
        target_timestamps=np.arange(t0 + window, t0 + T, dtype=np.int64),
        target_labels=series.labels[window:].copy(),
        window=window,
    )


def split_train_validation(
    ds: WindowedDataset, val_fraction: float = 0.1
) -> tuple[WindowedDataset, WindowedDataset]:
    """Validation = final ceil(fraction * count) windows, time order kept."""
    if not 0 < val_fraction < 1:
        raise ValueError(f"val_fraction must be in (0, 1), got {val_fraction}")
    n_val = int(np.ceil(val_fraction * ds.count))
    n_train = ds.count - n_val
    if n_val == 0 or n_train == 0:
        raise ValueError(f"split of {ds.count} windows at {val_fraction} leaves an empty side")

    def take(sl):
        return WindowedDataset(
            inputs=ds.inputs[sl],
            targets=ds.targets[sl],
            target_timestamps=ds.target_timestamps[sl],
            target_labels=ds.target_labels[sl],
            window=ds.window,
        )

    return take(slice(0, n_train)), take(slice(n_train, ds.count))
