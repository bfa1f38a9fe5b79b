"""Deterministic generator of coupled dual-domain ICS-like telemetry.

The normal regime is cross-coupled sinusoid sensors plus a packet stream
whose per-pair rates track sensor activity. Anomalies are injected into the
test span as post-hoc edits of the baseline arrays, so an event in one
domain leaves the other domain bit-identical to the anomaly-free twin.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .ingest import NETWORK, PHYSICAL, DomainSeries


@dataclass
class SynthConfig:
    num_nodes: int = 10
    train_steps: int = 6000
    test_steps: int = 3000
    seed: int = 0
    anomaly_fraction: float = 0.05
    anomaly_mix: float = 0.5  # share of physical-only events
    coupling_density: float = 0.3
    noise_scale: float = 0.05
    anomalies: bool = True

    def validate(self) -> None:
        if self.num_nodes < 2:
            raise ValueError("need at least 2 nodes")
        if self.train_steps <= 0 or self.test_steps <= 0:
            raise ValueError("step counts must be positive")
        for name in ("anomaly_fraction", "anomaly_mix", "coupling_density"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must be in [0, 1], got {v}")


@dataclass
class SynthEvent:
    start: int  # timestep index into the full timeline
    end: int  # exclusive
    domain: str
    kind: str  # spike | drift | flood | silence
    node: int


@dataclass
class SynthOutput:
    physical_train: DomainSeries
    physical_test: DomainSeries
    network_train: DomainSeries
    network_test: DomainSeries
    events: list[SynthEvent]
    # raw material for CSV emission
    phys_values: np.ndarray  # N x T
    pair_list: list[tuple[int, int]]
    pair_counts: np.ndarray  # P x T int
    pair_payload: np.ndarray  # P, bytes per packet
    train_steps: int

    @property
    def node_names(self) -> list[str]:
        return [f"dev{i:02d}" for i in range(self.phys_values.shape[0])]


EVENT_MIN_LEN = 10
EVENT_MAX_LEN = 30
EVENT_MARGIN = 20  # gap between events, > window so histories don't overlap
SPIKE_SCALE = 5.0  # offset in units of the node's own signal amplitude
FLOOD_FACTOR = 10
# A flood's footprint outlasts the burst: any forecast whose input history
# overlaps the ten-fold counts is still conditioned on wildly out-of-range
# observations. Flood spans therefore cover the burst plus one history
# length of washout, and the count edit stops EVENT_WASHOUT steps early.
EVENT_WASHOUT = 15
FLOOD_MIN_LEN = EVENT_WASHOUT + EVENT_MIN_LEN
# Trailing nodes emit unstructured readings (a faulty or free-running
# sensor). Their windows carry no forecastable signal, so a neighbor
# aggregation that weights by feature content can learn to discount them,
# whereas uniform mixing blends their noise into every node's context.
# Events target the structured nodes.
NOISE_NODES = 2


def _num_noise_nodes(n: int) -> int:
    return min(NOISE_NODES, n - 3) if n > 3 else 0


def generate(cfg: SynthConfig) -> SynthOutput:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    N = cfg.num_nodes
    T = cfg.train_steps + cfg.test_steps

    # physical baseline: per-node sinusoids with cross-node linear coupling
    # plus noise. Periods are drawn from a small shared set: a sum of 3
    # frequencies obeys an order-6 linear recurrence, so a window-15 history
    # determines the next step and a forecaster has a clean target. The
    # periods divide a common cycle shorter than the validation span, so the
    # validation residuals cover every phase pattern the test span shows.
    cycle = int(rng.integers(240, 361))
    shared_periods = cycle / np.array([3.0, 4.0, 6.0])
    periods = shared_periods[np.arange(N) % 3]
    phases = rng.uniform(0, 2 * np.pi, N)
    t = np.arange(T)
    base = np.sin(2 * np.pi * t[None, :] / periods[:, None] + phases[:, None])
    noisy = np.zeros(N, dtype=bool)
    n_noisy = _num_noise_nodes(N)
    if n_noisy:
        noisy[N - n_noisy :] = True
    base[noisy] = rng.standard_normal((n_noisy, T))
    coupling = (rng.random((N, N)) < cfg.coupling_density) * rng.uniform(0.3, 0.7, (N, N))
    np.fill_diagonal(coupling, 0.0)
    coupling[:, noisy] = 0.0  # unstructured readings stay out of the coupled signals
    coupling[noisy, :] = 0.0
    clean = base + coupling @ base
    # per-node amplitude over the training span; anomaly offsets scale with it
    node_amp = (
        clean[:, : cfg.train_steps].max(axis=1) - clean[:, : cfg.train_steps].min(axis=1)
    ) / 2.0
    phys = clean + cfg.noise_scale * rng.standard_normal((N, T))

    # network baseline: ring plus random extra directed pairs
    pairs = [(i, (i + 1) % N) for i in range(N)]
    extra = rng.integers(0, N, (N, 2))
    for i, j in extra:
        i, j = int(i), int(j)
        if i != j and (i, j) not in pairs:
            pairs.append((i, j))
    P = len(pairs)
    # rates large enough that integer quantization is small relative to the
    # sinusoidal swing, so count series are genuinely forecastable
    pair_base = rng.uniform(20.0, 30.0, P)
    pair_amp = rng.uniform(3.0, 5.0, P)
    rates = pair_base[:, None] + pair_amp[:, None] * base[[i for i, _ in pairs], :]
    counts = np.rint(rates + 0.3 * rng.standard_normal((P, T))).astype(np.int64)
    counts = np.maximum(counts, 0)
    pair_payload = rng.integers(100, 400, P).astype(np.int64)

    labels = np.zeros(T, dtype=np.int64)
    events: list[SynthEvent] = []
    if cfg.anomalies and cfg.anomaly_fraction > 0:
        events = _place_events(cfg, rng)
        for ev in events:
            labels[ev.start : ev.end] = 1
            if ev.domain == PHYSICAL:
                span = slice(ev.start, ev.end)
                offset = SPIKE_SCALE * node_amp[ev.node]
                if ev.kind == "spike":
                    phys[ev.node, span] += offset
                else:  # drift: ramp from 60% to the full offset
                    phys[ev.node, span] += np.linspace(0.6, 1.0, ev.end - ev.start) * offset
            else:
                rows = [p for p, (i, _) in enumerate(pairs) if i == ev.node]
                if ev.kind == "flood":
                    counts[rows, ev.start : ev.end - EVENT_WASHOUT] *= FLOOD_FACTOR
                else:  # silence
                    counts[rows, ev.start : ev.end] = 0

    net = _features_from_counts(pairs, counts, pair_payload, N)

    def phys_series(sl, lab):
        return DomainSeries(PHYSICAL, phys[:, sl][:, None, :].copy(), lab.copy())

    def net_series(sl, lab):
        return DomainSeries(NETWORK, net[:, :, sl].copy(), lab.copy())

    tr = slice(0, cfg.train_steps)
    te = slice(cfg.train_steps, T)
    return SynthOutput(
        physical_train=phys_series(tr, labels[tr]),
        physical_test=phys_series(te, labels[te]),
        network_train=net_series(tr, labels[tr]),
        network_test=net_series(te, labels[te]),
        events=events,
        phys_values=phys,
        pair_list=pairs,
        pair_counts=counts,
        pair_payload=pair_payload,
        train_steps=cfg.train_steps,
    )


def _place_events(cfg: SynthConfig, rng: np.random.Generator) -> list[SynthEvent]:
    """Non-overlapping event spans inside the test segment, injected only
    there so training data stays normal."""
    target = int(round(cfg.anomaly_fraction * cfg.test_steps))
    taken = np.zeros(cfg.test_steps, dtype=bool)
    events: list[SynthEvent] = []
    labeled = 0
    attempts = 0
    per_domain = {PHYSICAL: 0, NETWORK: 0}
    mix = cfg.anomaly_mix
    while labeled < target and attempts < 10000:
        attempts += 1
        # keep the labeled steps split between domains at the requested mix
        phys_share = per_domain[PHYSICAL] * (1 - mix)
        net_share = per_domain[NETWORK] * mix
        if phys_share == net_share:
            domain = PHYSICAL if rng.random() < mix else NETWORK
        else:
            domain = PHYSICAL if phys_share < net_share else NETWORK
        if domain == PHYSICAL:
            kind = "spike" if rng.random() < 0.5 else "drift"
        else:
            kind = "flood" if rng.random() < 0.5 else "silence"
        min_len = FLOOD_MIN_LEN if kind == "flood" else EVENT_MIN_LEN
        length = int(rng.integers(min_len, EVENT_MAX_LEN + 1))
        start = int(rng.integers(0, cfg.test_steps - length))
        lo = max(0, start - EVENT_MARGIN)
        hi = min(cfg.test_steps, start + length + EVENT_MARGIN)
        if taken[lo:hi].any():
            continue
        taken[start : start + length] = True
        node = int(rng.integers(0, cfg.num_nodes - _num_noise_nodes(cfg.num_nodes)))
        events.append(
            SynthEvent(cfg.train_steps + start, cfg.train_steps + start + length, domain, kind, node)
        )
        labeled += length
        per_domain[domain] += length
    events.sort(key=lambda e: e.start)
    return events


def _features_from_counts(pairs, counts, pair_payload, N) -> np.ndarray:
    T = counts.shape[1]
    net = np.zeros((N, 3, T))
    for p, (i, j) in enumerate(pairs):
        net[i, 0] += counts[p]
        net[j, 1] += counts[p]
        net[i, 2] += counts[p] * pair_payload[p]
    return net


# ------------------------------------------------------------- CSV emission


def write_csvs(out: SynthOutput, directory) -> dict[str, str]:
    """Emit the exact ingest schemas so the full pipeline can run unchanged:
    physical tables, per-packet network logs, node map, and event log."""
    os.makedirs(directory, exist_ok=True)
    names = out.node_names
    N, T = out.phys_values.shape
    t_train = out.train_steps
    paths = {}

    def write_physical(path, sl, labels):
        with open(path, "w") as f:
            f.write("timestamp," + ",".join(names) + ",label\n")
            for t in range(sl.start, sl.stop):
                vals = ",".join(f"{v:.10g}" for v in out.phys_values[:, t])
                f.write(f"{t},{vals},{labels[t - sl.start]}\n")

    def write_network(path, sl):
        with open(path, "w") as f:
            f.write("timestamp,src,dst,payload_bytes\n")
            for t in range(sl.start, sl.stop):
                for p, (i, j) in enumerate(out.pair_list):
                    c = out.pair_counts[p, t]
                    for _ in range(c):
                        f.write(f"{t},{names[i]},{names[j]},{out.pair_payload[p]}\n")

    paths["physical_train"] = os.path.join(directory, "train_physical.csv")
    write_physical(paths["physical_train"], slice(0, t_train), out.physical_train.labels)
    paths["physical_test"] = os.path.join(directory, "test_physical.csv")
    write_physical(paths["physical_test"], slice(t_train, T), out.physical_test.labels)
    paths["network_train"] = os.path.join(directory, "train_network.csv")
    write_network(paths["network_train"], slice(0, t_train))
    paths["network_test"] = os.path.join(directory, "test_network.csv")
    write_network(paths["network_test"], slice(t_train, T))

    paths["node_map"] = os.path.join(directory, "nodemap.csv")
    with open(paths["node_map"], "w") as f:
        f.write("device_id,node_index\n")
        for idx, name in enumerate(names):
            f.write(f"{name},{idx}\n")

    paths["events"] = os.path.join(directory, "events.csv")
    with open(paths["events"], "w") as f:
        f.write("start,end,domain,kind,node\n")
        for ev in out.events:
            f.write(f"{ev.start},{ev.end},{ev.domain},{ev.kind},{ev.node}\n")
    return paths
