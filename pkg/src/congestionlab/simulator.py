"""Discrete-event simulation of IoT devices feeding a bounded gateway queue.

Topology: N devices generate Poisson packet arrivals into one drop-tail
gateway queue served by a single uplink at the configured capacity.  Load
scenarios scale the aggregate offered rate relative to link capacity
(Low 0.4x, Medium 0.8x, High 1.25x).  At each telemetry interval the run
summarizes the interval into a TelemetryRecord, hands it to an optional
controller hook, and applies whatever ControlAction comes back:

* TRAFFIC_SHAPING gates packet injection through a token bucket refilling at
  80% of link capacity; arrivals the bucket cannot cover are suppressed at
  the source (the device holds the packet back; it is never injected).
* QOS_ADJUSTMENT switches the queue to two-class strict priority, with the
  delay-sensitive class served first and allowed to displace the newest
  low-priority packet when the buffer is full.
* NONE restores full-rate FIFO service.

Per-packet delay decomposes into propagation + transmission + queueing +
processing components.  Runs are deterministic under (config, seed).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .controller import ControlAction
from .telemetry import CongestionLevel, TelemetryRecord


class SimulationError(ValueError):
    pass


class LoadScenario(Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"

    @property
    def load_multiplier(self) -> float:
        return {"low": 0.4, "medium": 0.8, "high": 1.25}[self.value]


@dataclass
class SimConfig:
    duration_s: float = 300.0
    device_count: int = 20
    link_capacity_bps: float = 100_000.0
    packet_size_bits: float = 1000.0
    payload_distribution: str = "fixed"  # "fixed" | "exponential"
    buffer_packets: int = 50
    propagation_ms: float = 2.0
    processing_ms: float = 0.5
    telemetry_interval_s: float = 10.0
    scenario: LoadScenario = LoadScenario.MEDIUM
    load_multiplier: float | None = None  # overrides the scenario preset
    priority_fraction: float = 0.2        # share of devices that are delay-sensitive
    shaping_fraction: float = 0.8         # token-bucket rate as share of capacity
    shaping_bucket_bits: float | None = None  # default: 2 packets worth
    seed: int = 0

    def __post_init__(self):
        if self.duration_s <= 0 or self.link_capacity_bps <= 0 \
                or self.buffer_packets <= 0 or self.device_count < 0 \
                or self.packet_size_bits <= 0:
            raise SimulationError("durations, capacities and sizes must be positive")
        if self.telemetry_interval_s <= 0:
            raise SimulationError("telemetry interval must be positive")
        n_intervals = self.duration_s / self.telemetry_interval_s
        if abs(n_intervals - round(n_intervals)) > 1e-9:
            raise SimulationError("telemetry interval must divide the duration")
        if self.payload_distribution not in ("fixed", "exponential"):
            raise SimulationError(
                f"unknown payload distribution {self.payload_distribution!r}")

    @property
    def effective_load(self) -> float:
        if self.load_multiplier is not None:
            return self.load_multiplier
        return self.scenario.load_multiplier

    @property
    def per_device_rate_pps(self) -> float:
        """Poisson rate per device so aggregate offered bits = load x capacity."""
        if self.device_count == 0:
            return 0.0
        aggregate_pps = (self.effective_load * self.link_capacity_bps
                         / self.packet_size_bits)
        return aggregate_pps / self.device_count

    @property
    def intervals(self) -> int:
        return int(round(self.duration_s / self.telemetry_interval_s))


@dataclass
class Packet:
    id: int
    source: int
    size_bits: float
    created_s: float
    enqueued_s: float
    priority: str = "low"            # "high" = delay-sensitive class
    service_start_s: float | None = None
    service_end_s: float | None = None
    disposition: str = "pending"     # pending | delivered | dropped

    def csv_row(self) -> str:
        def fmt(x):
            return "" if x is None else f"{x:.6f}"
        return (f"{self.id},{self.source},{self.size_bits:.0f},"
                f"{self.created_s:.6f},{self.enqueued_s:.6f},"
                f"{fmt(self.service_start_s)},{fmt(self.service_end_s)},"
                f"{self.priority},{self.disposition}")


PACKET_LOG_HEADER = "id,src,size_bits,created_s,enqueued_s,served_s,departed_s,priority,disposition"


@dataclass
class DelayBreakdown:
    propagation_ms: float
    transmission_ms: float
    queueing_ms: float
    processing_ms: float

    def __post_init__(self):
        for value in (self.propagation_ms, self.transmission_ms,
                      self.queueing_ms, self.processing_ms):
            if value < 0:
                raise ValueError("delay components must be non-negative")


def compute_packet_delay(packet: Packet, config: SimConfig) -> DelayBreakdown:
    """Four-component delay decomposition for a delivered packet."""
    if packet.disposition != "delivered":
        raise SimulationError("delay is only defined for delivered packets")
    return DelayBreakdown(
        propagation_ms=config.propagation_ms,
        transmission_ms=packet.size_bits / config.link_capacity_bps * 1000.0,
        queueing_ms=(packet.service_start_s - packet.enqueued_s) * 1000.0,
        processing_ms=config.processing_ms,
    )


def label_congestion(mean_occupancy: float) -> CongestionLevel:
    """Occupancy-threshold labels: <0.4 low, [0.4,0.7) medium, >=0.7 high."""
    if not 0.0 <= mean_occupancy <= 1.0:
        raise SimulationError(f"occupancy {mean_occupancy} outside [0,1]")
    if mean_occupancy < 0.4:
        return CongestionLevel.LOW
    if mean_occupancy < 0.7:
        return CongestionLevel.MEDIUM
    return CongestionLevel.HIGH


def schedule_arrivals(config: SimConfig, seed: int | None = None
                      ) -> list[tuple[float, int, float]]:
    """Pre-draw every device's Poisson arrival times and payload sizes and
    merge them in time order.  Each device gets its own deterministic
    substream so the merged stream is reproducible."""
    seed = config.seed if seed is None else seed
    rate = config.per_device_rate_pps
    arrivals: list[tuple[float, int, float]] = []
    if rate <= 0:
        return arrivals
    for device in range(config.device_count):
        rng = np.random.default_rng([seed, device])
        t = 0.0
        while True:
            t += rng.exponential(1.0 / rate)
            if t >= config.duration_s:
                break
            if config.payload_distribution == "exponential":
                size = max(1.0, rng.exponential(config.packet_size_bits))
            else:
                size = config.packet_size_bits
            arrivals.append((t, device, size))
    arrivals.sort()
    return arrivals


@dataclass
class TokenBucket:
    rate_bps: float
    depth_bits: float
    tokens: float = 0.0
    last_refill_s: float = 0.0

    def admit(self, now: float, size_bits: float) -> bool:
        self.tokens = min(self.depth_bits,
                          self.tokens + self.rate_bps * (now - self.last_refill_s))
        self.last_refill_s = now
        if self.tokens >= size_bits:
            self.tokens -= size_bits
            return True
        return False


@dataclass
class IntervalStats:
    """Raw per-interval accumulators, consumed by metrics.interval_metrics."""
    index: int
    injected: int = 0
    delivered: int = 0
    dropped: int = 0
    suppressed: int = 0
    delivered_bits: float = 0.0
    total_delays_ms: list[float] = field(default_factory=list)
    high_priority_delays_ms: list[float] = field(default_factory=list)
    low_priority_delays_ms: list[float] = field(default_factory=list)
    breakdown_sums: np.ndarray = field(
        default_factory=lambda: np.zeros(4))  # prop, trans, queue, proc
    mean_occupancy: float = 0.0
    action_in_force: ControlAction = ControlAction.NONE
    admitted_bits: float = 0.0


@dataclass
class SimState:
    config: SimConfig
    queue: deque = field(default_factory=deque)
    in_service: Packet | None = None
    discipline: str = "fifo"             # "fifo" | "priority"
    shaper: TokenBucket | None = None
    injected: int = 0
    delivered: int = 0
    dropped: int = 0
    suppressed: int = 0
    conservation_violations: int = 0

    def conservation_holds(self) -> bool:
        in_flight = 1 if self.in_service is not None else 0
        return self.injected == (self.delivered + self.dropped
                                 + len(self.queue) + in_flight)


def apply_action(state: SimState, action: ControlAction, now: float = 0.0
                 ) -> SimState:
    """Reconfigure the gateway; actions persist until changed."""
    config = state.config
    if action == ControlAction.NONE:
        state.shaper = None
        state.discipline = "fifo"
    elif action == ControlAction.TRAFFIC_SHAPING:
        if state.shaper is None:
            depth = (config.shaping_bucket_bits
                     if config.shaping_bucket_bits is not None
                     else 2.0 * config.packet_size_bits)
            state.shaper = TokenBucket(
                rate_bps=config.shaping_fraction * config.link_capacity_bps,
                depth_bits=depth, tokens=depth, last_refill_s=now)
        state.discipline = "fifo"
    elif action == ControlAction.QOS_ADJUSTMENT:
        state.shaper = None
        state.discipline = "priority"
    else:
        raise SimulationError(f"unknown action {action}")
    return state


def enqueue(state: SimState, packet: Packet) -> str:
    """Drop-tail admission; under priority discipline a high-priority arrival
    displaces the newest low-priority packet when the buffer is full.
    Returns "accept" or "drop" (for the arriving packet)."""
    if len(state.queue) < state.config.buffer_packets:
        state.queue.append(packet)
        return "accept"
    if state.discipline == "priority" and packet.priority == "high":
        for pos in range(len(state.queue) - 1, -1, -1):
            victim = state.queue[pos]
            if victim.priority == "low":
                del state.queue[pos]
                victim.disposition = "dropped"
                state.dropped += 1
                state.queue.append(packet)
                return "accept"
    packet.disposition = "dropped"
    state.dropped += 1
    return "drop"


def _next_to_serve(state: SimState) -> Packet:
    if state.discipline == "priority":
        for pos in range(len(state.queue)):
            if state.queue[pos].priority == "high":
                pkt = state.queue[pos]
                del state.queue[pos]
                return pkt
    return state.queue.popleft()


@dataclass
class SimResult:
    config: SimConfig
    telemetry: list[TelemetryRecord]
    packets: list[Packet]
    intervals: list[IntervalStats]
    actions: list[tuple[float, ControlAction]]
    counters: dict


def run(config: SimConfig, controller_hook=None,
        record_packets: bool = True) -> SimResult:
    """Execute the event loop over the configured duration.

    `controller_hook(record)` is invoked after each telemetry interval and may
    return a ControlAction (or None, treated as ControlAction.NONE) that is
    applied before the next interval starts.
    """
    arrivals = schedule_arrivals(config)
    high_priority_devices = int(round(config.priority_fraction
                                      * config.device_count))

    state = SimState(config=config)
    packets: list[Packet] = []
    telemetry: list[TelemetryRecord] = []
    interval_log: list[IntervalStats] = []
    action_log: list[tuple[float, ControlAction]] = []

    now = 0.0
    occ_integral = 0.0
    last_occ_time = 0.0
    arrival_idx = 0
    packet_id = 0
    service_end = None  # time the in-service packet finishes
    current_action = ControlAction.NONE
    stats = IntervalStats(index=0)

    def advance_occupancy(to_time):
        nonlocal occ_integral, last_occ_time
        occ_integral += len(state.queue) * (to_time - last_occ_time)
        last_occ_time = to_time

    def start_service_if_idle(at_time):
        nonlocal service_end
        if state.in_service is None and state.queue:
            pkt = _next_to_serve(state)
            pkt.service_start_s = at_time
            service_end = at_time + pkt.size_bits / config.link_capacity_bps
            state.in_service = pkt

    def finish_service(at_time):
        nonlocal service_end
        pkt = state.in_service
        pkt.service_end_s = at_time
        pkt.disposition = "delivered"
        state.delivered += 1
        state.in_service = None
        service_end = None
        stats.delivered += 1
        stats.delivered_bits += pkt.size_bits
        bd = compute_packet_delay(pkt, config)
        total = (bd.propagation_ms + bd.transmission_ms
                 + bd.queueing_ms + bd.processing_ms)
        stats.total_delays_ms.append(total)
        if pkt.priority == "high":
            stats.high_priority_delays_ms.append(total)
        else:
            stats.low_priority_delays_ms.append(total)
        stats.breakdown_sums += (bd.propagation_ms, bd.transmission_ms,
                                 bd.queueing_ms, bd.processing_ms)

    for interval_idx in range(config.intervals):
        boundary = (interval_idx + 1) * config.telemetry_interval_s
        stats.index = interval_idx
        stats.action_in_force = current_action
        interval_injected0 = state.injected
        interval_dropped0 = state.dropped
        interval_suppressed0 = state.suppressed
        occ_integral = 0.0
        last_occ_time = now

        while True:
            next_arrival = arrivals[arrival_idx][0] \
                if arrival_idx < len(arrivals) else float("inf")
            next_event = min(next_arrival,
                             service_end if service_end is not None else float("inf"))
            if next_event >= boundary:
                break
            now = next_event
            advance_occupancy(now)
            if service_end is not None and service_end <= next_arrival:
                finish_service(now)
                start_service_if_idle(now)
            else:
                t_arr, device, size = arrivals[arrival_idx]
                arrival_idx += 1
                if state.shaper is not None and not state.shaper.admit(now, size):
                    state.suppressed += 1
                else:
                    pkt = Packet(
                        id=packet_id, source=device, size_bits=size,
                        created_s=t_arr, enqueued_s=t_arr,
                        priority="high" if device < high_priority_devices else "low",
                    )
                    packet_id += 1
                    state.injected += 1
                    stats.injected += 1
                    stats.admitted_bits += size
                    enqueue(state, pkt)
                    if record_packets:
                        packets.append(pkt)
                    start_service_if_idle(now)
            if not state.conservation_holds():
                state.conservation_violations += 1

        now = boundary
        advance_occupancy(now)

        injected = state.injected - interval_injected0
        dropped = state.dropped - interval_dropped0
        stats.dropped = dropped
        stats.injected = injected
        stats.suppressed = state.suppressed - interval_suppressed0
        occ_mean = occ_integral / config.telemetry_interval_s / config.buffer_packets
        occ_mean = min(1.0, max(0.0, occ_mean))
        stats.mean_occupancy = occ_mean

        empty = stats.delivered == 0
        delay_ms = (float(np.mean(stats.total_delays_ms))
                    if stats.total_delays_ms else 0.0)
        record = TelemetryRecord(
            timestamp_s=boundary,
            throughput_kbps=stats.delivered_bits / config.telemetry_interval_s
            / 1000.0,
            delay_ms=delay_ms,
            packet_loss_rate=(dropped / injected) if injected else 0.0,
            queue_occupancy=occ_mean,
            active_devices=config.device_count,
            label=label_congestion(occ_mean),
            empty_interval=empty,
        )
        telemetry.append(record)
        interval_log.append(stats)

        if controller_hook is not None:
            decided = controller_hook(record)
            action = decided if decided is not None else ControlAction.NONE
            if action != current_action:
                apply_action(state, action, now=now)
                current_action = action
            action_log.append((boundary, action))

        stats = IntervalStats(index=interval_idx + 1)

    in_flight = 1 if state.in_service is not None else 0
    counters = {
        "injected": state.injected,
        "delivered": state.delivered,
        "dropped": state.dropped,
        "suppressed": state.suppressed,
        "queued": len(state.queue),
        "in_flight": in_flight,
        "conservation_violations": state.conservation_violations,
    }
    return SimResult(config=config, telemetry=telemetry, packets=packets,
                     intervals=interval_log, actions=action_log,
                     counters=counters)
