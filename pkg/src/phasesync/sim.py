"""Virtual-time simulation of multi-phone clock sync and camera phase alignment.

Device 0 is the leader and defines the reference clock. A session:

1. polls every other device with four-timestamp NTP exchanges over a
   simulated network and keeps the offset of the minimum round-trip sample;
2. records a short preview trace on every device and fits its phase model;
3. compares the fitted grids at a common epoch (the middle of the preview
   window, in the leader domain via the estimated offsets) and plans a phase
   shift per device that brings it onto the leader's grid;
4. injects one extended frame per device to realize the shift;
5. streams a video segment and measures pairwise capture skew on the true
   capture instants, mapped to the leader clock with the true offsets.

Nothing sleeps; every instant is a float in nanoseconds of virtual time.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import MessageLost, NoSamples, PeriodMismatch, SessionFailed
from .estimator import EstimateOptions, estimate
from .model import PhaseModel, normalize_phase, validate_trace, wrap
from .rng import SplitMix64

NS_PER_MIN = 60e9
SKEW_TARGET_NS = 250_000.0


@dataclass(frozen=True)
class NetworkModel:
    """Per-direction latency ``base + |N(0, jitter)|`` (uplink adds ``asymmetry``).

    The jitter is a Gaussian truncated to its nonnegative half: queueing only
    ever delays a message. Uplink is device -> leader.
    """

    base_latency_ns: float = 2e6
    latency_jitter_sigma_ns: float = 1e6
    asymmetry_ns: float = 0.0
    loss_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.base_latency_ns < 0 or self.latency_jitter_sigma_ns < 0:
            raise ValueError("latency parameters must be nonnegative")
        if not 0 <= self.loss_prob < 1:
            raise ValueError("loss_prob must lie in [0, 1)")

    def stream(self) -> SplitMix64:
        return SplitMix64(self.seed)


@dataclass(frozen=True)
class CameraParams:
    """Capture grid in the device's local clock.

    ``phase_ns`` is the current phase; ``shifts`` lists ``(at_local_ns, delta_ns)``
    events, each stretching the first frame at or after ``at_local_ns`` by
    ``delta_ns``.
    """

    period_ns: float
    phase_ns: float
    jitter_sigma_ns: float = 0.0
    shifts: tuple = ()

    def capture_times(self, start_local_ns: float, count: int) -> np.ndarray:
        """True (noise-free) local capture instants of ``count`` frames from ``start_local_ns``."""
        total = sum(d for _, d in self.shifts)
        base_phase = normalize_phase(self.phase_ns - total, self.period_ns)
        k0 = math.floor((start_local_ns - base_phase - total) / self.period_ns) - 1
        times = base_phase + (k0 + np.arange(count + len(self.shifts) + 3)) * self.period_ns
        for at, delta in self.shifts:
            times = np.where(times >= at, times + delta, times)
        times = times[times >= start_local_ns]
        return times[:count]


@dataclass(frozen=True)
class SimDevice:
    device_id: str
    true_clock_offset_ns: float
    camera: CameraParams
    true_skew_ns_per_min: float = 0.0
    estimated_offset_ns: float | None = None

    def local_time(self, leader_ns):
        return leader_ns + self.true_clock_offset_ns + self.true_skew_ns_per_min / NS_PER_MIN * leader_ns

    def leader_time(self, local_ns):
        return (np.asarray(local_ns) - self.true_clock_offset_ns) / (1.0 + self.true_skew_ns_per_min / NS_PER_MIN)


@dataclass(frozen=True)
class OffsetSample:
    t1: float
    t2: float
    t3: float
    t4: float

    @property
    def offset_ns(self) -> float:
        return ((self.t2 - self.t1) + (self.t3 - self.t4)) / 2

    @property
    def rtt_ns(self) -> float:
        return (self.t4 - self.t1) - (self.t3 - self.t2)


@dataclass(frozen=True)
class AlignmentPlan:
    shifts_ns: dict

    def __getitem__(self, device_id):
        return self.shifts_ns[device_id]


@dataclass(frozen=True)
class PairSkew:
    a: str
    b: str
    skew_ns: float


@dataclass(frozen=True)
class SyncReport:
    offset_errors_ns: dict
    pairwise_skews: list
    rounds_used: dict
    shifts_ns: dict
    fitted_periods_ns: dict

    @property
    def max_skew_ns(self) -> float:
        return max((p.skew_ns for p in self.pairwise_skews), default=0.0)


@dataclass(frozen=True)
class SessionConfig:
    period_ns: float
    n_devices: int = 2
    camera_jitter_ns: float = 200_000.0
    n_exchanges: int = 100
    exchange_interval_ns: float = 10e6
    train_frames: int = 50
    video_frames: int = 1350
    max_retries: int = 5
    offset_range_ns: float = 2e9
    skew_range_ns_per_min: float = 0.0
    period_rtol: float = 1e-3
    exposure_step_ns: float = 0.0
    start_ns: float = 10e9
    seed: int = 0

    def __post_init__(self):
        if not self.period_ns > 0:
            raise ValueError("period_ns must be positive")
        if self.n_devices < 2:
            raise ValueError("a session needs at least 2 devices")
        if self.n_exchanges < 1 or self.train_frames < 3 or self.video_frames < 1:
            raise ValueError("n_exchanges, train_frames and video_frames must be positive")
        if self.max_retries < 0 or self.exposure_step_ns < 0 or self.camera_jitter_ns < 0:
            raise ValueError("max_retries, exposure_step_ns and camera_jitter_ns must be nonnegative")
        if abs(self.offset_range_ns) >= self.start_ns:
            raise ValueError("offset_range_ns must be smaller than start_ns so local clocks stay positive")


def exchange_round(device: SimDevice, net: NetworkModel, leader_clock: Callable[[float], float] = float,
                   send_time_ns: float = 0.0, rng: SplitMix64 | None = None) -> OffsetSample:
    """One leader-initiated four-timestamp exchange with ``device``.

    ``leader_clock`` maps true time to the leader's reading. The loss draw
    comes first, then downlink and uplink jitter.

    Raises:
        MessageLost: the loss draw fired; the caller may retry.
    """
    rng = rng or net.stream()
    if rng.uniform(1)[0] < net.loss_prob:
        raise MessageLost(f"exchange with {device.device_id} lost")
    z_down, z_up = np.abs(rng.normal(2)) * net.latency_jitter_sigma_ns
    down = max(net.base_latency_ns + z_down, 0.0)
    up = max(net.base_latency_ns + net.asymmetry_ns + z_up, 0.0)
    arrive = send_time_ns + down
    t2 = float(device.local_time(arrive))
    return OffsetSample(
        t1=float(leader_clock(send_time_ns)),
        t2=t2,
        t3=t2,
        t4=float(leader_clock(arrive + up)),
    )


def min_filter_offset(samples) -> float:
    """Offset of the minimum round-trip sample; ties go to the earliest."""
    if not samples:
        raise NoSamples("no offset samples")
    best = min(range(len(samples)), key=lambda i: (samples[i].rtt_ns, i))
    return samples[best].offset_ns


def plan_alignment(models: dict, target_phase_ns: float, period_rtol: float = 1e-4) -> AlignmentPlan:
    """Shift per device that moves its phase onto ``target_phase_ns``.

    ``models`` maps device id to a :class:`PhaseModel` expressed in a common
    time frame. Each shift is ``(target - phase) mod period`` in ``[0, period)``.

    Raises:
        PeriodMismatch: fitted periods disagree by more than ``period_rtol``.
    """
    periods = np.array([m.period_ns for m in models.values()])
    if periods.size and (periods.max() - periods.min()) > period_rtol * periods.min():
        raise PeriodMismatch(
            f"fitted periods span {periods.min():.6f}..{periods.max():.6f} ns, beyond rtol {period_rtol:g}"
        )
    return AlignmentPlan({d: normalize_phase(target_phase_ns - m.phase_ns, m.period_ns) for d, m in models.items()})


def apply_alignment(device: SimDevice, delta_ns: float, at_local_ns: float = 0.0) -> SimDevice:
    """Stretch the first frame at or after ``at_local_ns`` by ``delta_ns``."""
    cam = device.camera
    if not 0 <= delta_ns < cam.period_ns:
        raise ValueError("shift must lie in [0, period)")
    if delta_ns == 0:
        return device
    new_cam = replace(
        cam,
        phase_ns=normalize_phase(cam.phase_ns + delta_ns, cam.period_ns),
        shifts=cam.shifts + ((float(at_local_ns), float(delta_ns)),),
    )
    return replace(device, camera=new_cam)


def make_devices(config: SessionConfig) -> list[SimDevice]:
    """Leader plus ``n_devices - 1`` followers drawn from the config seed."""
    rng = SplitMix64(config.seed)
    devices = []
    for d in range(config.n_devices):
        u_off, u_skew, u_phase = rng.uniform(3)
        # clocks read whole nanoseconds, so offsets and initial phases are integers
        offset = 0.0 if d == 0 else float(round((2 * u_off - 1) * config.offset_range_ns))
        skew = 0.0 if d == 0 else (2 * u_skew - 1) * config.skew_range_ns_per_min
        phase = float(math.floor(u_phase * config.period_ns))
        cam = CameraParams(config.period_ns, phase, config.camera_jitter_ns)
        devices.append(SimDevice(f"dev{d}", offset, cam, skew))
    return devices


def _sync_offset(device, net, config, rng, t):
    samples, rounds = [], 0
    for _ in range(config.n_exchanges):
        for attempt in range(config.max_retries + 1):
            rounds += 1
            try:
                samples.append(exchange_round(device, net, float, t, rng))
                break
            except MessageLost:
                t += config.exchange_interval_ns
        else:
            raise SessionFailed(f"{device.device_id}: exchange lost {config.max_retries + 1} times in a row")
        t += config.exchange_interval_ns
    return min_filter_offset(samples), rounds, t


def _quantize(delta, step, period):
    if step <= 0:
        return delta
    return normalize_phase(round(delta / step) * step, period)


def _pair_skew(a_times, b_times, period):
    j = np.clip(np.searchsorted(b_times, a_times), 1, b_times.size - 1)
    nearest = np.where(np.abs(b_times[j] - a_times) < np.abs(b_times[j - 1] - a_times), b_times[j], b_times[j - 1])
    return float(np.max(np.abs(wrap(a_times - nearest, period))))


def run_session(devices, net: NetworkModel, config: SessionConfig) -> SyncReport:
    """Run one multi-device session end to end."""
    if len(devices) < 2:
        raise ValueError("a session needs at least 2 devices")
    rng_net = net.stream()
    rng_cam = SplitMix64(config.seed ^ 0x5DEECE66D)

    t = config.start_ns
    synced, rounds = [replace(devices[0], estimated_offset_ns=0.0)], {devices[0].device_id: 0}
    for dev in devices[1:]:
        est, used, t = _sync_offset(dev, net, config, rng_net, t)
        synced.append(replace(dev, estimated_offset_ns=est))
        rounds[dev.device_id] = used

    tau = config.period_ns
    preview_start = t + tau
    epoch = preview_start + config.train_frames * tau / 2
    opts = EstimateOptions(min_samples=min(10, config.train_frames))
    fitted, periods = {}, {}
    for dev in synced:
        local_start = float(dev.local_time(preview_start))
        capture = dev.camera.capture_times(local_start, config.train_frames)
        observed = np.rint(capture + dev.camera.jitter_sigma_ns * rng_cam.normal(capture.size)).astype(np.int64)
        model = estimate(validate_trace(observed, dev.device_id), opts).model
        # fitted grid position nearest the epoch, moved into the leader frame
        local_epoch = epoch + dev.estimated_offset_ns
        k = math.floor((local_epoch - model.phase_ns) / model.period_ns + 0.5)
        grid_at_epoch = model.phase_ns + k * model.period_ns
        fitted[dev.device_id] = PhaseModel(grid_at_epoch - dev.estimated_offset_ns - epoch, model.period_ns)
        periods[dev.device_id] = model.period_ns

    leader_id = synced[0].device_id
    plan = plan_alignment(fitted, fitted[leader_id].phase_ns, config.period_rtol)

    align_at = preview_start + (config.train_frames + 2) * tau
    aligned, shifts = [], {}
    for dev in synced:
        delta = _quantize(plan[dev.device_id], config.exposure_step_ns, tau)
        shifts[dev.device_id] = delta
        aligned.append(apply_alignment(dev, delta, float(dev.local_time(align_at))))

    video_start = align_at + 3 * tau
    captures = {
        dev.device_id: dev.leader_time(dev.camera.capture_times(float(dev.local_time(video_start)), config.video_frames))
        for dev in aligned
    }
    pairs = [
        PairSkew(a.device_id, b.device_id, _pair_skew(captures[a.device_id], captures[b.device_id], tau))
        for a, b in itertools.combinations(aligned, 2)
    ]
    return SyncReport(
        offset_errors_ns={d.device_id: d.estimated_offset_ns - d.true_clock_offset_ns for d in synced},
        pairwise_skews=pairs,
        rounds_used=rounds,
        shifts_ns=shifts,
        fitted_periods_ns=periods,
    )


def session_for_seed(config: SessionConfig, net: NetworkModel, seed: int):
    """Inputs of ``run_session`` re-seeded for one Monte-Carlo run."""
    cfg = replace(config, seed=seed)
    return make_devices(cfg), replace(net, seed=seed), cfg
