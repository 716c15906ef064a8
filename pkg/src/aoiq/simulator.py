"""Discrete-event simulation of the probabilistically preemptive M/G/1/1 queue.

The engine advances between exactly two pending events, the next Poisson
arrival and the pending service completion, and takes no distributional
shortcuts: every arrival comes from the raw interarrival stream and every
preemption decision is an independent coin flip. That keeps the simulator a
fair, independent oracle for the closed forms in the analytic module.

Timekeeping is local to the current delivery cycle (the clock restarts at
every delivery), so the per-cycle sojourn decomposition telescopes to the
interdeparture time at full double precision instead of drowning in the
magnitude of a long absolute clock.

A run simulates ``deliveries`` measured delivery cycles, preceded by one
initialisation delivery that only anchors the first cycle; the first
``warmup_deliveries`` cycles are then discarded, leaving exactly
``deliveries - warmup_deliveries`` recorded cycles.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .analytic import SystemConfig, mgf_roc
from .errors import ConfigMismatchError, DomainError

_CHUNK = 1 << 16


def _num_batches() -> int:
    return int(os.environ.get("AOI_SE_BATCHES", "30"))


@dataclass(frozen=True)
class SimConfig:
    """One simulation request: system, horizon, seed, replication count."""

    system: SystemConfig
    deliveries: int = 1_000_000
    warmup_deliveries: int = 1_000
    seed: int = 0
    replications: int = 1

    def __post_init__(self):
        if self.warmup_deliveries < 0:
            raise ValueError(f"warmup_deliveries must be >= 0, got {self.warmup_deliveries}")
        if self.deliveries <= self.warmup_deliveries:
            raise ValueError(
                f"deliveries ({self.deliveries}) must exceed warmup_deliveries "
                f"({self.warmup_deliveries})"
            )
        if self.replications < 1:
            raise ValueError(f"replications must be >= 1, got {self.replications}")


@dataclass(frozen=True)
class DeliveryRecord:
    """One measured delivery cycle, closed by the delivery it is named after."""

    index: int
    gen_time: float
    deliver_time: float
    system_time: float
    interdeparture: float
    peak_aoi: float
    preempt_count: int


@dataclass(frozen=True)
class Trajectory:
    """Post-warmup per-cycle records with sojourn instrumentation.

    ``preempted_sojourns`` is flat; cycle i owns the slice
    ``preempted_offsets[i]:preempted_offsets[i+1]``.
    """

    system: SystemConfig
    gen_time: np.ndarray
    deliver_time: np.ndarray
    system_time: np.ndarray
    prev_system_time: np.ndarray
    interdeparture: np.ndarray
    peak_aoi: np.ndarray
    preempt_count: np.ndarray
    idle_sojourn: np.ndarray
    served_sojourn: np.ndarray
    preempted_sojourns: np.ndarray
    preempted_offsets: np.ndarray

    def __len__(self) -> int:
        return self.interdeparture.size

    def records(self):
        """Iterate DeliveryRecord views (index is 1-based within the window)."""
        for i in range(len(self)):
            yield DeliveryRecord(
                index=i + 1,
                gen_time=float(self.gen_time[i]),
                deliver_time=float(self.deliver_time[i]),
                system_time=float(self.system_time[i]),
                interdeparture=float(self.interdeparture[i]),
                peak_aoi=float(self.peak_aoi[i]),
                preempt_count=int(self.preempt_count[i]),
            )


@dataclass(frozen=True)
class InterdepartureDecomposition:
    """Per-cycle sojourn samples: idle wait, preempted attempts, final service."""

    idle: np.ndarray
    preempted: np.ndarray
    preempted_offsets: np.ndarray
    served: np.ndarray
    preempt_count: np.ndarray

    def preempted_for_cycle(self, i: int) -> np.ndarray:
        return self.preempted[self.preempted_offsets[i] : self.preempted_offsets[i + 1]]


@dataclass(frozen=True)
class SimSummary:
    """Point estimates, batch-means standard errors, and event counts."""

    system: SystemConfig
    n_cycles: int
    avg_aoi: float
    avg_paoi: float
    mean_interdeparture: float
    mean_system_time: float
    delivery_prob_hat: float
    se_avg_aoi: float
    se_avg_paoi: float
    se_mean_interdeparture: float
    se_mean_system_time: float
    se_delivery_prob: float
    counts: dict[str, int]
    observation_time: float
    seed: int | None = None
    replications: int = 1

    def as_dict(self) -> dict:
        d = {
            "n_cycles": self.n_cycles,
            "avg_aoi": self.avg_aoi,
            "avg_paoi": self.avg_paoi,
            "mean_interdeparture": self.mean_interdeparture,
            "mean_system_time": self.mean_system_time,
            "delivery_prob_hat": self.delivery_prob_hat,
            "se_avg_aoi": self.se_avg_aoi,
            "se_avg_paoi": self.se_avg_paoi,
            "se_mean_interdeparture": self.se_mean_interdeparture,
            "se_mean_system_time": self.se_mean_system_time,
            "se_delivery_prob": self.se_delivery_prob,
            "observation_time": self.observation_time,
            "counts": dict(self.counts),
            "replications": self.replications,
        }
        if self.seed is not None:
            d["seed"] = self.seed
        return d


class _Stream:
    """Chunked consumption of a generator-backed array of draws."""

    __slots__ = ("_draw", "_buf", "_i")

    def __init__(self, draw):
        self._draw = draw
        self._buf = draw(_CHUNK)
        self._i = 0

    def next(self) -> float:
        i = self._i
        if i == _CHUNK:
            self._buf = self._draw(_CHUNK)
            i = 0
        self._i = i + 1
        return self._buf[i]


def _simulate_cycles(system: SystemConfig, deliveries: int, warmup: int,
                     rng: np.random.Generator, collect: bool):
    """Core event loop. Returns per-measured-cycle arrays:

    (y, t_prev, t_own, v, d) and, when ``collect`` is set, the trajectory
    instrumentation (absolute gen/deliver times and sojourn samples).
    """
    lam = system.arrival_rate
    theta = system.preempt_prob
    service = system.service

    gaps = _Stream(lambda n: rng.exponential(1.0 / lam, n))
    draws = _Stream(lambda n: service.sample(rng, n))
    coins = _Stream(rng.random) if 0.0 < theta < 1.0 else None

    n_measured = deliveries - warmup
    y_arr = np.empty(n_measured)
    tprev_arr = np.empty(n_measured)
    town_arr = np.empty(n_measured)
    v_arr = np.zeros(n_measured, dtype=np.int64)
    d_arr = np.zeros(n_measured, dtype=np.int64)
    if collect:
        gen_arr = np.empty(n_measured)
        deliver_arr = np.empty(n_measured)
        idle_arr = np.empty(n_measured)
        served_arr = np.empty(n_measured)
        preempted_flat: list[float] = []
        offsets = np.zeros(n_measured + 1, dtype=np.int64)

    total = deliveries + 1          # one initialisation delivery anchors cycle 1
    measure_from = warmup + 2       # deliveries closing measured cycles
    t = 0.0                         # local clock, origin at the last delivery
    abs_origin = 0.0                # absolute time of the last delivery
    busy = False
    gen = end = 0.0
    prev_t_sys = 0.0
    ndeliv = 0
    v = d = 0                       # preemptions/discards in the current cycle
    idle = 0.0
    next_arr = gaps.next()

    while True:
        if busy and end <= next_arr:
            # service completion: a delivery
            t = end
            ndeliv += 1
            t_sys = t - gen
            if ndeliv >= measure_from:
                k = ndeliv - measure_from
                y_arr[k] = t
                tprev_arr[k] = prev_t_sys
                town_arr[k] = t_sys
                v_arr[k] = v
                d_arr[k] = d
                if collect:
                    gen_arr[k] = abs_origin + gen
                    deliver_arr[k] = abs_origin + t
                    idle_arr[k] = idle
                    served_arr[k] = t_sys
                    offsets[k + 1] = len(preempted_flat)
            if ndeliv == total:
                break
            # restart the cycle-local clock at this delivery
            abs_origin += t
            next_arr -= t
            t = 0.0
            busy = False
            prev_t_sys = t_sys
            v = d = 0
        else:
            # arrival
            t = next_arr
            if not busy:
                busy = True
                idle = t
                gen = t
                end = t + draws.next()
            else:
                if theta == 1.0 or (coins is not None and coins.next() < theta):
                    if collect and ndeliv >= measure_from - 1:
                        preempted_flat.append(t - gen)
                    v += 1
                    gen = t
                    end = t + draws.next()
                else:
                    d += 1
            next_arr = t + gaps.next()

    if not collect:
        return y_arr, tprev_arr, town_arr, v_arr, d_arr, None
    traj = Trajectory(
        system=system,
        gen_time=gen_arr,
        deliver_time=deliver_arr,
        system_time=town_arr,
        prev_system_time=tprev_arr,
        interdeparture=y_arr,
        peak_aoi=y_arr + tprev_arr,
        preempt_count=v_arr,
        idle_sojourn=idle_arr,
        served_sojourn=served_arr,
        preempted_sojourns=np.asarray(preempted_flat, dtype=float),
        preempted_offsets=offsets,
    )
    return y_arr, tprev_arr, town_arr, v_arr, d_arr, traj


def aoi_time_average(interdeparture, prev_system_time) -> float:
    """Sawtooth time average over whole cycles.

    Each cycle of length Y opening at age T_prev contributes area
    Y T_prev + Y^2 / 2; the average is total area over total time.
    """
    y = np.asarray(interdeparture, dtype=float)
    tp = np.asarray(prev_system_time, dtype=float)
    area = y * tp + 0.5 * y * y
    return float(area.sum() / y.sum())


def _batch_se(values: np.ndarray, n_batches: int) -> float:
    """Standard error of the mean of iid-cycle values via batch means."""
    bs = values.size // n_batches
    if bs < 1 or n_batches < 2:
        return math.nan
    bm = values[: bs * n_batches].reshape(n_batches, bs).mean(axis=1)
    return float(bm.std(ddof=1) / math.sqrt(n_batches))


def _batch_ratio_se(num: np.ndarray, den: np.ndarray, n_batches: int) -> float:
    """Standard error of sum(num)/sum(den) via per-batch ratios."""
    bs = num.size // n_batches
    if bs < 1 or n_batches < 2:
        return math.nan
    bn = num[: bs * n_batches].reshape(n_batches, bs).sum(axis=1)
    bd = den[: bs * n_batches].reshape(n_batches, bs).sum(axis=1)
    ratios = bn / bd
    return float(ratios.std(ddof=1) / math.sqrt(n_batches))


def _summarize(system, y, tprev, v, d, seed, replications) -> SimSummary:
    n = y.size
    nb = _num_batches()
    area = y * tprev + 0.5 * y * y
    peaks = y + tprev
    entries = n + int(v.sum())
    counts = {
        "arrivals": entries + int(d.sum()),
        "service_entries": entries,
        "preemptions": int(v.sum()),
        "discards": int(d.sum()),
        "deliveries": n,
    }
    ones = np.ones(n)
    return SimSummary(
        system=system,
        n_cycles=n,
        avg_aoi=float(area.sum() / y.sum()),
        avg_paoi=float(peaks.mean()),
        mean_interdeparture=float(y.mean()),
        mean_system_time=float(tprev.mean()),
        delivery_prob_hat=n / entries,
        se_avg_aoi=_batch_ratio_se(area, y, nb),
        se_avg_paoi=_batch_se(peaks, nb),
        se_mean_interdeparture=_batch_se(y, nb),
        se_mean_system_time=_batch_se(tprev, nb),
        se_delivery_prob=_batch_ratio_se(ones, 1.0 + v.astype(float), nb),
        counts=counts,
        observation_time=float(y.sum()),
        seed=seed,
        replications=replications,
    )


def run(cfg: SimConfig, collect_records: bool = False):
    """Simulate and summarize; deterministic for a fixed SimConfig.

    With ``collect_records`` (single replication only) returns
    (SimSummary, Trajectory); otherwise returns the SimSummary, pooled over
    replications when cfg.replications > 1.
    """
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.replications)
    if collect_records and cfg.replications != 1:
        raise ValueError("record collection requires replications == 1")
    summaries = []
    trajectory = None
    for seq in streams:
        rng = np.random.Generator(np.random.Philox(seq))
        y, tprev, _town, v, d, traj = _simulate_cycles(
            cfg.system, cfg.deliveries, cfg.warmup_deliveries, rng, collect_records
        )
        summaries.append(_summarize(cfg.system, y, tprev, v, d, cfg.seed, 1))
        trajectory = traj
    summary = summaries[0] if len(summaries) == 1 else merge_replications(summaries)
    if collect_records:
        return summary, trajectory
    return summary


def merge_replications(summaries) -> SimSummary:
    """Pool replication summaries of one system configuration.

    The time-average AoI pools by post-warmup observation time (equivalent to
    concatenating the areas); per-cycle means pool by cycle count and the
    delivery fraction by service entries. Standard errors combine as those of
    independent weighted means.
    """
    summaries = list(summaries)
    if not summaries:
        raise ValueError("nothing to merge")
    system = summaries[0].system
    for s in summaries[1:]:
        if s.system != system:
            raise ConfigMismatchError(
                f"cannot merge summaries of different systems: {s.system} != {system}"
            )
    if len(summaries) == 1:
        return summaries[0]

    def weighted(pairs):
        # pairs: (value, se, weight); returns pooled value and se
        w = np.array([p[2] for p in pairs], dtype=float)
        vals = np.array([p[0] for p in pairs], dtype=float)
        ses = np.array([p[1] for p in pairs], dtype=float)
        total = w.sum()
        value = float((w * vals).sum() / total)
        se = float(math.sqrt(float(((w / total) ** 2 * ses**2).sum())))
        return value, se

    obs = [s.observation_time for s in summaries]
    ncyc = [s.n_cycles for s in summaries]
    entries = [s.counts["service_entries"] for s in summaries]
    aoi, se_aoi = weighted([(s.avg_aoi, s.se_avg_aoi, o) for s, o in zip(summaries, obs)])
    paoi, se_paoi = weighted([(s.avg_paoi, s.se_avg_paoi, n) for s, n in zip(summaries, ncyc)])
    my, se_y = weighted(
        [(s.mean_interdeparture, s.se_mean_interdeparture, n) for s, n in zip(summaries, ncyc)]
    )
    mt, se_t = weighted(
        [(s.mean_system_time, s.se_mean_system_time, n) for s, n in zip(summaries, ncyc)]
    )
    p, se_p = weighted(
        [(s.delivery_prob_hat, s.se_delivery_prob, e) for s, e in zip(summaries, entries)]
    )
    counts: dict[str, int] = {}
    for s in summaries:
        for k, val in s.counts.items():
            counts[k] = counts.get(k, 0) + val
    return SimSummary(
        system=system,
        n_cycles=sum(ncyc),
        avg_aoi=aoi,
        avg_paoi=paoi,
        mean_interdeparture=my,
        mean_system_time=mt,
        delivery_prob_hat=p,
        se_avg_aoi=se_aoi,
        se_avg_paoi=se_paoi,
        se_mean_interdeparture=se_y,
        se_mean_system_time=se_t,
        se_delivery_prob=se_p,
        counts=counts,
        observation_time=float(sum(obs)),
        seed=None,
        replications=sum(s.replications for s in summaries),
    )


def empirical_transform(traj: Trajectory, s: float, which: str) -> float:
    """Sample mean of e^{sX} over the trajectory, X in {"T", "Y", "A"}.

    Positive s is capped at 0.8 of the analytic convergence supremum: closer
    to the divergence the sample mean has effectively unbounded variance.
    """
    arrays = {
        "T": traj.system_time,
        "Y": traj.interdeparture,
        "A": traj.peak_aoi,
    }
    if which not in arrays:
        raise ValueError(f"which must be one of {sorted(arrays)}, got {which!r}")
    if s > 0.0:
        cap = 0.8 * mgf_roc(traj.system)
        if s >= cap:
            raise DomainError(
                f"empirical transform at s={s!r} is past the safety cap {cap!r}"
            )
    return float(np.exp(s * arrays[which]).mean())


def decompose_interdeparture(traj: Trajectory) -> InterdepartureDecomposition:
    """Per-cycle sojourn decomposition of each interdeparture interval.

    Each cycle splits into the idle wait for the next arrival, the sojourns of
    service attempts cut short by preemption, and the final delivered attempt;
    the pieces telescope to the interdeparture time exactly.
    """
    return InterdepartureDecomposition(
        idle=traj.idle_sojourn,
        preempted=traj.preempted_sojourns,
        preempted_offsets=traj.preempted_offsets,
        served=traj.served_sojourn,
        preempt_count=traj.preempt_count,
    )


def write_records_csv(traj: Trajectory, path) -> None:
    """Dump the per-delivery records as CSV."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("i,gen_time,deliver_time,T,Y,A,V\n")
        for i in range(len(traj)):
            fh.write(
                f"{i + 1},{traj.gen_time[i]:.12g},{traj.deliver_time[i]:.12g},"
                f"{traj.system_time[i]:.12g},{traj.interdeparture[i]:.12g},"
                f"{traj.peak_aoi[i]:.12g},{int(traj.preempt_count[i])}\n"
            )
