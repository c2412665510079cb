"""CPU utilization traces, their summary statistics, and the power model.

Power at utilization ``u`` (a fraction) interpolates linearly between idle
and full-load draw::

    P(u) = P_idle + u * (P_full - P_idle)

and the relative saving of offloading is ``R = 1 - P_base / P_loaded``.
Utilization is a fraction everywhere in this module's API; percentages only
appear in traces and reports.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence

CSV_HEADER = ("t_s", "util_pct")


class TraceError(ValueError):
    pass


class SamplerUnavailable(RuntimeError):
    pass


@dataclass(frozen=True)
class UtilizationTrace:
    samples: tuple[tuple[float, float], ...]
    source_label: str = ""

    def __post_init__(self):
        samples = tuple((float(t), float(u)) for t, u in self.samples)
        prev = -math.inf
        for i, (t, u) in enumerate(samples):
            if not (math.isfinite(t) and t >= prev):
                raise TraceError(f"sample {i}: time {t} must be finite and nondecreasing")
            if not 0.0 <= u <= 100.0:
                raise TraceError(f"sample {i}: utilization {u} outside [0, 100]")
            prev = t
        object.__setattr__(self, "samples", samples)

    @classmethod
    def from_values(cls, values: Sequence[float], label: str = "", dt: float = 1.0) -> "UtilizationTrace":
        return cls(tuple((i * dt, v) for i, v in enumerate(values)), label)

    @property
    def values(self) -> list[float]:
        return [u for _, u in self.samples]

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class TraceStats:
    """Mean, median and population variance of a trace, in percent.

    The variance is stored as the square of the standard deviation, so
    ``stddev_pct ** 2 == variance`` holds exactly for every instance.
    """

    mean_pct: float
    median_pct: float
    variance: float

    @property
    def stddev_pct(self) -> float:
        return math.sqrt(self.variance)

    def to_dict(self) -> dict:
        return {"mean_pct": self.mean_pct, "median_pct": self.median_pct,
                "variance": self.variance, "stddev_pct": self.stddev_pct}

    @classmethod
    def from_dict(cls, d) -> "TraceStats":
        return cls(d["mean_pct"], d["median_pct"], d["variance"])


def stats(trace: UtilizationTrace) -> TraceStats:
    values = trace.values if isinstance(trace, UtilizationTrace) else [float(v) for v in trace]
    n = len(values)
    if n == 0:
        raise TraceError("cannot summarize an empty trace")
    mean = math.fsum(values) / n
    ordered = sorted(values)
    mid = n // 2
    median = ordered[mid] if n % 2 else (ordered[mid - 1] + ordered[mid]) / 2
    raw_var = math.fsum((v - mean) ** 2 for v in values) / n
    sd = math.sqrt(raw_var)
    # sqrt(fl(sd*sd)) == sd under IEEE round-to-nearest
    return TraceStats(mean, median, sd * sd)


@dataclass(frozen=True)
class PowerParams:
    p_idle_w: float = 5.0
    p_full_w: float = 25.0

    def __post_init__(self):
        if not (self.p_idle_w > 0 and self.p_full_w > self.p_idle_w):
            raise ValueError(f"need p_full > p_idle > 0, got idle={self.p_idle_w} full={self.p_full_w}")


def power_at(u: float, p: PowerParams) -> float:
    """Estimated draw in watts at utilization fraction *u*."""
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"utilization fraction {u} outside [0, 1]")
    return p.p_idle_w + u * (p.p_full_w - p.p_idle_w)


def energy_reduction(p_base_w: float, p_loaded_w: float) -> float:
    if not p_loaded_w > 0:
        raise ValueError("loaded power must be positive")
    return 1.0 - p_base_w / p_loaded_w


def load_reduction(u_off_pct: float, u_on_pct: float) -> float:
    if u_on_pct == 0:
        raise ZeroDivisionError("onboard utilization is zero")
    return 1.0 - u_off_pct / u_on_pct


@dataclass(frozen=True)
class EnergyReport:
    onboard: TraceStats
    offload: TraceStats
    params: PowerParams
    statistic: str  # "median" or "mean"
    p_loaded_w: float
    p_base_w: float
    energy_reduction: float
    load_reduction: float
    labels: tuple[str, str] = ("onboard", "offload")

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "params": asdict(self.params),
            "traces": {
                self.labels[0]: self.onboard.to_dict(),
                self.labels[1]: self.offload.to_dict(),
            },
            "p_loaded_w": self.p_loaded_w,
            "p_base_w": self.p_base_w,
            "energy_reduction": self.energy_reduction,
            "load_reduction": self.load_reduction,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EnergyReport":
        d = json.loads(text)
        labels = tuple(d["traces"])
        return cls(
            TraceStats.from_dict(d["traces"][labels[0]]),
            TraceStats.from_dict(d["traces"][labels[1]]),
            PowerParams(**d["params"]),
            d["statistic"],
            d["p_loaded_w"], d["p_base_w"], d["energy_reduction"], d["load_reduction"],
            labels,
        )

    def to_table(self) -> str:
        a, b = self.labels
        w = max(len(a), len(b), 8)
        rows = [
            ("Average (%)", self.onboard.mean_pct, self.offload.mean_pct),
            ("Median (%)", self.onboard.median_pct, self.offload.median_pct),
            ("Variance", self.onboard.variance, self.offload.variance),
            ("Standard Deviation (%)", self.onboard.stddev_pct, self.offload.stddev_pct),
        ]
        lines = [f"{'Value':<24}{a:>{w}}  {b:>{w}}"]
        lines += [f"{name:<24}{x:>{w}.2f}  {y:>{w}.2f}" for name, x, y in rows]
        lines += [
            "",
            f"Power model: P_idle {self.params.p_idle_w:.1f} W, P_full {self.params.p_full_w:.1f} W "
            f"({self.statistic} utilization)",
            f"Estimated power {a}: {self.p_loaded_w:.1f} W",
            f"Estimated power {b}: {self.p_base_w:.1f} W",
            f"Energy reduction: {100 * self.energy_reduction:.1f}%",
            f"Load reduction: {100 * self.load_reduction:.2f}%",
        ]
        return "\n".join(lines) + "\n"


def build_report(onboard: UtilizationTrace, offload: UtilizationTrace,
                 p: PowerParams = PowerParams(), statistic: str = "median") -> EnergyReport:
    """Energy/load comparison of an onboard trace against an offloaded one.

    Power is evaluated at the chosen summary utilization of each trace
    (median by default), not averaged over per-sample powers.
    """
    if statistic not in ("median", "mean"):
        raise ValueError("statistic must be 'median' or 'mean'")
    s_on, s_off = stats(onboard), stats(offload)
    pick = (lambda s: s.median_pct) if statistic == "median" else (lambda s: s.mean_pct)
    u_on, u_off = pick(s_on), pick(s_off)
    p_loaded = power_at(u_on / 100, p)
    p_base = power_at(u_off / 100, p)
    return EnergyReport(
        s_on, s_off, p, statistic, p_loaded, p_base,
        energy_reduction(p_base, p_loaded), load_reduction(u_off, u_on),
        (onboard.source_label or "onboard", offload.source_label or "offload"),
    )


# -- trace CSV --------------------------------------------------------------------


def parse_trace_csv(text: str, label: str = "") -> UtilizationTrace:
    lines = text.splitlines()
    if not lines or tuple(c.strip() for c in lines[0].split(",")) != CSV_HEADER:
        raise TraceError(f"line 1: expected header {','.join(CSV_HEADER)}")
    samples = []
    prev_t = -math.inf
    for lineno, row in enumerate(csv.reader(lines[1:]), 2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise TraceError(f"line {lineno}: expected 2 fields, got {len(row)}")
        try:
            t, u = float(row[0]), float(row[1])
        except ValueError:
            raise TraceError(f"line {lineno}: not a number: {','.join(row)!r}") from None
        if not (math.isfinite(t) and t >= prev_t):
            raise TraceError(f"line {lineno}: time must be finite and nondecreasing")
        if not 0.0 <= u <= 100.0:
            raise TraceError(f"line {lineno}: utilization {u} outside [0, 100]")
        prev_t = t
        samples.append((t, u))
    return UtilizationTrace(tuple(samples), label)


def read_trace_csv(path, label: Optional[str] = None) -> UtilizationTrace:
    path = Path(path)
    return parse_trace_csv(path.read_text(encoding="utf-8"), label if label is not None else path.stem)


def format_trace_csv(trace: UtilizationTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for t, u in trace.samples:
        w.writerow((repr(t), repr(u)))
    return buf.getvalue()


def write_trace_csv(trace: UtilizationTrace, path) -> None:
    Path(path).write_text(format_trace_csv(trace), encoding="utf-8")


# -- samplers -----------------------------------------------------------------------


class Sampler(Protocol):
    def sample(self, interval_ms: float, duration_s: float) -> UtilizationTrace: ...


class ReplaySampler:
    """Replays a recorded trace CSV."""

    def __init__(self, path):
        self.path = path

    def sample(self, interval_ms: float = 0, duration_s: float = 0) -> UtilizationTrace:
        return read_trace_csv(self.path)


def _read_proc_stat(path="/proc/stat") -> tuple[int, int]:
    """(busy, total) jiffies across all CPUs."""
    try:
        with open(path) as fh:
            first = fh.readline().split()
    except OSError as exc:
        raise SamplerUnavailable(f"cannot read {path}: {exc}") from None
    if not first or first[0] != "cpu":
        raise SamplerUnavailable(f"unexpected {path} format")
    vals = [int(v) for v in first[1:]]
    idle = vals[3] + (vals[4] if len(vals) > 4 else 0)
    # guest time is already counted in user/nice
    total = sum(vals[:8])
    return total - idle, total


class ProcStatSampler:
    """Whole-system CPU utilization from ``/proc/stat`` deltas (vmstat style)."""

    def __init__(self, path: str = "/proc/stat"):
        self.path = path
        if not os.path.exists(path):
            raise SamplerUnavailable(f"{path} not available on this platform")

    def sample(self, interval_ms: float, duration_s: float, stop: Optional[threading.Event] = None
               ) -> UtilizationTrace:
        if interval_ms <= 0:
            raise ValueError("interval must be positive")
        interval = interval_ms / 1000.0
        n = max(0, int(round(duration_s / interval)))
        samples = []
        t0 = time.monotonic()
        busy0, total0 = _read_proc_stat(self.path)
        for i in range(n):
            target = t0 + (i + 1) * interval
            delay = target - time.monotonic()
            if stop is not None:
                if stop.wait(max(0.0, delay)):
                    break
            elif delay > 0:
                time.sleep(delay)
            busy1, total1 = _read_proc_stat(self.path)
            dt = total1 - total0
            u = 100.0 * (busy1 - busy0) / dt if dt > 0 else 0.0
            samples.append((round(time.monotonic() - t0, 6), min(100.0, max(0.0, u))))
            busy0, total0 = busy1, total1
        return UtilizationTrace(tuple(samples), "host")


def sample_host(interval_ms: float, duration_s: float, sampler: Optional[Sampler] = None) -> UtilizationTrace:
    sampler = sampler or ProcStatSampler()
    return sampler.sample(interval_ms, duration_s)


@dataclass
class LiveSampler:
    """Background sampling for the lifetime of a ``with`` block."""

    interval_ms: float = 100.0
    trace: Optional[UtilizationTrace] = None
    _stop: threading.Event = field(default_factory=threading.Event)
    _thread: Optional[threading.Thread] = None

    def __enter__(self):
        sampler = ProcStatSampler()

        def loop():
            self.trace = sampler.sample(self.interval_ms, 1e9, stop=self._stop)

        self._thread = threading.Thread(target=loop, name="telemetry", daemon=True)
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._stop.set()
        if self._thread is not None:
            self._thread.join()
