"""End-to-end trial runner and the table/figure reproductions.

A trial perturbs every device clock, synchronizes each client to the
leader over the simulated network, knocks each client stream out of phase
with a random long exposure, re-aligns it, then captures one frame per
device and measures the client-minus-leader capture error with the LED
oracle. All randomness flows from ``np.random.default_rng([seed, trial,
device])``, so adding a device leaves the other devices' draws alone.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import oracle
from .camera import SimCamera, inject_frame, start_stream
from .clocksync import SimulatedTransport, filter_curves, sample_arrays, sync_rig
from .config import ExperimentConfig
from .netsim import LEADER_TO_CLIENT, sample_one_way
from .phasealign import FRAME_INJECTION, RESET_SAMPLING, align
from .timebase import LEADER, MS, S, LocalClock, Timestamp, client_domain

COMPONENTS = ("phase", "clock", "total")


@dataclass
class TrialResult:
    trial: int
    client: int
    eps_clock: int
    eps_phase: int
    eps_total: int
    residual_ns: float
    consistent: bool
    theta_true: int
    theta_est: int
    sync_messages: int
    sync_failures: int
    align_iterations: int
    align_converged: bool
    sync_time: int
    align_time: int

    def error(self, component: str) -> int:
        return getattr(self, f"eps_{component}")


CSV_COLUMNS = [f.name for f in fields(TrialResult)]


def device_rng(seed: int, trial: int, device: int) -> np.random.Generator:
    return np.random.default_rng([seed, trial, device])


def _make_camera(config: ExperimentConfig, clock: LocalClock) -> SimCamera:
    return SimCamera(
        clock=clock,
        period=config.period,
        exposure=config.exposure,
        start_latency=(config.start_latency_min, config.start_latency_max),
        injection=config.injection_model(),
        sigma=config.sigma,
    )


def _device_clock(config: ExperimentConfig, rng: np.random.Generator, domain: str) -> LocalClock:
    spread = config.clock_offset_spread
    offset = int(rng.integers(-spread, spread + 1)) if spread > 0 else 0
    return LocalClock(domain, offset, config.drift_rate)


def _scanline_offset(config: ExperimentConfig, rng: np.random.Generator) -> int:
    spread = config.scanline_offset_spread
    return int(rng.integers(-spread, spread + 1)) if spread > 0 else 0


def run_trial(config: ExperimentConfig, seed: int | None = None, trial: int = 0) -> list[TrialResult]:
    """Run one trial; returns one result per client (``devices - 1`` rows)."""
    seed = config.seed if seed is None else seed
    if config.naive_mode != "none":
        return _run_naive_trial(config, seed, trial)

    rngs = [device_rng(seed, trial, d) for d in range(config.devices)]
    clocks = [_device_clock(config, rngs[0], LEADER)]
    clocks += [_device_clock(config, rngs[d], client_domain(d)) for d in range(1, config.devices)]
    skews = [_scanline_offset(config, r) for r in rngs]

    leader_cam = _make_camera(config, clocks[0])
    start_stream(leader_cam, Timestamp(0), rngs[0])
    goal = Timestamp(leader_cam.epoch, LEADER)

    filt = config.filter_config()
    transports = [
        SimulatedTransport(clocks[0], clocks[d], config.latency_model(), rngs[d], config.processing_delay,
                           config.transport_timeout)
        for d in range(1, config.devices)
    ]
    outcomes, sync_total = sync_rig(transports, filt)

    cams, aligns = [], []
    for d, outcome in enumerate(outcomes, start=1):
        rng = rngs[d]
        cam = _make_camera(config, clocks[d])
        # every camera streams from t=0; alignment waits for the rig sync in whole
        # periods so a client's phase does not depend on how many peers it has
        start_stream(cam, Timestamp(0), rng)
        if cam.now < sync_total:
            cam.now += -((cam.now - sync_total) // config.period) * config.period
        # undo any accidental alignment with a random-length long exposure
        inject_frame(cam, config.period + int(rng.random() * config.period), rng)
        result = align(cam, config.align_config(goal), rng, outcome.estimate)
        cams.append(cam)
        aligns.append(result)

    # capture on the first leader frame comfortably after every client is aligned
    done = max(c.now for c in cams)
    # optionally refresh the offsets when the capture would land too long after sync
    if config.resync_period and done + 1 * S - sync_total >= config.resync_period:
        for tr in transports:
            tr.now = done
        outcomes, elapsed = sync_rig(transports, filt)
        done += elapsed
    leader_local = clocks[0].read(Timestamp(done + 1 * S)).nanos
    k = -((goal.nanos - leader_local) // config.period)
    g = goal.nanos + k * config.period
    leader_ref = clocks[0].to_reference(Timestamp(g, LEADER)).nanos + skews[0]

    panel = config.panel()
    leader_reading = oracle.capture_reading(panel, leader_ref, config.oracle_exposure, config.oracle_noise, rngs[0])

    rows = []
    for d, (cam, outcome, res) in enumerate(zip(cams, outcomes, aligns), start=1):
        est = outcome.estimate
        target_local = g + est.theta
        j = _nearest_index(target_local - cam.epoch, config.period)
        s = cam.epoch + j * config.period
        client_ref = clocks[d].to_reference(Timestamp(s, cam.domain)).nanos
        theta_true = clocks[d].read(Timestamp(client_ref)).nanos - clocks[0].read(Timestamp(client_ref)).nanos
        reading = oracle.capture_reading(panel, client_ref + skews[d], config.oracle_exposure,
                                         config.oracle_noise, rngs[d])
        measured = oracle.measure_pair_error(panel, reading, leader_reading)
        dec = oracle.decompose_error(oracle.CaptureLog(
            theta_est=est.theta, requested=g, actual=s - est.theta, theta_true=theta_true,
            oracle_error=measured, scanline_skew=skews[d] - skews[0],
        ))
        align_time = (res.iterations * config.injection_cost if config.align_method == FRAME_INJECTION
                      else res.elapsed + res.iterations * config.reset_overhead)
        rows.append(TrialResult(
            trial=trial, client=d,
            eps_clock=dec.eps_clock, eps_phase=dec.eps_phase, eps_total=round(dec.eps_total),
            residual_ns=round(float(dec.residual), 6), consistent=bool(dec.consistent),
            theta_true=theta_true, theta_est=est.theta,
            sync_messages=len(outcome.samples), sync_failures=outcome.failures,
            align_iterations=res.iterations, align_converged=bool(res.converged),
            sync_time=sync_total, align_time=align_time,
        ))
    return rows


def _nearest_index(offset: int, period: int) -> int:
    q, r = divmod(offset, period)
    return q + 1 if 2 * r >= period else q


def _run_naive_trial(config: ExperimentConfig, seed: int, trial: int) -> list[TrialResult]:
    """Trigger every device at once with no sync; each captures its next frame after the trigger lands."""
    rngs = [device_rng(seed, trial, d) for d in range(config.devices)]
    clocks = [_device_clock(config, rngs[0], LEADER)]
    clocks += [_device_clock(config, rngs[d], client_domain(d)) for d in range(1, config.devices)]
    mean, stdev = config.naive_trigger()
    press = 5 * S
    panel = config.panel()
    latency = config.latency_model()

    refs = []
    for d, (clock, rng) in enumerate(zip(clocks, rngs)):
        cam = _make_camera(config, clock)
        start_stream(cam, Timestamp(int(rng.random() * config.period)), rng)
        delay = max(0, round(rng.normal(mean, stdev)))
        if config.naive_mode == "wifi" and d > 0:
            delay += sample_one_way(latency, LEADER_TO_CLIENT, rng)
        arrive = clock.read(Timestamp(press + delay)).nanos
        j = -((cam.epoch - arrive) // config.period)
        refs.append(clock.to_reference(Timestamp(cam.epoch + j * config.period, cam.domain)).nanos)

    lead = oracle.capture_reading(panel, refs[0], config.oracle_exposure)
    rows = []
    for d in range(1, config.devices):
        measured = oracle.measure_pair_error(panel, oracle.capture_reading(panel, refs[d], config.oracle_exposure),
                                             lead)
        true = refs[d] - refs[0]
        rows.append(TrialResult(
            trial=trial, client=d, eps_clock=0, eps_phase=true, eps_total=round(measured),
            residual_ns=round(float(measured - true), 6),
            consistent=bool(abs(measured - true) <= oracle.ORACLE_RESOLUTION_NS),
            theta_true=0, theta_est=0, sync_messages=0, sync_failures=0, align_iterations=0,
            align_converged=False, sync_time=0, align_time=0,
        ))
    return rows


def run_trials(config: ExperimentConfig) -> list[TrialResult]:
    """All trials of ``config``, ordered by (trial, client) whatever the worker count."""
    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            chunks = list(pool.map(lambda t: run_trial(config, config.seed, t), range(config.trials)))
    else:
        chunks = [run_trial(config, config.seed, t) for t in range(config.trials)]
    return [row for chunk in chunks for row in chunk]


def summarize(values: Sequence[int]) -> dict:
    arr = np.asarray(values, dtype=np.int64)
    return {
        "count": int(arr.size),
        "max": int(np.abs(arr).max()),
        "mean": float(arr.mean()),
        "mean_abs": float(np.abs(arr).mean()),
        "stdev": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
    }


def summary(rows: Sequence[TrialResult]) -> dict:
    out = {c: summarize([r.error(c) for r in rows]) for c in COMPONENTS}
    out["align_iterations"] = summarize([r.align_iterations for r in rows])
    out["converged_fraction"] = float(np.mean([r.align_converged for r in rows]))
    out["consistent_fraction"] = float(np.mean([r.consistent for r in rows]))
    return out


def histogram(values: Sequence[int], bin_width: int) -> dict:
    arr = np.asarray(values, dtype=np.int64)
    lo = int(arr.min() // bin_width * bin_width)
    hi = int(arr.max() // bin_width * bin_width + bin_width)
    counts = np.bincount((arr - lo) // bin_width, minlength=(hi - lo) // bin_width)
    return {"bin_width": bin_width, "start": lo, "counts": [int(c) for c in counts]}


def histograms(rows: Sequence[TrialResult], config: ExperimentConfig) -> dict:
    widths = {"phase": config.hist_bin_phase, "clock": config.hist_bin_clock, "total": config.hist_bin_total}
    return {c: histogram([r.error(c) for r in rows], widths[c]) for c in COMPONENTS}


def trials_csv(rows: Sequence[TrialResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        d = asdict(r)
        w.writerow([int(v) if isinstance(v, bool) else v for v in (d[c] for c in CSV_COLUMNS)])
    return buf.getvalue()


def read_trials_csv(text: str) -> list[TrialResult]:
    types = {f.name: f.type for f in fields(TrialResult)}
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        kw = {}
        for k, v in rec.items():
            t = types[k]
            kw[k] = bool(int(v)) if t in (bool, "bool") else float(v) if t in (float, "float") else int(v)
        rows.append(TrialResult(**kw))
    return rows


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def run_batch(config: ExperimentConfig, out_dir=None) -> dict:
    """Run every trial; write ``trials.csv``, ``summary.json`` and ``histograms.json``."""
    rows = run_trials(config)
    result = {"rows": rows, "summary": summary(rows), "histograms": histograms(rows, config)}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "trials.csv").write_text(trials_csv(rows))
        (out / "summary.json").write_text(_dump(result["summary"]))
        (out / "histograms.json").write_text(_dump(result["histograms"]))
        (out / "config.conf").write_text(config.to_text())
    return result


def wedge_scattergram(samples) -> dict:
    """(phi, theta) rows plus theta variance per phi quartile."""
    if len(samples) == 0:
        raise ValueError("need at least one sample")
    theta, phi = sample_arrays(samples)
    rows = list(zip(phi.tolist(), theta.tolist()))
    order = np.argsort(phi, kind="stable")
    quartiles = []
    for part in np.array_split(order, 4):
        if part.size == 0:
            continue
        quartiles.append({
            "phi_min": int(phi[part].min()), "phi_max": int(phi[part].max()),
            "theta_mean": float(theta[part].mean()), "theta_var": float(theta[part].var()),
            "count": int(part.size),
        })
    apex = int(order[0])
    return {"rows": rows, "quartiles": quartiles, "apex": {"phi": int(phi[apex]), "theta": int(theta[apex])}}


def wedge_csv(wedge: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["phi", "theta"])
    w.writerows(wedge["rows"])
    return buf.getvalue()


def convergence_curve(samples, filter: str = "both", outlier_threshold: int = 10 * MS) -> list[dict]:
    """Filter output after each prefix of ``samples`` (k = 1..n)."""
    if len(samples) == 0:
        raise ValueError("need at least one sample")
    theta, phi = sample_arrays(samples)
    curves = filter_curves(theta, phi, outlier_threshold)
    rows = []
    for k in range(len(theta)):
        row = {"k": k + 1}
        if filter in ("mean", "both"):
            m = curves["mean"][k]
            row["mean_theta"] = None if math.isnan(m) else float(m)
        if filter in ("min", "both"):
            row["min_theta"] = int(curves["min"][k])
            row["min_phi"] = int(curves["min_phi"][k])
        rows.append(row)
    return rows


def convergence_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    cols = list(rows[0].keys())
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow(["" if r[c] is None else r[c] for c in cols])
    return buf.getvalue()


def handshake_log(config: ExperimentConfig, n: int, seed: int | None = None):
    """``n`` back-to-back handshakes on a zero-offset pair, with the true one-way latencies."""
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng([seed, 0xC10C])
    tr = SimulatedTransport(LocalClock(LEADER), LocalClock(client_domain(1)), config.latency_model(), rng,
                            config.processing_delay)
    samples = [tr.exchange() for _ in range(n)]
    return samples, tr.log


def table3(config: ExperimentConfig, n: int = 10_000, seed: int | None = None) -> dict:
    """Latency symmetry and offset bias of the mean vs min filter."""
    samples, truth = handshake_log(config, n, seed)
    theta, phi = sample_arrays(samples)
    out = np.array([t.outbound for t in truth])
    back = np.array([t.inbound for t in truth])
    rtt = out + back
    keep = rtt <= config.outlier_threshold
    best = int(np.argmin(phi))
    mean_row = {
        "leader_to_client": float(out[keep].mean()),
        "client_to_leader": float(back[keep].mean()),
    }
    mean_row["abs_latency_difference"] = abs(mean_row["client_to_leader"] - mean_row["leader_to_client"])
    mean_row["round_trip"] = float(rtt[keep].mean())
    mean_row["ntp_bias"] = float(theta[phi <= config.outlier_threshold].mean())
    min_row = {
        "leader_to_client": int(out[best]),
        "client_to_leader": int(back[best]),
        "abs_latency_difference": int(abs(back[best] - out[best])),
        "round_trip": int(rtt[best]),
        "ntp_bias": int(theta[best]),
    }
    return {"messages": n, "outliers_removed": int((~keep).sum()), "mean": mean_row, "min": min_row,
            "min_round_trip_at_k": {str(k): int(phi[:k].min()) for k in (300, 1000, n) if k <= n}}


def one_way_histogram(config: ExperimentConfig, n: int = 10_000, bin_width: int = 50_000,
                      seed: int | None = None) -> list[tuple[int, int, int]]:
    _, truth = handshake_log(config, n, seed)
    out = np.array([t.outbound for t in truth])
    back = np.array([t.inbound for t in truth])
    keep = (out + back) <= config.outlier_threshold
    out, back = out[keep], back[keep]
    top = int(max(out.max(), back.max()) // bin_width + 1)
    c_out = np.bincount(out // bin_width, minlength=top)
    c_back = np.bincount(back // bin_width, minlength=top)
    return [(i * bin_width, int(a), int(b)) for i, (a, b) in enumerate(zip(c_out, c_back))]


def rig_time(client_times: Sequence[int]) -> int:
    """Clients align in parallel, so the rig is ready when the slowest one is."""
    return max(client_times)


def rig_timing_report(config: ExperimentConfig, trials: int | None = None) -> dict:
    """Simulated wall time for clock sync and for each alignment method.

    Frame injection costs ``injection_cost`` per injected frame; reset sampling
    costs its actual sleep plus restart latency (plus ``reset_overhead``) per
    reset. Per-trial rig time is the max over clients.
    """
    trials = trials or config.trials
    report = {"clock_sync_time": [], FRAME_INJECTION: [], RESET_SAMPLING: [], "reset_iteration_time": []}
    for t in range(trials):
        per_method = {}
        for method in (FRAME_INJECTION, RESET_SAMPLING):
            tol = config.tolerance if method == FRAME_INJECTION else max(config.tolerance, 1 * MS)
            cfg = config.replace(align_method=method, tolerance=tol)
            rows = run_trial(cfg, config.seed, t)
            per_method[method] = [r.align_time for r in rows]
            if method == RESET_SAMPLING:
                report["reset_iteration_time"] += [r.align_time / r.align_iterations for r in rows
                                                   if r.align_iterations]
            report["clock_sync_time"].append(rows[0].sync_time)
        for method, times in per_method.items():
            report[method].append(rig_time(times))
    return {
        "trials": trials,
        "clock_sync_time_mean": float(np.mean(report["clock_sync_time"])),
        "frame_injection_time_mean": float(np.mean(report[FRAME_INJECTION])),
        "frame_injection_time_max": int(np.max(report[FRAME_INJECTION])),
        "reset_sampling_time_mean": float(np.mean(report[RESET_SAMPLING])),
        "reset_iteration_time_mean": float(np.mean(report["reset_iteration_time"]))
        if report["reset_iteration_time"] else None,
        "reset_iteration_time_stdev": float(np.std(report["reset_iteration_time"]))
        if report["reset_iteration_time"] else None,
    }


def alignment_conventions(config: ExperimentConfig) -> dict:
    """Alignment statistics under both acceptance conventions.

    ``centered`` accepts a phase within ``tolerance/2`` of the goal; ``raw``
    accepts raw offsets in ``[0, tolerance]``. Both accept a uniform phase
    with probability ``tolerance/T``.
    """
    out = {}
    for acceptance in ("centered", "raw"):
        rows = run_trials(config.replace(acceptance=acceptance))
        iters = np.array([r.align_iterations for r in rows])
        phase = np.array([r.eps_phase for r in rows])
        out[acceptance] = {
            "iterations_mean": float(iters.mean()),
            "iterations_stdev": float(iters.std(ddof=1)) if iters.size > 1 else 0.0,
            "iterations_min": int(iters.min()),
            "iterations_max": int(iters.max()),
            "converged_fraction": float(np.mean([r.align_converged for r in rows])),
            "phase_mean": float(phase.mean()),
            "phase_max_abs": int(np.abs(phase).max()),
        }
    return out
