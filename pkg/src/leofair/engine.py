"""Monte Carlo experiment driver: snapshots, fading samples, policies, persistence."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .categories import CATEGORIES
from .channel import (
    ClutterTable,
    LinkBudgetParams,
    beam_boresights,
    compute_link_grid,
    interference_psd,
    select_steered_satellites,
)
from .errors import CoverageGapError
from .metrics import (
    SnapshotMetrics,
    aggregate,
    average_sinr,
    disparity_from_counts,
    format_float,
    jain_index,
    json_safe,
)
from .orbital import (
    Constellation,
    ConstellationConfig,
    build_walker_delta,
    elevation_and_range,
    is_visible,
    preset,
    shift_epoch,
)
from .policies import (
    POLICY_NAMES,
    AllocationRequest,
    QuotaConfig,
    demand_proportional,
    equal_static,
    fairshare,
    snr_priority,
)
from .scenario import ScenarioConfig, User, active_beams, best_links, generate_users

OUTPUT_FILES = ("metrics.csv", "aggregate.json", "timeseries_dgeo.csv", "manifest.json")
DESK_USERS = 200
DESK_SNAPSHOTS = 5
DESK_SAMPLES = 10


@dataclass(frozen=True)
class ExperimentPlan:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    constellation_name: str = "starlink-shell1"
    constellation: ConstellationConfig = field(default_factory=lambda: preset("starlink-shell1"))
    link: LinkBudgetParams = field(default_factory=LinkBudgetParams)
    clutter: ClutterTable = field(default_factory=ClutterTable.default)
    policies: tuple = POLICY_NAMES
    quotas: QuotaConfig = field(default_factory=QuotaConfig)
    interference: bool = True
    redistribute_idle: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    def plan_hash(self) -> str:
        blob = json.dumps(json_safe(self.to_dict()), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()

    @property
    def seed(self) -> int:
        return self.scenario.rng_seed


def apply_profile(plan: ExperimentPlan, profile: str) -> ExperimentPlan:
    """``full`` keeps the plan as is; ``desk`` shrinks it for quick runs.

    The desk profile keeps the allocated fraction of users by scaling the minimum user
    bandwidth with the population.
    """
    if profile == "full":
        return plan
    if profile != "desk":
        raise ValueError(f"unknown profile {profile!r}")
    scn = plan.scenario
    scale = scn.num_users / DESK_USERS
    desk = replace(
        scn,
        num_users=DESK_USERS,
        snapshots=min(scn.snapshots, DESK_SNAPSHOTS),
        samples_per_snapshot=min(scn.samples_per_snapshot, DESK_SAMPLES),
        min_user_bandwidth_hz=min(scn.min_user_bandwidth_hz * scale, scn.total_bandwidth_hz),
    )
    return replace(plan, scenario=desk)


def _label_key(label) -> int:
    if isinstance(label, (int, np.integer)) and label >= 0:
        return int(label)
    digest = hashlib.blake2b(str(label).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def derive_stream(seed: int, labels: Sequence = ()) -> np.random.Generator:
    """Independent generator for a node of the (seed, label, label, ...) tree."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_label_key(x) for x in labels))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass
class SnapshotChannel:
    """Per-snapshot fading-free serving link and interference for every user."""

    index: int
    time_s: float
    serving_psd: np.ndarray  # (U,)
    interference_psd: np.ndarray  # (U,)
    noise_psd: float
    serving_sat: np.ndarray
    serving_beam: np.ndarray
    num_visible_sats: int
    steered_sats: np.ndarray


@dataclass
class RunRecord:
    plan_hash: str
    rng_seed: int
    metrics: list
    wall_clock_s: dict
    aggregate: dict
    output_dir: Path | None = None

    def values(self, policy: str, name: str) -> np.ndarray:
        return np.array([getattr(m, name) for m in self.metrics if m.policy == policy], dtype=float)


class Simulation:
    """Holds the fixed parts of a run: users, constellation, operators."""

    def __init__(self, plan: ExperimentPlan):
        plan.scenario.validate()
        self.plan = plan
        scn = plan.scenario
        self.users: list[User] = generate_users(scn, derive_stream(scn.rng_seed, ["users"]))
        self.user_ids = np.array([u.user_id for u in self.users])
        self.user_ecef = np.array([u.ecef_position for u in self.users])
        self.categories = np.array([u.category_idx for u in self.users])
        self.demand = np.array([u.demand for u in self.users])
        self.sizes = {c: int(np.count_nonzero(self.categories == i)) for i, c in enumerate(CATEGORIES)}
        self.sigma = np.array([plan.link.sigma_for(c) for c in CATEGORIES])[self.categories]

        cfg = plan.constellation
        epoch = derive_stream(scn.rng_seed, ["epoch"]).random(2)
        elements = shift_epoch(
            build_walker_delta(cfg),
            raan_offset=epoch[0] * 2.0 * np.pi / cfg.num_planes,
            anomaly_offset=epoch[1] * 2.0 * np.pi / cfg.sats_per_plane,
        )
        self.constellation = Constellation(elements, cfg.sats_per_plane)
        self.operator_of_sat = self.constellation.plane % scn.num_operators
        self.center = scn.center_ecef

    def link_grid(self, t: float):
        """Visible satellites, beam layout and fading-free link budget at time ``t``."""
        plan = self.plan
        sat_all = self.constellation.ecef_positions(t)
        elev, rng = elevation_and_range(sat_all, self.user_ecef)
        keep = np.flatnonzero(is_visible(elev).any(axis=0))
        if keep.size == 0:
            raise CoverageGapError(int(self.user_ids[0]), f"t={t:g} s, no satellite above the elevation mask")
        sat = sat_all[keep]
        el_centre, _ = elevation_and_range(sat, self.center)
        steer = select_steered_satellites(el_centre[0], self.operator_of_sat[keep], plan.scenario.num_operators)
        bores = beam_boresights(sat, steer, self.center, plan.link.beam_pitch_deg)
        grid = compute_link_grid(
            self.user_ids, self.user_ecef, self.categories, keep, sat, bores, plan.link, plan.clutter,
            plan.scenario.total_bandwidth_hz, elevation=elev[:, keep], slant_range=rng[:, keep],
        )
        return grid, keep[steer]

    def snapshot(self, index: int) -> SnapshotChannel:
        t = index * self.plan.scenario.snapshot_interval_s
        try:
            grid, steered = self.link_grid(t)
            active = active_beams(grid)
            s_idx, b_idx, _ = best_links(grid, self.plan.interference, active)
        except CoverageGapError as exc:
            raise CoverageGapError(exc.user_id, f"snapshot {index}: {exc.detail}") from exc
        u = np.arange(len(self.users))
        if self.plan.interference:
            intf = interference_psd(grid, active)[u, s_idx, b_idx]
        else:
            intf = np.zeros(len(u))
        return SnapshotChannel(
            index=index,
            time_s=t,
            serving_psd=grid.rx_psd[u, s_idx, b_idx],
            interference_psd=intf,
            noise_psd=grid.noise_psd,
            serving_sat=grid.sat_ids[s_idx],
            serving_beam=b_idx,
            num_visible_sats=grid.shape[1],
            steered_sats=steered,
        )

    def sample_sinr(self, snap: SnapshotChannel, sample: int):
        z = derive_stream(self.plan.seed, ["shadow", snap.index, sample]).standard_normal(len(self.users))
        signal = snap.serving_psd * 10.0 ** (self.sigma * z / 10.0)
        snr = signal / snap.noise_psd
        sinr = signal / (snap.interference_psd + snap.noise_psd)
        return snr, sinr

    def request(self, sinr: np.ndarray) -> AllocationRequest:
        scn = self.plan.scenario
        return AllocationRequest(
            self.user_ids, self.categories, sinr, self.demand, scn.total_bandwidth_hz, scn.min_user_bandwidth_hz
        )

    def run_sample(self, snap: SnapshotChannel, sample: int) -> tuple[list, dict]:
        plan = self.plan
        snr, sinr = self.sample_sinr(snap, sample)
        req = self.request(sinr)
        out, timing = [], {}
        for policy in plan.policies:
            t0 = time.perf_counter()
            if policy == "equal_static":
                rng = derive_stream(plan.seed, ["equal_static", snap.index, sample])
                slots = [equal_static(req, rng).bandwidth for _ in range(plan.scenario.slots_per_snapshot)]
            elif policy == "fairshare":
                slots = [fairshare(req, plan.quotas, plan.redistribute_idle).bandwidth]
            elif policy == "snr_priority":
                slots = [snr_priority(req).bandwidth]
            else:
                slots = [demand_proportional(req).bandwidth]
            out.append(self._metrics(policy, snap.index, sample, slots, snr, sinr))
            timing[policy] = time.perf_counter() - t0
        return out, timing

    def _metrics(self, policy, snap_idx, sample, slots, snr, sinr) -> SnapshotMetrics:
        counts = {c: 0 for c in CATEGORIES}
        jain, jain_all, avg_sinr, avg_snr, rate = [], [], [], [], []
        for bw in slots:
            alloc = bw > 0
            for i, c in enumerate(CATEGORIES):
                counts[c] += int(np.count_nonzero(alloc & (self.categories == i)))
            rates = bw * np.log2(1.0 + sinr)
            if alloc.any():
                jain.append(jain_index(rates[alloc]))
            jain_all.append(jain_index(rates))
            avg_sinr.append(average_sinr(sinr[alloc]))
            avg_snr.append(average_sinr(snr[alloc]))
            rate.append(math.fsum(rates))
        n_slots = len(slots)
        rho = {c: (counts[c] / (n_slots * self.sizes[c]) if self.sizes[c] else math.nan) for c in CATEGORIES}
        return SnapshotMetrics(
            policy=policy,
            snapshot_index=snap_idx,
            sample_index=sample,
            rho_urban=rho["urban"],
            rho_suburban=rho["suburban"],
            rho_rural=rho["rural"],
            dgeo=disparity_from_counts(counts, self.sizes),
            jain=_mean(jain),
            jain_all=_mean(jain_all),
            avg_sinr_db=_mean(avg_sinr),
            avg_snr_db=_mean(avg_snr),
            sum_rate=_mean(rate),
        )


def _mean(values) -> float:
    v = [x for x in values if not math.isnan(x)]
    return math.fsum(v) / len(v) if v else math.nan


def default_threads() -> int:
    return os.cpu_count() or 1


def run_experiment(
    plan: ExperimentPlan,
    output_dir: str | os.PathLike | None = None,
    threads: int = 1,
    progress: Callable[[int, int], None] | None = None,
) -> RunRecord:
    """Run every snapshot and sample of ``plan``; write results if ``output_dir`` is given.

    Samples inside a snapshot run on a thread pool; results are ordered by
    (snapshot, sample, policy) before they are stored, so output does not depend on ``threads``.
    """
    sim = Simulation(plan)
    scn = plan.scenario
    records: list[SnapshotMetrics] = []
    wall = {p: 0.0 for p in plan.policies}
    out_dir = Path(output_dir) if output_dir is not None else None
    writer = _MetricsWriter(out_dir / "metrics.csv") if out_dir is not None else None
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for k in range(scn.snapshots):
            snap = sim.snapshot(k)
            samples = range(scn.samples_per_snapshot)
            if pool is None:
                results = [sim.run_sample(snap, j) for j in samples]
            else:
                results = list(pool.map(lambda j: sim.run_sample(snap, j), samples))
            batch = [m for recs, _ in results for m in recs]
            for _, timing in results:
                for p, dt in timing.items():
                    wall[p] += dt
            records.extend(batch)
            if writer is not None:
                writer.append(batch)
            if progress is not None:
                progress(k + 1, scn.snapshots)
    finally:
        if pool is not None:
            pool.shutdown()
        if writer is not None:
            writer.close()

    report = aggregate(records)
    record = RunRecord(plan.plan_hash(), plan.seed, records, wall, report, out_dir)
    if out_dir is not None:
        _write_outputs(record, plan, threads)
    return record


class _MetricsWriter:
    """Appends one snapshot's rows at a time so partial runs leave usable data."""

    def __init__(self, path: Path):
        path.parent.mkdir(parents=True, exist_ok=True)
        self.path = path
        try:
            self.fh = open(path, "w", newline="")
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc.strerror}") from exc
        self.w = csv.writer(self.fh, lineterminator="\n")
        self.w.writerow(SnapshotMetrics.FIELDS)

    def append(self, rows: list) -> None:
        for m in rows:
            self.w.writerow(m.row())
        self.fh.flush()

    def close(self) -> None:
        self.fh.close()


def write_timeseries(path: Path, report: dict, snapshot_times: Sequence[float]) -> None:
    policies = list(report)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["snapshot_index", "time_s"] + policies)
        for k, t in enumerate(snapshot_times):
            w.writerow([k, format_float(float(t))] + [format_float(report[p]["dgeo_timeseries"][k]) for p in policies])


def _write_outputs(record: RunRecord, plan: ExperimentPlan, threads: int) -> None:
    out = record.output_dir
    times = [k * plan.scenario.snapshot_interval_s for k in range(plan.scenario.snapshots)]
    write_timeseries(out / "timeseries_dgeo.csv", record.aggregate, times)
    with open(out / "aggregate.json", "w") as fh:
        json.dump(json_safe(record.aggregate), fh, indent=2, sort_keys=True)
        fh.write("\n")
    manifest = {
        "plan_hash": record.plan_hash,
        "rng_seed": record.rng_seed,
        "constellation": plan.constellation_name,
        "interference": plan.interference,
        "threads": threads,
        "versions": {
            "leofair": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "wall_clock_s": record.wall_clock_s,
        "plan": json_safe(plan.to_dict()),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


# ---------------------------------------------------------------------------
# sweeps on the single-snapshot, interference-free baseline


def baseline_plan(plan: ExperimentPlan) -> ExperimentPlan:
    return replace(plan, scenario=replace(plan.scenario, snapshots=1), interference=False)


def mean_dgeo(record: RunRecord) -> dict:
    return {p: record.aggregate[p]["dgeo"]["mean"] for p in record.aggregate}


def sweep_bandwidth(plan: ExperimentPlan, values_hz: Sequence[float], threads: int = 1) -> list[tuple]:
    base = baseline_plan(plan)
    rows = []
    for w in values_hz:
        p = replace(base, scenario=replace(base.scenario, total_bandwidth_hz=float(w)))
        rows.append((float(w), mean_dgeo(run_experiment(p, threads=threads))))
    return rows


def sweep_rural_quota(plan: ExperimentPlan, values: Sequence[float], threads: int = 1) -> list[tuple]:
    base = baseline_plan(plan)
    rows = []
    for q in values:
        p = replace(base, quotas=base.quotas.with_rural(float(q)))
        rows.append((float(q), mean_dgeo(run_experiment(p, threads=threads))))
    return rows
