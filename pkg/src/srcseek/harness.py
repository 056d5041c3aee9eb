"""Experiment orchestration: seeded repetitions, the two-time-scale loops, metrics.

Each repetition draws its random numbers from streams keyed by
``(master_seed, rep, tag...)`` so results do not depend on the order or the
process in which repetitions run.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ScenarioConfig, dump_config
from .env import load_grid
from .netcons import CommGraph, ParticleSet, dpf_step_all, flood_states
from .rbffd import fd_weights, ring_formation, tuned_delta
from .seek_mb import MiSampleBudget, distributed_mb_step
from .seek_mf import (DistributedMfEstimator, RelMeasModel, StepSchedule, centralized_mf_step,
                      distributed_mf_step, gradient_errors, reference_gradient)
from .signal import QuadraticField, RssModel, RssParams

log = logging.getLogger(__name__)

MF_METRICS = ("centroid_err_m", "grad_mag_rmse", "grad_dir_rmse_deg", "pose_rmse_m")
MB_METRICS = ("src_est_err_m", "particle_ess", "centroid_err_m", "n_components")


def stream(master_seed: int, rep: int, *tag) -> np.random.Generator:
    """Independent generator for one (seed, repetition, tag) key."""
    key = [int(master_seed), int(rep)]
    for t in tag:
        key.append(int(t) if isinstance(t, (int, np.integer)) else zlib.crc32(str(t).encode()))
    return np.random.default_rng(np.random.SeedSequence(key))


def build_model(cfg: ScenarioConfig):
    s = cfg.signal
    if s.model == "quadratic":
        return QuadraticField(s.quadratic.scale, s.quadratic.noise_sd)
    r = s.rss
    params = RssParams(p_tx=r.p_tx_dbm, g_tx=r.g_tx_dbi, l_tx=r.l_tx_db, g_rx=r.g_rx_dbi,
                       l_rx=r.l_rx_db, freq_mhz=r.freq_mhz, alpha_multiwall=r.alpha_multiwall_db,
                       beta_wall=r.beta_wall_db_per_m, rician_mu=r.rician_mu, sigma=r.sigma_db,
                       rician_mu_is=r.rician_mu_is)
    grid = load_grid(cfg.grid_path) if cfg.grid_path is not None else None
    return RssModel(params, grid)


def nominal_formation(cfg: ScenarioConfig) -> np.ndarray:
    sc = cfg.scenario
    return ring_formation(sc.n_sensors, sc.formation_radius_m)


def shape_delta(cfg: ScenarioConfig) -> float:
    if cfg.rbffd.delta is not None:
        return cfg.rbffd.delta
    return tuned_delta(cfg.scenario.n_sensors, cfg.scenario.formation_radius_m)


def workspace(cfg: ScenarioConfig, model) -> tuple[float, float, float, float]:
    if cfg.environment.workspace_m is not None:
        return cfg.environment.workspace_m
    return model.grid.extent


def rmse(series, reference=None) -> np.ndarray:
    """Root mean squared error across repetitions at each index.

    ``series`` is (reps, T) for scalars or (reps, T, d) for vectors;
    ``reference`` broadcasts against one repetition (default 0).
    """
    s = np.asarray(series, float)
    if s.ndim < 2:
        raise ValueError("series needs a repetition axis and an index axis")
    ref = np.zeros(s.shape[1:]) if reference is None else np.asarray(reference, float)
    if ref.shape and ref.shape[0] != s.shape[1]:
        raise ValueError(f"reference length {ref.shape[0]} does not match series length {s.shape[1]}")
    err = s - ref
    sq = err**2 if s.ndim == 2 else np.sum(err**2, axis=tuple(range(2, s.ndim)))
    return np.sqrt(np.mean(sq, axis=0))


# --- model-free ----------------------------------------------------------------

def run_model_free_rep(cfg: ScenarioConfig, rep: int, model=None) -> list[dict]:
    sc, mf = cfg.scenario, cfg.mf
    model = model or build_model(cfg)
    rng = stream(sc.master_seed, rep, "mf")
    nominal = nominal_formation(cfg)
    delta = shape_delta(cfg)
    src = np.asarray(sc.source_position_m, float)
    sched = StepSchedule(mf.gamma0, mf.gamma_p)
    rel = RelMeasModel(mf.rel_meas_var_m2 * np.eye(2))
    X = nominal + np.asarray(sc.initial_centroid_m, float)
    rows = []
    for t in range(sc.t_max):
        ref = reference_gradient(X, src, model, delta)
        if mf.estimator == "centralized":
            zs = [model.sample_field(X, src, rng) for _ in range(mf.k_meas or 1)]
            z = np.mean(zs, axis=0)
            g_est = (fd_weights(X, delta).w @ z)[None]
            X_new, _ = centralized_mf_step(X, z, sched, t, delta)
            pose = 0.0
        else:
            graph = CommGraph.from_positions(X, cfg.comm.radius_m)
            est = DistributedMfEstimator(X, src, model, graph, rel, delta, nominal, rng,
                                         k_meas=mf.k_meas, prior_precision=mf.prior_precision,
                                         beta=mf.consensus_beta,
                                         freeze_after_meas=mf.freeze_after_meas)
            for _ in range(mf.k_max + 1):
                est.round()
            g_est = est.gradient_estimates()
            X_new = X + distributed_mf_step(est, sched, t)
            pose = est.pose_rmse()
        mag, ang = gradient_errors(g_est, ref)
        X = X_new
        rows.append({
            "rep": rep, "t": t + 1,
            "centroid_err_m": float(np.linalg.norm(X.mean(axis=0) - src)),
            "grad_mag_rmse": float(np.sqrt(np.mean(mag**2))),
            "grad_dir_rmse_deg": float(np.sqrt(np.mean(ang**2))),
            "pose_rmse_m": float(pose),
        })
    return rows


def fast_scale_experiment(positions, source, model, nominal, n_reps, k_max=80, comm_radius=6.0,
                          rel_var=0.4, delta=None, k_meas=None, master_seed=0,
                          prior_precision=1e-6):
    """Fast-loop gradient estimates at one fixed formation.

    Returns ``(estimates, reference, pose_rmse)`` with ``estimates`` of shape
    (n_reps, k_max + 1, n, 2) and ``pose_rmse`` of shape (n_reps, k_max + 1).
    """
    X = np.asarray(positions, float)
    n = len(X)
    if delta is None:
        delta = tuned_delta(n, float(np.mean(np.linalg.norm(nominal - nominal.mean(0), axis=1))))
    graph = CommGraph.from_positions(X, comm_radius)
    ref = reference_gradient(X, source, model, delta)
    est_all = np.zeros((n_reps, k_max + 1, n, 2))
    pose = np.zeros((n_reps, k_max + 1))
    for rep in range(n_reps):
        est = DistributedMfEstimator(X, source, model, graph, RelMeasModel(rel_var * np.eye(2)), delta,
                                     nominal, stream(master_seed, rep, "fast"), k_meas=k_meas,
                                     prior_precision=prior_precision)
        for k in range(k_max + 1):
            est.round()
            est_all[rep, k] = est.gradient_estimates()
            pose[rep, k] = est.pose_rmse()
    return est_all, ref, pose


# --- model-based ---------------------------------------------------------------

def run_model_based_rep(cfg: ScenarioConfig, rep: int, model=None) -> list[dict]:
    sc, mb = cfg.scenario, cfg.mb
    model = model or build_model(cfg)
    src = np.asarray(sc.source_position_m, float)
    x0, x1, y0, y1 = workspace(cfg, model)
    Y = stream(sc.master_seed, rep, "particles").uniform([x0, y0], [x1, y1], size=(mb.n_particles, 2))
    rng_sig = stream(sc.master_seed, rep, "signal")
    sched = StepSchedule(mb.gamma0, mb.gamma_p)
    budget = MiSampleBudget(mb.n_z)
    r_c, r_s = cfg.comm.radius_m, mb.sense_radius_m
    n = sc.n_sensors
    X = nominal_formation(cfg) + np.asarray(sc.initial_centroid_m, float)
    LW = np.full((n, mb.n_particles), -math.log(mb.n_particles))
    rows = []
    for t in range(sc.t_max):
        graph = CommGraph.from_positions(X, r_c, require_connected=False)
        bound = [model.bind(x, Y) for x in X]
        truth = [model.bind(x, src[None]) for x in X]
        for _ in range(mb.n_meas_per_step):
            z = np.array([b.sample(np.zeros(1, dtype=int), rng_sig)[0] for b in truth])
            ll = np.stack([bound[i].log_likelihood(z[i]) for i in range(n)])
            LW = dpf_step_all(graph, LW, ll)
        known = flood_states(graph, list(X), r_c, r_s)
        U = np.zeros_like(X)
        for i in range(n):
            U[i] = distributed_mb_step(i, known[i], ParticleSet(Y, LW[i], True), model, sched, t,
                                       budget, stream(sc.master_seed, rep, "mi", t, i), r_s,
                                       bound_cache=bound)
        p0 = ParticleSet(Y, LW[0], True)
        X = X + U
        rows.append({
            "rep": rep, "t": t + 1,
            "src_est_err_m": float(np.linalg.norm(p0.mean() - src)),
            "particle_ess": p0.ess(),
            "centroid_err_m": float(np.linalg.norm(X.mean(axis=0) - src)),
            "n_components": _n_components(graph),
        })
    return rows


def _n_components(graph: CommGraph) -> int:
    from scipy.sparse import csgraph, csr_matrix
    return int(csgraph.connected_components(csr_matrix(graph.adjacency), directed=False)[0])


# --- scenario ------------------------------------------------------------------

@dataclass
class ScenarioResult:
    config: ScenarioConfig
    rows: list[dict]
    failures: dict[int, str] = field(default_factory=dict)

    @property
    def metrics(self) -> tuple[str, ...]:
        return MF_METRICS if self.config.scenario.mode == "model_free" else MB_METRICS

    @property
    def primary_metric(self) -> str:
        return "centroid_err_m" if self.config.scenario.mode == "model_free" else "src_est_err_m"

    def column(self, name, t=None) -> np.ndarray:
        t = self.config.scenario.t_max if t is None else t
        return np.array([r[name] for r in self.rows if r["t"] == t])

    def aggregate(self) -> list[dict]:
        out = []
        for t in sorted({r["t"] for r in self.rows}):
            row = {"t": t, "n_reps": 0}
            sel = [r for r in self.rows if r["t"] == t]
            row["n_reps"] = len(sel)
            for m in self.metrics:
                v = np.array([r[m] for r in sel], float)
                row[f"{m}_mean"] = float(v.mean())
                row[f"{m}_std"] = float(v.std())
            out.append(row)
        return out

    def final_error(self) -> tuple[float, float]:
        v = self.column(self.primary_metric)
        if len(v) == 0:
            return math.nan, math.nan
        return float(v.mean()), float(v.std())

    def summary(self) -> str:
        sc = self.config.scenario
        mean, std = self.final_error()
        lines = [
            f"mode: {sc.mode}",
            f"repetitions: {sc.n_reps} requested, {sc.n_reps - len(self.failures)} completed, "
            f"{len(self.failures)} failed",
            f"slow steps: {sc.t_max}",
            f"final {self.primary_metric}: mean {mean:.4f}, std {std:.4f}",
        ]
        if self.rows:
            v = self.column(self.primary_metric)
            lines.append(f"final {self.primary_metric} rmse: {float(np.sqrt(np.mean(v**2))):.4f}")
        for rep, msg in sorted(self.failures.items()):
            lines.append(f"rep {rep} failed: {msg}")
        return "\n".join(lines) + "\n"

    def metrics_csv(self) -> str:
        return _to_csv(self.rows, ["rep", "t", *self.metrics])

    def aggregate_csv(self) -> str:
        agg = self.aggregate()
        cols = ["t", "n_reps"] + [f"{m}_{s}" for m in self.metrics for s in ("mean", "std")]
        return _to_csv(agg, cols)

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.csv").write_text(self.metrics_csv())
        (out / "aggregate.csv").write_text(self.aggregate_csv())
        (out / "summary.txt").write_text(self.summary())
        (out / "config.yaml").write_text(dump_config(self.config))
        return out


def _to_csv(rows, cols) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({c: r[c] for c in cols})
    return buf.getvalue()


def run_rep(cfg: ScenarioConfig, rep: int):
    """Rows for one repetition, or the error message if it aborted."""
    try:
        if cfg.scenario.mode == "model_free":
            return run_model_free_rep(cfg, rep), None
        return run_model_based_rep(cfg, rep), None
    except Exception as exc:  # one bad rep must not take down the others
        log.warning("rep %d aborted: %s", rep, exc)
        return [], f"{type(exc).__name__}: {exc}"


def run_scenario(cfg: ScenarioConfig, out_dir=None, jobs: int = 1) -> ScenarioResult:
    reps = range(cfg.scenario.n_reps)
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(run_rep, [cfg] * len(reps), reps))
    else:
        results = [run_rep(cfg, r) for r in reps]
    rows, failures = [], {}
    for rep, (r, err) in zip(reps, results):
        rows.extend(r)
        if err is not None:
            failures[rep] = err
    res = ScenarioResult(cfg, rows, failures)
    if out_dir is not None:
        res.write(out_dir)
    return res
