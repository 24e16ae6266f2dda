"""
pipeline.py - Adaptive level-set reconstruction driver

Runs the full reconstruction across runs r = 1..R:

    build the grid, compute the distance to the cloud, start from a sphere
    enclosing the cloud, cut and adapt; then per iteration
        select band -> energy -> semi-Lagrangian step -> reinitialize + cut
        -> adapt -> metrics -> stopping rule
    and between runs halve dx_min, refine the band to the new max level and
    rebuild the distance.

Schedules: dx_min^1 ~ C_S h_S, dt = 1.5 dx_min, p = 1 in the first run and 2
after, mu = 0.05 before the last run and 1 in it, P1 before the last run and
CWENO in it (configurable).

Usage:
    from run_config import load_config
    from pipeline import run
    report = run(load_config("presets/square.json"))

Dependencies:
    - numpy
    - pandas (RunReport.frame)
"""
import math
import os
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from amr_grid import Domain, Forest, adapt
from errors import ConfigError, ReconstructionError
from exports import RunDatabase, RunLog, write_grid, write_report, write_surface
from isosurface import extract_isosurface
from log_config import get_logger
from parallel import set_workers
from PointCloud import estimate_resolution, load_cloud
from propagation import DistanceField
from recon_ops import CwenoParams, Reconstructor
from reinit import ReinitParams, reinitialize
from shapes import exact_sdf
from sl_solver import SolverParams, compute_energy, cut, detect_front_set, select_band, sl_step

log = get_logger("PIPELINE")

FLAT_ENERGY = "flat-energy"
MAX_ITERATIONS = "max-iterations"
_LEVEL_TOL = 1e-12


@dataclass
class RunSummary:
    r: int
    max_level: int
    dx_min: float
    dt: float
    p: float
    mu: float
    operator: str
    iterations: int = 0
    stop_reason: str = None
    E2: float = None
    ErrS: float = None
    Err1: float = None
    leaves: int = 0


@dataclass
class RunReport:
    config: dict
    h_s: float
    rng_seed: int
    rows: list = field(default_factory=list)
    runs: list = field(default_factory=list)
    stop_reason: str = None
    forest: object = None
    phi: np.ndarray = None
    distance: np.ndarray = None
    cloud: object = None
    operator: str = None
    gamma: float = None
    mesh: object = None

    def frame(self):
        return pd.DataFrame(self.rows)

    @property
    def total_iterations(self):
        return sum(run.iterations for run in self.runs)

    @property
    def final(self):
        return self.runs[-1] if self.runs else None

    def to_dict(self):
        return {
            "config": self.config,
            "h_s": self.h_s,
            "rng_seed": self.rng_seed,
            "total_iterations": self.total_iterations,
            "stop_reasons": [run.stop_reason for run in self.runs],
            "runs": [vars(run) for run in self.runs],
            "final": {"ErrS": self.final.ErrS, "Err1": self.final.Err1, "E2": self.final.E2,
                      "leaves": self.final.leaves} if self.final else None,
        }


# ----------------------------------------------------------------------
# schedules and helpers
# ----------------------------------------------------------------------

def resolution_schedule(h_s, cs, half_width, r, dt_factor=1.5):
    """(L, dx_min, dt) of run r: the first run takes the smallest L with 2M/2^L <= C_S h_S."""
    if r < 1:
        raise ConfigError(f"run index starts at 1, got {r}")
    target = cs * h_s
    level = 0
    while 2.0 * half_width / 2 ** level > target * (1.0 + _LEVEL_TOL):
        level += 1
    level += r - 1
    dx = 2.0 * half_width / 2 ** level
    return level, dx, dt_factor * dx


def initial_data(cloud, forest):
    """Signed distance to a sphere around the cloud's box center, 4 dx_min wider than the cloud."""
    center = cloud.bbox_center()
    radius = float(np.max(np.linalg.norm(cloud.points - center, axis=1))) + 4.0 * forest.domain.dx_min
    if np.any(np.abs(center) + radius > forest.domain.half_width):
        raise ConfigError(f"initial sphere (radius {radius:.4g}) leaves the domain; increase the domain half-width",
                          radius=round(radius, 6), M=forest.domain.half_width)
    return np.linalg.norm(forest.centers - center, axis=1) - radius


def stopping(energies, n, stop_tol=1e-4, window=10, min_iterations=10, max_iterations=100):
    """
    (stop, reason, delta_E) for iteration n. delta_E compares the means of
    the last k energies up to n and up to n-1, with the same k for both:
    k = window once n > window, else the n-1 values both windows can hold.
    """
    energies = list(energies)[:n]
    delta = math.inf
    if n >= 2:
        k = min(window, n - 1)
        now = math.fsum(energies[n - k:n]) / k
        before = math.fsum(energies[n - 1 - k:n - 1]) / k
        if now == 0.0:
            delta = 0.0 if before == 0.0 else math.inf
        else:
            delta = abs(before - now) / now
    if n >= max_iterations:
        return True, MAX_ITERATIONS, delta
    if n < min_iterations:
        return False, None, delta
    if delta < stop_tol:
        return True, FLAT_ENERGY, delta
    return False, None, delta


def scaled_exact(name, cloud):
    """Exact SDF of a named shape expressed in the computational box."""
    sdf = exact_sdf(name)
    return lambda x: cloud.scale * sdf(cloud.to_original(x))


def metrics(phi, cloud, forest, operator="p1", exact=None, gamma=None, rec=None):
    """
    (Err_S, Err_1, flagged): mean |R(q)| over the cloud with the polynomial of
    each point's leaf (a degenerate leaf borrows a neighbor's), and the
    volume-weighted band mean of |phi - phi*| when an exact SDF is given.
    """
    rec = rec or Reconstructor(forest, phi, operator)
    leaves = forest.locate(cloud.points)
    degenerate = rec.degenerate(leaves)
    flagged = int(np.count_nonzero(degenerate))
    if flagged:
        indptr, indices = forest.neighbor_table()
        for k in np.nonzero(degenerate)[0]:
            nbs = indices[indptr[leaves[k]]:indptr[leaves[k] + 1]]
            good = nbs[~rec.degenerate(nbs)]
            if len(good):
                leaves[k] = good[np.argmin(np.linalg.norm(forest.centers[good] - cloud.points[k], axis=1))]
    err_s = float(np.mean(np.abs(rec.evaluate_points(cloud.points, leaves))))
    err_1 = None
    if exact is not None:
        band = np.abs(phi) < gamma if gamma is not None else np.ones(len(forest), dtype=bool)
        vol = forest.volumes[band]
        diff = np.abs(phi[band] - exact(forest.centers[band]))
        err_1 = float(math.fsum((vol * diff).tolist()) / math.fsum(vol.tolist())) if len(vol) else None
    return err_s, err_1, flagged


# ----------------------------------------------------------------------
# the driver
# ----------------------------------------------------------------------

class Reconstruction:
    """Holds the evolving state (forest, phi, distance) of one reconstruction."""

    def __init__(self, config, cloud=None):
        self.config = config
        self.cloud = cloud
        self.forest = None
        self.phi = None
        self.dist = None
        self.exact = None
        self.csv = None
        self.db = None
        self.session = config.session or uuid.uuid4().hex[:12]

    # -- setup ---------------------------------------------------------
    def _open_outputs(self):
        cfg = self.config
        os.makedirs(cfg.outdir, exist_ok=True)
        if "csv" in cfg.exports:
            self.csv = RunLog(os.path.join(cfg.outdir, "run_log.csv"))
        if "db" in cfg.exports:
            self.db = RunDatabase(os.path.join(cfg.outdir, "run_log.db"), self.session)

    def _params(self, r, dx, dt):
        cfg = self.config
        return SolverParams(p=cfg.p_for(r), mu=cfg.mu_for(r), dt=dt, dx_min=dx,
                            degenerate_D=cfg.degenerate_D, degenerate_alpha=cfg.degenerate_alpha,
                            cavity_mode=cfg.cavity, cavity_distance_factor=cfg.cavity_distance_factor,
                            cavity_gradient_threshold=cfg.cavity_gradient_threshold)

    def _polys_fn(self, operator):
        cweno = CwenoParams(d0=self.config.cweno_d0)
        workers = self.config.workers

        def polys(forest, values, leaves):
            return {"phi": Reconstructor(forest, values["phi"], operator, cweno, workers).polys(leaves)}
        return polys

    def _adapt(self, operator, gamma):
        values = {"phi": self.phi, "ref": self.dist.refs}
        self.forest, values, remap = adapt(self.forest, values, self._polys_fn(operator), gamma,
                                           self.config.min_level, reducers={"ref": "nearest"})
        self.phi = values["phi"]
        self.dist.update(self.forest, values["ref"], remap.is_new)

    # -- phases --------------------------------------------------------
    def start(self):
        cfg = self.config
        if self.cloud is None:
            self.cloud = load_cloud(cfg.input, cfg.input_format)
        if cfg.dimension is not None and cfg.dimension != self.cloud.dimension:
            raise ConfigError(f"configured dimension {cfg.dimension} does not match the {self.cloud.dimension}D cloud")
        h_s = estimate_resolution(self.cloud, cfg.sample_fraction, cfg.seed)
        if cfg.exact:
            self.exact = scaled_exact(cfg.exact, self.cloud)
        return h_s

    def first_grid(self, h_s, operator):
        cfg = self.config
        level, dx, dt = resolution_schedule(h_s, cfg.cs, cfg.domain_halfwidth, 1, cfg.dt_factor)
        domain = Domain(self.cloud.dimension, cfg.domain_halfwidth, level)
        self.forest = Forest.uniform(domain, min(cfg.min_level, level))
        self.dist = DistanceField(self.cloud, cfg.workers, cfg.distance_references)
        self.dist.build(self.forest)
        params = self._params(1, dx, dt)
        self.phi = cut(initial_data(self.cloud, self.forest), params.gamma)
        self._adapt(operator, params.gamma)
        # the initial sphere is known exactly on the adapted grid
        self.phi = cut(initial_data(self.cloud, self.forest), params.gamma)
        self.dist.build(self.forest)
        log.info(f"grid: L={level} dx_min={dx:.5g} leaves={len(self.forest)}")

    def next_grid(self, r, operator):
        cfg = self.config
        level = self.forest.domain.max_level + 1
        self.forest = self.forest.with_domain(self.forest.domain.with_max_level(level))
        dx = self.forest.domain.dx_min
        params = self._params(r, dx, cfg.dt_factor * dx)
        self.phi = cut(self.phi, params.gamma)
        self._adapt(operator, params.gamma)
        self.dist = DistanceField(self.cloud, cfg.workers, cfg.distance_references)
        self.dist.build(self.forest)
        log.info(f"run {r}: L={level} dx_min={dx:.5g} leaves={len(self.forest)}")

    def iterate(self, r, n, params, operator, cweno, reinit_params):
        cfg = self.config
        started = time.perf_counter()
        band = select_band(self.phi, self.forest, params)
        front = detect_front_set(self.phi, self.forest)
        energy_p = compute_energy(self.phi, self.dist.values, self.forest, params.p, front)
        energy_2 = energy_p if params.p == 2 else compute_energy(self.phi, self.dist.values, self.forest, 2, front)
        self.phi, stats = sl_step(self.phi, self.dist.values, self.dist.gradient(), params, band, energy_p,
                                  self.forest, operator, cweno, cfg.workers)
        if n % cfg.reinit_every == 0:
            self.phi, _ = reinitialize(self.phi, self.forest, band, operator, reinit_params, cweno, cfg.workers)
        else:
            self.phi = cut(self.phi, params.gamma)
        self._adapt(operator, params.gamma)
        err_s, err_1, _ = metrics(self.phi, self.cloud, self.forest, operator, self.exact, params.gamma)
        wall = (time.perf_counter() - started) * 1000.0
        return {"r": r, "n": n, "E2": energy_2, "band_size": band.size, "ErrS": err_s, "Err1": err_1,
                "wall_ms": wall, "Ep": energy_p, "fallback": stats.fallback, "cavity": stats.cavity}

    def run_once(self, r, report):
        cfg = self.config
        operator = cfg.operator_for(r)
        dx = self.forest.domain.dx_min
        params = self._params(r, dx, cfg.dt_factor * dx)
        cweno = CwenoParams(d0=cfg.cweno_d0)
        reinit_params = ReinitParams(newton_max_iter=cfg.newton_max_iter, newton_tol=cfg.newton_tol,
                                     projection_tol=cfg.projection_tol, seed_clamp=cfg.seed_clamp,
                                     keep_tol=cfg.reinit_keep_tol)
        summary = RunSummary(r=r, max_level=self.forest.domain.max_level, dx_min=dx, dt=params.dt,
                             p=params.p, mu=params.mu, operator=operator)
        energies = []
        n = 0
        while True:
            n += 1
            try:
                row = self.iterate(r, n, params, operator, cweno, reinit_params)
            except ReconstructionError as e:
                raise e.with_context(run=r, iteration=n)
            energies.append(row["E2"])
            stop, reason, delta = stopping(energies, n, cfg.stop_tol, cfg.stop_window, cfg.min_iterations,
                                           cfg.max_iterations)
            row["deltaE"] = delta
            report.rows.append(row)
            if self.csv:
                self.csv.append(row)
            if self.db:
                self.db._persist_iteration(row)
            err1 = f" Err1={row['Err1']:.3e}" if row["Err1"] is not None else ""
            log.info(f"r={r} n={n} E2={row['E2']:.3e} dE={delta:.2e} band={row['band_size']} "
                     f"ErrS={row['ErrS']:.3e}{err1}")
            if stop:
                break
        summary.iterations, summary.stop_reason = n, reason
        summary.E2, summary.ErrS, summary.Err1 = row["E2"], row["ErrS"], row["Err1"]
        summary.leaves = len(self.forest)
        report.runs.append(summary)
        if self.db:
            self.db._persist_run(vars(summary))
        if "vtk" in cfg.exports:
            write_grid(os.path.join(cfg.outdir, f"grid_r{r}_final.vtk"), self.forest, self.phi, self.dist.values)
        log.info(f"run {r} stopped ({reason}) after {n} iterations, {len(self.forest)} leaves")
        return params

    def execute(self):
        cfg = self.config
        set_workers(cfg.workers)
        self._open_outputs()
        h_s = self.start()
        report = RunReport(config=cfg.to_dict(), h_s=h_s, rng_seed=cfg.seed, cloud=self.cloud)
        for r in range(1, cfg.runs + 1):
            operator = cfg.operator_for(r)
            try:
                if r == 1:
                    self.first_grid(h_s, operator)
                else:
                    self.next_grid(r, operator)
            except ReconstructionError as e:
                raise e.with_context(run=r)
            params = self.run_once(r, report)
        report.forest, report.phi, report.distance = self.forest, self.phi, self.dist.values
        report.operator, report.gamma = cfg.operator_for(cfg.runs), params.gamma
        report.stop_reason = report.runs[-1].stop_reason
        if "obj" in cfg.exports:
            report.mesh = extract_isosurface(self.phi, self.forest, params.gamma, report.operator, self.cloud,
                                             cfg.workers)
            write_surface(cfg.outdir, report.mesh)
        write_report(os.path.join(cfg.outdir, "report.json"), report.to_dict())
        return report


def run(config, cloud=None):
    """Executes the whole schedule for `config`; returns the RunReport."""
    return Reconstruction(config, cloud).execute()
