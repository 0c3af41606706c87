"""Solve, estimate, tag and refine loop with convergence records and output files."""

import csv
import dataclasses
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .amr import ADAPTIVE, UNIFORM, UdoParams, VcesParams, hybrid_decide, udo_tag, vces_mark
from .errors import ConfigError, InvalidArgument, SolverFailure
from .fem import FieldP1, error_h1_semi, error_l2, solve_pde
from .mesh import (
    build_adjacency,
    build_structured_square,
    conformity_defects,
    prolong,
    quality,
    refine_marked,
)
from .metrics import (
    cell_active_classification,
    extract_free_boundary,
    hausdorff,
    jaccard,
    partition_cells,
    partition_report,
)
from .problems import ONE_D_PROBLEMS, PROBLEMS, get_problem, solve_1d_obstacle, solve_1d_poisson
from .visolve import SolverParams, VIProblemDiscrete, solve_vi, unconstrained_start
from .vtkfile import write_vtk

logger = logging.getLogger(__name__)

STRATEGIES = ("uniform", "vces", "udo", "hybrid-vces", "hybrid-udo")
INITIAL_GUESSES = ("unconstrained", "prolonged")


@dataclass
class RunConfig:
    problem: str = "ball"
    strategy: str = "uniform"
    iterations: int = 6
    initial_n: int = 8
    vces: VcesParams = field(default_factory=VcesParams)
    udo: UdoParams = field(default_factory=UdoParams)
    solver: SolverParams = field(default_factory=SolverParams)
    out_dir: Optional[str] = None
    seed: int = 0
    initial_guess: str = "unconstrained"
    parts: int = 1
    jaccard_k: int = 16
    samples_per_edge: int = 16

    def __post_init__(self):
        if self.problem not in PROBLEMS and self.problem not in ONE_D_PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise ConfigError("iterations must be a positive integer")
        if int(self.initial_n) != self.initial_n or self.initial_n < 1:
            raise ConfigError("initial_n must be a positive integer")
        if self.initial_guess not in INITIAL_GUESSES:
            raise ConfigError(f"initial_guess must be one of {INITIAL_GUESSES}")
        if int(self.parts) != self.parts or self.parts < 1:
            raise ConfigError("parts must be a positive integer")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            for key, typ in (("vces", VcesParams), ("udo", UdoParams), ("solver", SolverParams)):
                if isinstance(data.get(key), dict):
                    data[key] = typ(**data[key])
            return cls(**data)
        except (TypeError, InvalidArgument) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc


@dataclass
class IterationRecord:
    iteration: int
    vertices: int
    cells: int
    solver_iterations: int
    l2_error: float = math.nan
    h1_error: float = math.nan
    one_minus_jaccard: float = math.nan
    hausdorff: float = math.nan
    min_angle: float = math.nan
    max_diameter: float = math.nan
    tagged: int = 0
    hanging_nodes: int = 0
    decision: str = UNIFORM


CSV_FIELDS = [f.name for f in dataclasses.fields(IterationRecord)]
_INT_FIELDS = {"iteration", "vertices", "cells", "solver_iterations", "tagged", "hanging_nodes"}


def _fmt(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{value:.16e}"


def format_convergence_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in records:
        w.writerow([_fmt(getattr(r, k)) for k in CSV_FIELDS])
    return buf.getvalue()


def export_convergence_csv(records, path):
    with open(path, "w") as fh:
        fh.write(format_convergence_csv(records))
    return path


def parse_convergence_csv(text):
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for row in rows:
        kw = {}
        for k in CSV_FIELDS:
            if k in _INT_FIELDS:
                kw[k] = int(row[k])
            elif k == "decision":
                kw[k] = row[k]
            else:
                kw[k] = float(row[k])
        out.append(IterationRecord(**kw))
    return out


def read_convergence_csv(path):
    with open(path) as fh:
        return parse_convergence_csv(fh.read())


@dataclass
class IterationState:
    """Everything computed on one mesh, passed to observers of the loop."""

    record: IterationRecord
    mesh: object
    u: FieldP1
    psi: Optional[FieldP1]
    active: Optional[np.ndarray]
    mask: np.ndarray
    solve: object = None


class RunAborted(SolverFailure):
    """Solver failure inside the loop; ``records`` holds completed iterations."""

    def __init__(self, message, records):
        super().__init__(message)
        self.records = records


def _tag(config, strategy, u, psi, mesh, adj):
    if strategy.endswith("vces"):
        return vces_mark(u, psi, mesh, adj, config.vces)
    return udo_tag(u, psi, mesh, adj, config.udo)


def run_refinement_loop(config, observer=None):
    """Run ``config.iterations`` solve-tag-refine cycles.

    Returns the list of :class:`IterationRecord`.  ``observer``, if given,
    is called with an :class:`IterationState` after each solve.  The mesh is
    not refined after the last solve.
    """
    if config.problem in ONE_D_PROBLEMS:
        raise ConfigError("1D problems use run_gap_study")
    problem = get_problem(config.problem)
    strategy = config.strategy
    if strategy != "uniform" and not problem.is_vi:
        raise ConfigError(f"strategy {strategy!r} needs an obstacle problem")
    if strategy.startswith("hybrid") and problem.exact_free_boundary is None:
        raise ConfigError(f"strategy {strategy!r} needs an exact free boundary")
    out = config.out_dir
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "run.json"), "w") as fh:
            json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    exact_fb = (problem.exact_free_boundary(4096)
                if problem.exact_free_boundary is not None else None)

    mesh = build_structured_square(config.initial_n, problem.lo, problem.hi)
    prev_u = None
    records = []
    for it in range(config.iterations):
        adj = build_adjacency(mesh)
        q = quality(mesh)
        rec = IterationRecord(iteration=it, vertices=mesh.num_vertices, cells=mesh.num_cells,
                              solver_iterations=0, min_angle=q.min_angle,
                              max_diameter=q.max_cell_diameter,
                              hanging_nodes=len(conformity_defects(mesh)))
        psi = active = solve = None
        if problem.is_vi:
            vi = VIProblemDiscrete.from_problem(mesh, problem)
            if config.initial_guess == "prolonged" and prev_u is not None:
                u0 = np.maximum(prev_u, vi.psi)
            else:
                u0 = unconstrained_start(vi)
            solve = solve_vi(vi, u0, config.solver)
            if not solve.converged:
                raise RunAborted(
                    f"VI solve did not converge at iteration {it}: {solve.converged_reason}",
                    records)
            u = solve.u
            psi = FieldP1(mesh, vi.psi)
            rec.solver_iterations = solve.iterations
            active = cell_active_classification(u, psi, config.solver.vi_zero_tol)
        else:
            u = solve_pde(mesh, problem.f, problem.g)
        if problem.exact_u is not None:
            rec.l2_error = error_l2(mesh, u, problem.exact_u)
        if problem.exact_grad is not None:
            rec.h1_error = error_h1_semi(mesh, u, problem.exact_grad)
        if active is not None and problem.exact_active is not None:
            rec.one_minus_jaccard = 1.0 - jaccard(mesh, active, problem.exact_active,
                                                  k=config.jaccard_k)
        if active is not None and exact_fb is not None:
            fb = extract_free_boundary(mesh, active, config.samples_per_edge)
            if fb.empty:
                logger.warning("iteration %d: no discrete free boundary", it)
            else:
                rec.hausdorff = hausdorff(fb.points, exact_fb)

        decision = UNIFORM if strategy == "uniform" else ADAPTIVE
        if strategy.startswith("hybrid") and math.isfinite(rec.hausdorff) and (~active).any():
            decision = hybrid_decide(rec.hausdorff, mesh, ~active)
        if decision == ADAPTIVE:
            mask = _tag(config, strategy, u, psi, mesh, adj)
            if not mask.any():
                logger.warning("iteration %d: empty refinement mask, refining uniformly", it)
                decision = UNIFORM
        if decision == UNIFORM:
            mask = np.ones(mesh.num_cells, dtype=bool)
        rec.decision = decision
        rec.tagged = int(mask.sum())
        records.append(rec)
        logger.info("iter %d: %d cells, %s, tagged %d, 1-J %.4g, dH %.4g", it, rec.cells,
                    decision, rec.tagged, rec.one_minus_jaccard, rec.hausdorff)

        if out:
            point_data = {"u": u.values}
            if psi is not None:
                point_data["psi"] = psi.values
                point_data["u_minus_psi"] = u.values - psi.values
            owner = partition_cells(mesh, min(config.parts, mesh.num_cells))
            write_vtk(os.path.join(out, f"iter{it:02d}.vtk"), mesh, point_data=point_data,
                      cell_data={"mask": mask.astype(float), "part": owner.astype(float)})
        if observer is not None:
            observer(IterationState(rec, mesh, u, psi, active, mask, solve))
        if it + 1 < config.iterations:
            fine = refine_marked(mesh, mask)
            prev_u = prolong(u.values, fine)
            mesh = fine

    if out:
        export_convergence_csv(records, os.path.join(out, "convergence.csv"))
    return records


@dataclass
class PartitionStudy:
    adaptive: object
    uniform: object
    adaptive_cells: int
    uniform_cells: int


def _final_state(config):
    states = []
    records = run_refinement_loop(config, observer=states.append)
    return records, states[-1]


def run_partition_study(config, parts):
    """Partition the final adaptive mesh and a uniform mesh of comparable size.

    The uniform pipeline is refined until its cell count first reaches the
    adaptive count (or the level closest to it from above).
    """
    if int(parts) != parts or parts < 1:
        raise ConfigError("parts must be a positive integer")
    problem = get_problem(config.problem)
    if not problem.is_vi:
        raise ConfigError("partition study needs an obstacle problem")
    _, ad = _final_state(config)
    target = ad.mesh.num_cells
    levels = 1
    while 2 * config.initial_n ** 2 * 4 ** (levels - 1) < target:
        levels += 1
    ucfg = dataclasses.replace(config, strategy="uniform", iterations=levels,
                               out_dir=None, parts=parts)
    _, un = _final_state(ucfg)
    rep_a = partition_report(ad.mesh, ad.active, parts)
    rep_u = partition_report(un.mesh, un.active, parts)
    if config.out_dir:
        os.makedirs(config.out_dir, exist_ok=True)
        for tag, st in (("adaptive", ad), ("uniform", un)):
            owner = partition_cells(st.mesh, parts)
            write_vtk(os.path.join(config.out_dir, f"partition_{tag}.vtk"), st.mesh,
                      point_data={"u": st.u.values},
                      cell_data={"part": owner.astype(float), "active": st.active.astype(float)})
        with open(os.path.join(config.out_dir, "partition.csv"), "w") as fh:
            fh.write("mesh,part,active,inactive,ratio\n")
            for tag, rep in (("adaptive", rep_a), ("uniform", rep_u)):
                for row in rep.rows():
                    fh.write(f"{tag},{row['part']},{row['active']},{row['inactive']},"
                             f"{row['ratio']:.16e}\n")
    return PartitionStudy(rep_a, rep_u, ad.mesh.num_cells, un.mesh.num_cells)


@dataclass
class GapRow:
    n: int
    obstacle_l2: float
    gap: float
    poisson_l2: float


def run_gap_study(ns=(32, 64, 128, 256), params=None, out_dir=None):
    """1D obstacle and Poisson errors, plus free-boundary gaps, over mesh sizes."""
    rows = []
    for n in ns:
        err, gap = solve_1d_obstacle(int(n), params)
        rows.append(GapRow(int(n), err, gap, solve_1d_poisson(int(n))))
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "gap.csv"), "w") as fh:
            fh.write("n,obstacle_l2,gap,poisson_l2\n")
            for r in rows:
                fh.write(f"{r.n},{r.obstacle_l2:.16e},{r.gap:.16e},{r.poisson_l2:.16e}\n")
    return rows


def log2_rates(hs_or_ns, errors, by_n=True):
    """Successive log2 rates; with ``by_n`` the abscissa doubles per level."""
    e = np.asarray(errors, dtype=float)
    x = np.asarray(hs_or_ns, dtype=float)
    ratio = x[1:] / x[:-1] if by_n else x[:-1] / x[1:]
    return np.log(e[:-1] / e[1:]) / np.log(ratio)


def fitted_rate(ns, errors):
    """Least-squares slope of -log(error) against log(n)."""
    return float(-np.polyfit(np.log(ns), np.log(errors), 1)[0])
