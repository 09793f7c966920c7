"""
Orchestration of single runs, refinement sweeps and filtered/unfiltered
comparisons
"""
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from emacflow.config import get_settings
from emacflow.models.mesh import ALL_MARKER, Mesh
from emacflow.models.state import History, State
from emacflow.schemas.config import RunConfig
from emacflow.schemas.diagnostics import RunSummary, SweepSummary
from emacflow.services.assembly_service import AssemblyService
from emacflow.services.benchmark_service import build_problem, convergence_rate, gradient_error_sq
from emacflow.services.mesh_service import generate_rectangle, load_msh
from emacflow.services.output_service import (
    OutputService,
    write_comparison,
    write_json,
    write_sweep_outputs,
)
from emacflow.services.solver_service import SolverService
from emacflow.services.space_service import build_taylor_hood, interpolate, space_summary
from emacflow.utils.exceptions import (
    ConfigException,
    ConfigurationException,
    EmacflowException,
    UndefinedRateException,
)
from emacflow.utils.helpers import sweep_label

logger = logging.getLogger(__name__)

COMPARED_METRICS = [
    "error_2_1",
    "final_l2_error",
    "final_energy",
    "drag_max",
    "drag_max_time",
    "lift_max",
    "lift_max_time",
    "max_angular_momentum_drift",
    "balance_residual",
    "newton_iterations",
]


def build_mesh(config: RunConfig) -> Mesh:
    spec = config.mesh
    if spec.is_file:
        return load_msh(spec.path)
    return generate_rectangle(spec.nx, spec.ny, spec.bounds)


def _run_member(payload: dict) -> dict:
    """Process-pool entry point: one sweep member from a serialized config"""
    config = RunConfig.model_validate(payload)
    return RunService(config).run().model_dump()


class RunService:
    """Runs one validated configuration"""

    def __init__(self, config: RunConfig):
        self.config = config
        self.settings = get_settings()

    # -- single run --------------------------------------------------------

    def run(self) -> RunSummary:
        config = self.config
        solver_config = config.solver_config()
        started = time.perf_counter()

        mesh = build_mesh(config)
        space = build_taylor_hood(mesh)
        counts = space_summary(space)
        logger.info(
            f"{config.benchmark}: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles, "
            f"{counts['total_dofs']} DOFs, dt={solver_config.dt}, T={solver_config.T}, "
            f"filter={'on' if solver_config.filter_enabled else 'off'}"
        )

        problem = build_problem(config.benchmark, config.homogeneous, config.boundary_velocity)
        for marker in problem.markers_required:
            mesh.edges_for(marker)
        if config.benchmark == "custom" and ALL_MARKER not in problem.dirichlet:
            missing = sorted(set(mesh.marker_names) - set(problem.dirichlet))
            if missing:
                raise ConfigurationException(f"boundary_velocity has no value for markers {missing}")
        assembler = AssemblyService(space)
        solver = SolverService(
            space,
            solver_config,
            problem.dirichlet,
            forcing=problem.forcing,
            assembler=assembler,
            reference_velocity=problem.exact_velocity or problem.reference_velocity,
            frozen_reference=problem.exact_velocity is None,
            drag_marker=problem.drag_marker,
        )

        u0 = interpolate(problem.initial_velocity, 0.0, space)
        history = History.start(u0)
        n_steps = solver_config.n_steps
        records = []
        error_sq = 0.0
        step = 0

        output = OutputService(config.output_dir, space, config.snapshot_every, config.store_emac_pressure)
        with output:
            try:
                record = solver.initial_record(history)
                output.write_record(record)
                records.append(record)
                output.write_snapshot(0, State(u=u0, P=np.zeros(space.n_pressure), t=0.0))

                for step in range(1, n_steps + 1):
                    state, history, record = solver.advance(history)
                    output.write_record(record)
                    records.append(record)
                    if problem.exact_velocity is not None:
                        error_sq += gradient_error_sq(
                            assembler, state.u, problem.exact_velocity, state.t,
                            config.error_mode, problem.exact_gradient,
                        )
                    if output.wants_snapshot(step, n_steps):
                        output.write_snapshot(step, state)
                    if step % max(1, n_steps // 10) == 0:
                        logger.info(
                            f"step {step}/{n_steps} t={state.t:.6g} energy={record.energy:.6e} "
                            f"newton={record.newton_iters}"
                        )
            except (EmacflowException, OSError) as e:
                detail = getattr(e, "detail", str(e))
                output.mark_incomplete(detail, max(step - 1, 0))
                logger.error(f"Run failed at step {step}: {detail}")
                raise

        summary = self._summarize(records, counts, solver_config.dt, error_sq, problem.exact_velocity is not None)
        summary.wall_time_seconds = time.perf_counter() - started
        output.write_summary(summary)
        logger.info(f"{config.benchmark} finished in {summary.wall_time_seconds:.1f}s")
        return summary

    def _summarize(self, records, counts, dt: float, error_sq: float, has_exact: bool) -> RunSummary:
        first, last = records[0], records[-1]
        summary = RunSummary(
            benchmark=self.config.benchmark,
            filter_enabled=self.config.filter_enabled,
            steps=len(records) - 1,
            dt=dt,
            final_time=last.t,
            mesh={k: int(v) for k, v in counts.items() if isinstance(v, (int, np.integer))},
            error_2_1=math.sqrt(dt * error_sq) if has_exact else None,
            final_l2_error=last.l2_error,
            final_energy=last.energy,
            max_momentum_drift=[
                max(abs(r.M1 - first.M1) for r in records),
                max(abs(r.M2 - first.M2) for r in records),
            ],
            max_angular_momentum_drift=max(abs(r.AM - first.AM) for r in records),
            balance_residual=last.balance_residual,
            newton_iterations=sum(r.newton_iters for r in records),
        )
        for name in ("drag", "lift"):
            values = [(getattr(r, name), r.t) for r in records if getattr(r, name) is not None]
            if values:
                peak, when = max(values)
                setattr(summary, f"{name}_max", peak)
                setattr(summary, f"{name}_max_time", when)
        return summary

    # -- sweeps ------------------------------------------------------------

    def member_configs(self) -> List[RunConfig]:
        config = self.config
        sweep = config.sweep
        members = []
        for value in sweep.values:
            update: Dict[str, object] = {
                "sweep": None,
                "output_dir": str(Path(config.output_dir) / sweep_label(sweep.parameter, value)),
            }
            if sweep.parameter == "dt":
                update["dt"] = value
            else:
                x0, x1, y0, y1 = config.mesh.bounds
                update["mesh"] = config.mesh.model_copy(
                    update={"nx": max(1, round((x1 - x0) / value)), "ny": max(1, round((y1 - y0) / value))}
                )
            members.append(RunConfig.model_validate({**config.model_dump(), **_dump(update)}))
        return members

    def sweep(self) -> SweepSummary:
        config = self.config
        if config.sweep is None:
            raise ConfigException("sweep: the configuration has no sweep block")
        members = self.member_configs()
        workers = config.sweep.workers or self.settings.MAX_WORKERS
        logger.info(f"Sweep over {config.sweep.parameter} = {config.sweep.values} with {workers} worker(s)")

        if workers > 1 and len(members) > 1:
            with ProcessPoolExecutor(max_workers=workers) as executor:
                results = list(executor.map(_run_member, [m.model_dump() for m in members]))
            summaries = [RunSummary.model_validate(r) for r in results]
        else:
            summaries = [RunService(m).run() for m in members]

        errors = [s.error_2_1 if s.error_2_1 is not None else s.final_l2_error for s in summaries]
        rates: List[Optional[float]] = []
        if len(errors) > 1:
            try:
                rates = convergence_rate(errors, config.sweep.values)
            except UndefinedRateException as e:
                logger.warning(f"Skipping rates: {e.detail}")
                rates = [None] * (len(errors) - 1)

        summary = SweepSummary(
            parameter=config.sweep.parameter,
            filter_enabled=config.filter_enabled,
            values=list(config.sweep.values),
            errors=errors,
            rates=rates,
            members=summaries,
        )
        write_sweep_outputs(config.output_dir, summary)
        return summary

    # -- scheme comparison -------------------------------------------------

    def compare_schemes(self) -> dict:
        """Same configuration with and without the filter, side by side"""
        base = Path(self.config.output_dir)
        results = {}
        for label, enabled in (("filtered", True), ("unfiltered", False)):
            variant = RunConfig.model_validate(
                {**self.config.model_dump(), "filter_enabled": enabled, "output_dir": str(base / label)}
            )
            service = RunService(variant)
            results[label] = service.sweep() if variant.sweep is not None else service.run()

        filtered, unfiltered = results["filtered"], results["unfiltered"]
        if isinstance(filtered, SweepSummary):
            rows = []
            for k, value in enumerate(filtered.values):
                rows.append((f"error@{value!r}", filtered.errors[k], unfiltered.errors[k]))
                if k > 0:
                    rows.append((f"rate@{value!r}", filtered.rates[k - 1], unfiltered.rates[k - 1]))
        else:
            rows = [(metric, getattr(filtered, metric), getattr(unfiltered, metric)) for metric in COMPARED_METRICS]
            for i, name in enumerate(("max_momentum_drift_x", "max_momentum_drift_y")):
                rows.append((name, filtered.max_momentum_drift[i], unfiltered.max_momentum_drift[i]))

        write_comparison(base / "comparison.csv", rows)
        payload = {
            "filtered": filtered.model_dump(),
            "unfiltered": unfiltered.model_dump(),
            "delta": {
                metric: (f - u if f is not None and u is not None else None) for metric, f, u in rows
            },
        }
        write_json(base / "comparison.json", payload)
        return payload


def _dump(update: Dict[str, object]) -> Dict[str, object]:
    return {k: (v.model_dump() if hasattr(v, "model_dump") else v) for k, v in update.items()}
