"""
Run output: diagnostics CSV, legacy VTK snapshots, summary JSON, sweep and
comparison tables, and the marker left behind by a failed run
"""
import csv
import json
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np
from jinja2 import Environment, FileSystemLoader

from emacflow.models.space import TaylorHoodSpace
from emacflow.models.state import State
from emacflow.schemas.diagnostics import CSV_COLUMNS, DiagnosticsRecord, RunSummary, SweepSummary
from emacflow.utils.helpers import format_float

logger = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).resolve().parent.parent / "templates"
INCOMPLETE_MARKER = "INCOMPLETE"

_templates = Environment(
    loader=FileSystemLoader(str(TEMPLATE_DIR)),
    keep_trailing_newline=True,
    autoescape=False,
)


def _lines(rows: np.ndarray) -> List[str]:
    rows = np.atleast_2d(rows)
    return [" ".join(repr(float(v)) for v in row) for row in rows]


def node_pressure(space: TaylorHoodSpace, P: np.ndarray) -> np.ndarray:
    """P1 pressure at every P2 node (edge midpoints averaged from the endpoints)"""
    return np.concatenate([P, 0.5 * (P[space.edges[:, 0]] + P[space.edges[:, 1]])])


def write_vtk(
    path,
    space: TaylorHoodSpace,
    state: State,
    store_emac_pressure: bool = False,
    title: Optional[str] = None,
) -> Path:
    """
    Legacy ASCII unstructured grid with 6-node quadratic triangles. Point
    data: ``velocity`` and the kinematic ``pressure`` P + |u|^2/2, plus
    ``emac_pressure`` when requested.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    u = state.u.reshape(-1, 2)
    P_nodes = node_pressure(space, state.P)
    kinematic = P_nodes + 0.5 * np.einsum("ni,ni->n", u, u)

    scalars = [("pressure", [repr(float(v)) for v in kinematic])]
    if store_emac_pressure:
        scalars.append(("emac_pressure", [repr(float(v)) for v in P_nodes]))

    text = _templates.get_template("snapshot.vtk.j2").render(
        title=title or f"emacflow t={state.t!r}",
        points=_lines(np.column_stack([space.node_coords, np.zeros(space.n_nodes)])),
        cells=[" ".join(str(int(k)) for k in cell) for cell in space.scalar_dofs],
        velocity=_lines(np.column_stack([u, np.zeros(space.n_nodes)])),
        scalars=scalars,
    )
    path.write_text(text)
    return path


def write_convergence(path, values: Sequence[float], errors: Sequence[Optional[float]],
                      rates: Sequence[Optional[float]]) -> Path:
    """``param,error,rate`` with an empty rate on the first row"""
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["param", "error", "rate"])
        for k, (value, error) in enumerate(zip(values, errors)):
            rate = rates[k - 1] if k > 0 and rates else None
            writer.writerow([format_float(value), format_float(error), format_float(rate)])
    return path


def write_comparison(path, rows: Iterable[Sequence]) -> Path:
    """``metric,filtered,unfiltered,delta``"""
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["metric", "filtered", "unfiltered", "delta"])
        for metric, filtered, unfiltered in rows:
            delta = None if filtered is None or unfiltered is None else filtered - unfiltered
            writer.writerow([metric, format_float(filtered), format_float(unfiltered), format_float(delta)])
    return path


def write_json(path, payload) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return path


class OutputService:
    """Files of one run directory"""

    def __init__(
        self,
        output_dir,
        space: TaylorHoodSpace,
        snapshot_every: int,
        store_emac_pressure: bool = False,
    ):
        self.output_dir = Path(output_dir)
        self.space = space
        self.snapshot_every = snapshot_every
        self.store_emac_pressure = store_emac_pressure
        self._handle = None
        self._writer = None
        self.rows = 0

    @property
    def diagnostics_path(self) -> Path:
        return self.output_dir / "diagnostics.csv"

    @property
    def snapshot_dir(self) -> Path:
        return self.output_dir / "snapshots"

    def open(self) -> "OutputService":
        self.snapshot_dir.mkdir(parents=True, exist_ok=True)
        marker = self.output_dir / INCOMPLETE_MARKER
        if marker.exists():
            marker.unlink()
        self._handle = self.diagnostics_path.open("w", newline="")
        self._writer = csv.writer(self._handle)
        self._writer.writerow(CSV_COLUMNS)
        logger.info(f"Writing run output to {self.output_dir}")
        return self

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None

    def __enter__(self) -> "OutputService":
        return self.open()

    def __exit__(self, exc_type, exc, tb) -> None:
        self.close()

    def write_record(self, record: DiagnosticsRecord) -> None:
        self._writer.writerow(record.csv_row())
        self._handle.flush()
        self.rows += 1

    def wants_snapshot(self, step: int, last_step: int) -> bool:
        return step == 0 or step == last_step or step % self.snapshot_every == 0

    def write_snapshot(self, step: int, state: State) -> Path:
        path = self.snapshot_dir / f"step_{step:06d}.vtk"
        write_vtk(path, self.space, state, self.store_emac_pressure)
        logger.info(f"Snapshot {path.name} at t={state.t:.6g}")
        return path

    def write_summary(self, summary: RunSummary) -> Path:
        path = self.output_dir / "summary.json"
        path.write_text(summary.model_dump_json(indent=2) + "\n")
        return path

    def mark_incomplete(self, detail: str, last_step: int) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.output_dir / INCOMPLETE_MARKER
        path.write_text(f"last completed step: {last_step}\n{detail}\n")
        return path


def write_sweep_outputs(output_dir, summary: SweepSummary) -> None:
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    write_convergence(output_dir / "convergence.csv", summary.values, summary.errors, summary.rates)
    (output_dir / "sweep_summary.json").write_text(summary.model_dump_json(indent=2) + "\n")
