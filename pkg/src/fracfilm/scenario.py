"""Scenario files, run directories, and trajectory (de)serialization.

A scenario is a flat key-value text file with dotted section names:

    name = reference
    dimension = 1
    grid.n = 256
    grid.box_length = 40.0
    equation.s = 1.0
    time.tau = 1e-3
    time.num_steps = 50
    initial.kind = gaussian          # gaussian | gaussian_mixture | uniform | from_file
    initial.center = 0.0             # space-separated vector for d > 1
    initial.variance = 1.0
    transport.method = auto          # auto | exact | sinkhorn
    checks = energy_estimate, moment_bound

Lines starting with '#' and blank lines are ignored; '#' also starts an
inline comment.  Values are numbers, words, or comma-separated lists;
mixture components are 'weight : center : variance' triples separated by
';' with space-separated center vectors.

A run directory contains diagnostics.csv (17 significant digits, one row
per step), density_??????.txt snapshots (k = 0 included), and
manifest.json echoing the scenario text verbatim.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .jko import InnerConfig, JkoConfig, StepRecord, Trajectory
from .measure import (
    GridDensity,
    gaussian_density,
    gaussian_mixture_density,
    uniform_density,
)
from .spectral import PeriodicGrid
from .transport import TransportConfig

CSV_COLUMNS = [
    "k",
    "t",
    "energy",
    "entropy",
    "second_moment",
    "w2_sq_step",
    "inner_iters",
    "kkt_residual",
    "boundary_mass",
]

DEFAULT_CHECKS = ["energy_estimate", "moment_bound", "entropy_dissipation", "weak_form"]
KNOWN_CHECKS = DEFAULT_CHECKS + ["evi_entropy"]


class ScenarioError(ValueError):
    """Malformed scenario file or inconsistent settings."""


@dataclass(frozen=True)
class Scenario:
    name: str
    dimension: int
    n: int
    box_length: float
    s: float
    tau: float
    num_steps: int
    initial_kind: str
    initial_center: tuple = (0.0,)
    initial_variance: float = 1.0
    initial_components: tuple = ()
    initial_path: Optional[str] = None
    transport: TransportConfig = field(default_factory=TransportConfig)
    inner: InnerConfig = field(default_factory=InnerConfig)
    checks: tuple = tuple(DEFAULT_CHECKS)
    snapshot_stride: int = 1
    output_dir: Optional[str] = None
    raw_text: str = ""

    def grid(self) -> PeriodicGrid:
        return PeriodicGrid(dim=self.dimension, n=self.n, box_length=self.box_length)

    def jko_config(self) -> JkoConfig:
        return JkoConfig(
            grid=self.grid(), s=self.s, tau=self.tau, inner=self.inner, transport=self.transport
        )

    def initial_density(self) -> GridDensity:
        grid = self.grid()
        kind = self.initial_kind
        if kind == "gaussian":
            return gaussian_density(grid, np.array(self.initial_center), self.initial_variance)
        if kind == "gaussian_mixture":
            comps = [(w, np.array(c), v) for (w, c, v) in self.initial_components]
            return gaussian_mixture_density(grid, comps)
        if kind == "uniform":
            return uniform_density(grid)
        if kind == "from_file":
            path = Path(self.initial_path or "")
            if not path.is_file():
                raise ScenarioError(f"initial datum file not found: {path}")
            vals = _read_density_file(path, grid)
            return GridDensity.normalized(grid, vals)
        raise ScenarioError(f"unknown initial datum kind {kind!r}")


def _parse_kv(text: str) -> dict:
    kv = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = line.split("=", 1)
        kv[key.strip()] = val.strip()
    return kv


def _as_float(kv, key, default=None):
    if key not in kv:
        if default is None:
            raise ScenarioError(f"missing required key {key!r}")
        return default
    try:
        return float(kv[key])
    except ValueError as exc:
        raise ScenarioError(f"key {key!r}: not a number: {kv[key]!r}") from exc


def _as_int(kv, key, default=None):
    v = _as_float(kv, key, default)
    if v != int(v):
        raise ScenarioError(f"key {key!r}: expected an integer, got {v}")
    return int(v)


def _as_vector(text: str) -> tuple:
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def parse_scenario(text: str) -> Scenario:
    kv = _parse_kv(text)
    dim = _as_int(kv, "dimension", 1)
    kind = kv.get("initial.kind", "gaussian")
    components = ()
    if kind == "gaussian_mixture":
        spec = kv.get("initial.components", "")
        comps = []
        for part in spec.split(";"):
            part = part.strip()
            if not part:
                continue
            fields = [p.strip() for p in part.split(":")]
            if len(fields) != 3:
                raise ScenarioError(f"mixture component {part!r}: expected weight : center : variance")
            comps.append((float(fields[0]), _as_vector(fields[1]), float(fields[2])))
        if not comps:
            raise ScenarioError("gaussian_mixture initial datum needs initial.components")
        components = tuple(comps)
    checks = kv.get("checks", ", ".join(DEFAULT_CHECKS))
    checks = tuple(c.strip() for c in checks.split(",") if c.strip())
    for c in checks:
        if c not in KNOWN_CHECKS:
            raise ScenarioError(f"unknown check {c!r}; known: {', '.join(KNOWN_CHECKS)}")
    transport = TransportConfig(
        method=kv.get("transport.method", "auto"),
        epsilon=_as_float(kv, "transport.epsilon", 0.025),
        max_iter=_as_int(kv, "transport.max_iter", 20000),
        tol=_as_float(kv, "transport.tol", 1e-9),
    )
    inner = InnerConfig(
        max_iters=_as_int(kv, "inner.max_iters", 20000),
        grad_tol=_as_float(kv, "inner.grad_tol", 1e-8),
        obj_tol=_as_float(kv, "inner.obj_tol", 1e-12),
        potential_refresh=_as_int(kv, "inner.potential_refresh", 1),
        momentum=kv.get("inner.momentum", "true").lower() in ("1", "true", "yes"),
    )
    try:
        scenario = Scenario(
            name=kv.get("name", "unnamed"),
            dimension=dim,
            n=_as_int(kv, "grid.n"),
            box_length=_as_float(kv, "grid.box_length"),
            s=_as_float(kv, "equation.s"),
            tau=_as_float(kv, "time.tau"),
            num_steps=_as_int(kv, "time.num_steps"),
            initial_kind=kind,
            initial_center=_as_vector(kv.get("initial.center", "0")),
            initial_variance=_as_float(kv, "initial.variance", 1.0),
            initial_components=components,
            initial_path=kv.get("initial.path"),
            transport=transport,
            inner=inner,
            checks=checks,
            snapshot_stride=_as_int(kv, "output.snapshot_stride", 1),
            output_dir=kv.get("output.dir"),
            raw_text=text,
        )
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc
    # validate eagerly so config errors surface before any compute
    scenario.grid()
    if scenario.num_steps < 0:
        raise ScenarioError("time.num_steps must be nonnegative")
    return scenario


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.is_file():
        raise ScenarioError(f"scenario file not found: {path}")
    return parse_scenario(path.read_text())


def format_scenario(sc: Scenario) -> str:
    """Normalized flat key-value rendering (reparses to an equal Scenario)."""
    lines = [
        f"name = {sc.name}",
        f"dimension = {sc.dimension}",
        f"grid.n = {sc.n}",
        f"grid.box_length = {sc.box_length!r}",
        f"equation.s = {sc.s!r}",
        f"time.tau = {sc.tau!r}",
        f"time.num_steps = {sc.num_steps}",
        f"initial.kind = {sc.initial_kind}",
    ]
    if sc.initial_kind == "gaussian":
        lines.append("initial.center = " + " ".join(repr(c) for c in sc.initial_center))
        lines.append(f"initial.variance = {sc.initial_variance!r}")
    elif sc.initial_kind == "gaussian_mixture":
        comps = " ; ".join(
            f"{w!r} : {' '.join(repr(x) for x in c)} : {v!r}" for (w, c, v) in sc.initial_components
        )
        lines.append(f"initial.components = {comps}")
    elif sc.initial_kind == "from_file":
        lines.append(f"initial.path = {sc.initial_path}")
    lines += [
        f"transport.method = {sc.transport.method}",
        f"transport.epsilon = {sc.transport.epsilon!r}",
        f"transport.max_iter = {sc.transport.max_iter}",
        f"transport.tol = {sc.transport.tol!r}",
        f"inner.max_iters = {sc.inner.max_iters}",
        f"inner.grad_tol = {sc.inner.grad_tol!r}",
        f"inner.obj_tol = {sc.inner.obj_tol!r}",
        f"inner.potential_refresh = {sc.inner.potential_refresh}",
        f"inner.momentum = {'true' if sc.inner.momentum else 'false'}",
        "checks = " + ", ".join(sc.checks),
        f"output.snapshot_stride = {sc.snapshot_stride}",
    ]
    if sc.output_dir:
        lines.append(f"output.dir = {sc.output_dir}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# run directory I/O


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _density_filename(k: int) -> str:
    return f"density_{k:06d}.txt"


def write_density_file(path, u: GridDensity):
    grid = u.grid
    cols = [c.ravel() for c in grid.coords] + [u.values.ravel()]
    with open(path, "w") as fh:
        fh.write("# " + " ".join(["x%d" % i for i in range(grid.dim)] + ["u"]) + "\n")
        for row in zip(*cols):
            fh.write(" ".join(_fmt(v) for v in row) + "\n")


def _read_density_file(path, grid: PeriodicGrid) -> np.ndarray:
    vals = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            vals.append(float(line.split()[-1]))
    arr = np.array(vals)
    if arr.size != grid.size:
        raise ScenarioError(
            f"density file {path} has {arr.size} rows, grid needs {grid.size}"
        )
    return arr.reshape(grid.shape)


def write_run_directory(out_dir, sc: Scenario, traj: Trajectory):
    """Persist diagnostics CSV, density snapshots, and the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "diagnostics.csv", "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for rec in traj.steps:
            row = [
                str(rec.index),
                _fmt(rec.index * sc.tau),
                _fmt(rec.energy),
                _fmt(rec.entropy),
                _fmt(rec.second_moment),
                _fmt(rec.w2_sq_to_prev),
                str(rec.inner_iterations),
                _fmt(rec.kkt_residual),
                _fmt(rec.boundary_mass),
            ]
            fh.write(",".join(row) + "\n")
    write_density_file(out / _density_filename(0), traj.initial)
    for rec in traj.steps:
        if rec.index % sc.snapshot_stride == 0 or rec.index == len(traj.steps):
            write_density_file(out / _density_filename(rec.index), rec.density)
    from .measure import boundary_shell_mass, entropy, second_moment
    from .spectral import energy_of_values

    grid = sc.grid()
    manifest = {
        "scenario_text": sc.raw_text or format_scenario(sc),
        "code_version": _package_version(),
        "status": traj.status,
        "num_steps": traj.num_steps,
        "initial": {
            "energy": energy_of_values(traj.initial.values, grid, sc.s),
            "entropy": entropy(traj.initial),
            "second_moment": second_moment(traj.initial),
            "boundary_mass": boundary_shell_mass(traj.initial),
        },
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _package_version() -> str:
    from . import __version__

    return __version__


def load_run_directory(run_dir):
    """Rebuild (Scenario, Trajectory) from a run directory.

    Snapshot values and CSV diagnostics round-trip float64 exactly (17
    significant digits), so reconstructed records match the in-memory run.
    """
    run = Path(run_dir)
    manifest_path = run / "manifest.json"
    if not manifest_path.is_file():
        raise ScenarioError(f"not a run directory (no manifest.json): {run}")
    manifest = json.loads(manifest_path.read_text())
    sc = parse_scenario(manifest["scenario_text"])
    grid = sc.grid()
    initial = GridDensity(grid, _read_density_file(run / _density_filename(0), grid))
    rows = []
    with open(run / "diagnostics.csv") as fh:
        header = fh.readline().strip().split(",")
        if header != CSV_COLUMNS:
            raise ScenarioError(f"unexpected diagnostics columns {header}")
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != len(CSV_COLUMNS):
                raise ScenarioError(f"malformed diagnostics row: {line!r}")
            rows.append(parts)
    steps: List[StepRecord] = []
    for parts in rows:
        k = int(parts[0])
        snap = run / _density_filename(k)
        if not snap.is_file():
            raise ScenarioError(
                f"density snapshot for step {k} missing ({snap}); "
                "rerun with output.snapshot_stride = 1 to verify"
            )
        dens = GridDensity(grid, _read_density_file(snap, grid))
        steps.append(
            StepRecord(
                index=k,
                density=dens,
                w2_sq_to_prev=float(parts[5]),
                energy=float(parts[2]),
                entropy=float(parts[3]),
                second_moment=float(parts[4]),
                inner_iterations=int(parts[6]),
                kkt_residual=float(parts[7]),
                objective_value=float(parts[2]) + float(parts[5]) / (2 * sc.tau),
                boundary_mass=float(parts[8]),
            )
        )
    traj = Trajectory(sc.jko_config(), initial, steps, status=manifest.get("status", "ok"))
    return sc, traj
