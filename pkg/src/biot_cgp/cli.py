"""Command-line driver for convergence studies on the manufactured benchmark.

Each level j uses the base mesh refined j times and tau = tau0 / 2**j.
Results go to stdout as an aligned table and, optionally, to a CSV file.

Options may also come from a plain-text file of ``key = value`` lines
(``#`` starts a comment); command-line flags override the file.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .assembly import OperatorSet, build_operators
from .errors import COLUMNS, ErrorReport, ErrorRow, measure_errors
from .linalg import SolverError
from .mesh import refined_mesh
from .mms import ManufacturedSolution, default_parameters
from .timestepping import FieldSources, TimeMesh, Trajectory, initial_state, run

log = logging.getLogger("biot_cgp")

CSV_HEADER = (
    "level", "tau", "h",
    "err_grad_u", "eoc_u", "err_v", "eoc_v", "err_w", "eoc_w", "err_p", "eoc_p",
)
PARAM_KEYS = ("rho_bar", "rho_f", "rho_w", "alpha", "s0", "lam", "mu", "K_inv")


@dataclass
class RunConfig:
    """Settings for a convergence study; the defaults give the benchmark setup."""

    k: int = 1
    ell: int = 1
    levels: int = 3
    m: int = 5
    tau0: float = 0.1
    T: float = 1.0
    eta: float | None = None
    params: dict[str, float] = field(default_factory=dict)
    samples: int = 100
    csv: str | None = None
    table: str | None = None
    export_dir: str | None = None
    export_times: tuple[float, ...] = ()
    export_subdivisions: int = 0
    parallel_levels: bool = False

    def validate(self):
        if self.k not in (1, 2, 3):
            raise ValueError(f"k must be 1, 2 or 3, got {self.k}")
        if self.ell not in (0, 1, 2):
            raise ValueError(f"ell must be 0, 1 or 2, got {self.ell}")
        if self.levels < 1 or self.m < 1 or self.samples < 1:
            raise ValueError("levels, m and samples must be positive")
        if self.tau0 <= 0 or self.T <= 0:
            raise ValueError("tau0 and T must be positive")
        steps = self.T / self.tau0
        if abs(steps - round(steps)) > 1e-9 * steps:
            raise ValueError(f"T / tau0 = {steps} is not an integer")
        for t in self.export_times:
            if not 0.0 <= t <= self.T:
                raise ValueError(f"export time {t} outside [0, {self.T}]")
        unknown = set(self.params) - set(PARAM_KEYS)
        if unknown:
            raise ValueError(f"unknown parameter(s): {sorted(unknown)}")

    def model_parameters(self):
        prm = default_parameters(self.eta)
        if self.params:
            prm = prm.with_(**self.params)
        return prm

    def slabs(self, level: int) -> int:
        return int(round(self.T / self.tau0)) * 2**level


# -- single level -----------------------------------------------------------

@dataclass
class LevelResult:
    row: ErrorRow
    trajectory: Trajectory | None = None
    ops: OperatorSet | None = None


def solve_level(cfg: RunConfig, level: int, keep: bool = False) -> LevelResult:
    """Solve the benchmark on one refinement level and measure its errors."""
    start = time.perf_counter()
    prm = cfg.model_parameters()
    sol = ManufacturedSolution(prm)
    mesh = refined_mesh(cfg.m, level)
    ops = build_operators(mesh, cfg.ell, prm)
    tm = TimeMesh.uniform(cfg.T, cfg.slabs(level))
    X0 = initial_state(ops, *sol.initial_data())
    try:
        traj = run(tm, X0, ops, cfg.k, FieldSources(ops, sol.f, sol.g))
    except SolverError as exc:
        raise SolverError(f"level {level}: {exc}") from exc
    errs = measure_errors(traj, ops, sol, cfg.samples)
    row = ErrorRow(level, float(tm.taus[0]), mesh.h, errs, time.perf_counter() - start)
    log.info("level %d: %s (%.1fs)", level, ", ".join(f"{c}={errs[c]:.3e}" for c in COLUMNS), row.seconds)
    return LevelResult(row, traj if keep else None, ops if keep else None)


def _row_only(args) -> ErrorRow:
    cfg, level = args
    return solve_level(cfg, level).row


# -- output ------------------------------------------------------------------

def report_csv(report: ErrorReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    writer.writerows(report.table_rows())
    return buf.getvalue()


def report_table(report: ErrorReport) -> str:
    """Aligned plain-text version of the CSV."""
    rows = [list(CSV_HEADER)] + report.table_rows()
    widths = [max(len(r[i]) for r in rows) for i in range(len(CSV_HEADER))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows]
    title = f"cGP({report.k}), BDM{report.ell + 1} x P{report.ell}"
    return title + "\n" + "\n".join(lines) + "\n"


def run_convergence(cfg: RunConfig) -> ErrorReport:
    """Run all levels, write the requested files and return the report."""
    cfg.validate()
    report = ErrorReport(cfg.k, cfg.ell)
    levels = range(cfg.levels)
    exporting = cfg.export_dir is not None and cfg.export_times
    if cfg.parallel_levels and cfg.levels > 1:
        with ProcessPoolExecutor(max_workers=cfg.levels) as pool:
            report.rows.extend(pool.map(_row_only, [(cfg, j) for j in levels]))
        last = solve_level(cfg, cfg.levels - 1, keep=True) if exporting else None
    else:
        last = None
        for j in levels:
            res = solve_level(cfg, j, keep=exporting and j == cfg.levels - 1)
            report.rows.append(res.row)
            last = res
    if cfg.csv:
        Path(cfg.csv).write_text(report_csv(report))
    if cfg.table:
        Path(cfg.table).write_text(report_table(report))
    if exporting:
        export_fields(last.trajectory, last.ops, cfg.export_times, cfg.export_dir,
                      subdivisions=cfg.export_subdivisions or cfg.ell + 1)
    return report


# -- VTK export ----------------------------------------------------------------

def _subdivision(n: int):
    """Reference points and triangles of the uniform n x n split of the reference cell."""
    idx = {}
    pts = []
    for j in range(n + 1):
        for i in range(n + 1 - j):
            idx[i, j] = len(pts)
            pts.append((i / n, j / n))
    tris = []
    for j in range(n):
        for i in range(n - j):
            tris.append((idx[i, j], idx[i + 1, j], idx[i, j + 1]))
            if i + j < n - 1:
                tris.append((idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]))
    return np.array(pts), np.array(tris)


def export_fields(traj: Trajectory, ops: OperatorSet, times, path, subdivisions: int = 2) -> list[Path]:
    """Write one legacy ASCII VTK file per time with point samples of u, v, w and p.

    Points are duplicated per mesh cell so the discontinuous fields are
    represented without averaging.
    """
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    ref, tris = _subdivision(subdivisions)
    V, P = ops.vspace, ops.pspace
    X = V.map_points(ref).reshape(-1, 2)
    nc, npc = ops.vspace.mesh.num_cells, len(ref)
    conn = (np.arange(nc)[:, None, None] * npc + tris[None]).reshape(-1, 3)
    files = []
    for i, t in enumerate(times):
        sample = {}
        for name in ("u", "v", "w"):
            coeffs = V.extend(traj.evaluate(t, name))
            sample[name] = V.evaluate(coeffs, ref).reshape(-1, 2)
        sample["p"] = P.evaluate(traj.evaluate(t, "p"), ref).reshape(-1)
        fname = out / f"fields_{i:04d}.vtk"
        _write_vtk(fname, X, conn, sample, t)
        files.append(fname)
    return files


def _write_vtk(fname: Path, X, conn, data, t: float):
    lines = ["# vtk DataFile Version 3.0", f"biot fields t={float(t)!r}", "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {len(X)} double")
    lines += [f"{x!r} {y!r} 0.0" for x, y in np.asarray(X, dtype=float).tolist()]
    lines.append(f"CELLS {len(conn)} {4 * len(conn)}")
    lines += [f"3 {a} {b} {c}" for a, b, c in conn]
    lines.append(f"CELL_TYPES {len(conn)}")
    lines += ["5"] * len(conn)
    lines.append(f"POINT_DATA {len(X)}")
    for name in ("u", "v", "w"):
        lines.append(f"VECTORS {name} double")
        lines += [f"{a!r} {b!r} 0.0" for a, b in np.asarray(data[name], dtype=float).tolist()]
    lines += ["SCALARS p double 1", "LOOKUP_TABLE default"]
    lines += [repr(s) for s in np.asarray(data["p"], dtype=float).tolist()]
    try:
        fname.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {fname}: {exc}") from exc


def read_vtk(fname) -> dict[str, np.ndarray]:
    """Parse a file written by :func:`export_fields` (points, cells and point data)."""
    tokens = Path(fname).read_text().split("\n")
    out: dict[str, np.ndarray] = {}
    i = 0
    while i < len(tokens):
        head = tokens[i].split()
        if not head:
            i += 1
            continue
        key = head[0]
        if key == "POINTS":
            n = int(head[1])
            out["points"] = np.array([tokens[i + 1 + j].split()[:2] for j in range(n)], dtype=float)
            i += n + 1
        elif key == "CELLS":
            n = int(head[1])
            out["cells"] = np.array([tokens[i + 1 + j].split()[1:] for j in range(n)], dtype=int)
            i += n + 1
        elif key == "VECTORS":
            n = len(out["points"])
            out[head[1]] = np.array([tokens[i + 1 + j].split()[:2] for j in range(n)], dtype=float)
            i += n + 1
        elif key == "SCALARS":
            n = len(out["points"])
            out[head[1]] = np.array(tokens[i + 2:i + 2 + n], dtype=float)
            i += n + 2
        else:
            i += 1
    return out


# -- argument handling ---------------------------------------------------------

def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(s) for s in text.replace(",", " ").split())


def _param(text: str) -> tuple[str, float]:
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected name=value, got {text!r}")
    return key.strip(), float(value)


_CONVERTERS = {
    "k": int, "ell": int, "levels": int, "m": int, "samples": int, "export_subdivisions": int,
    "tau0": float, "T": float, "eta": float,
    "csv": str, "table": str, "export_dir": str,
    "export_times": _float_list,
    "parallel_levels": lambda s: s.strip().lower() in ("1", "true", "yes", "on"),
}


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; parameter overrides use ``param.<name>``."""
    values: dict = {}
    params: dict[str, float] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key = key.strip().replace("-", "_")
        if key.startswith("param."):
            params[key[6:]] = float(value)
        elif key in _CONVERTERS:
            values[key] = _CONVERTERS[key](value.strip())
        else:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
    if params:
        values["params"] = params
    return values


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    p = argparse.ArgumentParser(
        prog="biot-cgp",
        description="Convergence study for the dynamic Biot benchmark (cGP in time, H(div) DG in space).",
    )
    p.add_argument("--config", help="key = value settings file (flags take precedence)")
    p.add_argument("-k", type=int, default=S, help="cGP degree in time, 1..3 (default 1)")
    p.add_argument("--ell", type=int, default=S, help="pressure degree; displacements use BDM_{ell+1} (default 1)")
    p.add_argument("--levels", type=int, default=S, help="number of refinement levels (default 3)")
    p.add_argument("-m", type=int, default=S, help="cells per side of the base mesh (default 5)")
    p.add_argument("--tau0", type=float, default=S, help="time step on level 0 (default 0.1)")
    p.add_argument("-T", type=float, default=S, help="final time (default 1)")
    p.add_argument("--eta", type=float, default=S, help="interior penalty (default 4 (ell + 2)^2)")
    p.add_argument("--param", type=_param, action="append", default=S, metavar="NAME=VALUE",
                   help=f"override a model parameter ({', '.join(PARAM_KEYS[:-1])})")
    p.add_argument("--samples", type=int, default=S, help="sample times per slab for L^inf(L^2) (default 100)")
    p.add_argument("--csv", default=S, help="write the error table as CSV")
    p.add_argument("--table", default=S, help="write the aligned text table")
    p.add_argument("--export-dir", dest="export_dir", default=S, help="directory for VTK output (finest level)")
    p.add_argument("--export-times", dest="export_times", type=_float_list, default=S,
                   help="comma separated export times")
    p.add_argument("--export-subdivisions", dest="export_subdivisions", type=int, default=S)
    p.add_argument("--parallel-levels", dest="parallel_levels", action="store_true", default=S,
                   help="solve levels in separate processes")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-level progress")
    return p


def config_from_args(argv=None) -> tuple[RunConfig, bool]:
    ns = vars(build_parser().parse_args(argv))
    verbose = ns.pop("verbose", False)
    values = read_config_file(ns.pop("config")) if ns.get("config") else {}
    ns.pop("config", None)
    params = dict(values.pop("params", {}))
    params.update(dict(ns.pop("param", [])))
    values.update(ns)
    names = {f.name for f in fields(RunConfig)}
    cfg = RunConfig(**{k: v for k, v in values.items() if k in names}, params=params)
    return cfg, verbose


def main(argv=None) -> int:
    try:
        cfg, verbose = config_from_args(argv)
    except (OSError, ValueError) as exc:
        print(f"biot-cgp: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")
    try:
        report = run_convergence(cfg)
    except (SolverError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"biot-cgp: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(report_table(report))
    return 0


if __name__ == "__main__":
    sys.exit(main())
