"""Scenario runs, run comparison and plot-data export.

A run writes into one output directory:

``manifest.json``   config echo, tolerances, checks, artifact names, input hash
``boundary.csv``    per energy: regularity verdicts and T(lam + i0) of H0
``fiber_rank.csv``  per energy: fiber dimension of H0, window id, fiber dimension of H1
``S.csv``           per energy: S entries, eigenphases and residuals
``transmission.csv``, ``timeseries.csv``   lattice runs / time checks
``report.txt``      named checks with value, tolerance and verdict
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ScenarioConfig, load_config
from .errors import ConfigError, LapScatterError
from .fiber import diamond
from .lap import boundary_value, scan_regular_points
from .model import LATTICE
from .scattering import lead_scattering_matrix, multiplicativity_check, scatter_at
from .timedomain import PropagationConfig, transmission_by_flight

OUT_ENV = "LAPSCATTER_OUT"

TOLERANCES = {
    "default": {
        "regular_fraction": 0.99,
        "lap_residual": 1e-7,
        "diamond_identity": 1e-9,
        "form_factorization": 1e-8,
        "wave_construction_gap": 1e-7,
        "unitarity": 1e-8,
        "stationary_gap": 1e-7,
        "multiplicativity": 1e-6,
        "flight_transmission": 1e-3,
    },
    "strict": {
        "regular_fraction": 0.99,
        "lap_residual": 1e-9,
        "diamond_identity": 1e-11,
        "form_factorization": 1e-10,
        "wave_construction_gap": 1e-9,
        "unitarity": 1e-10,
        "stationary_gap": 1e-9,
        "multiplicativity": 1e-8,
        "flight_transmission": 1e-4,
    },
}

# fibers are built over the whole spectrum; the manifest maps ids to windows
FULL_WINDOW_ID = 0

QUANTITIES = ("eigenphases", "transmission", "fiber_rank", "residuals")


def fmt(x) -> str:
    """Lossless decimal text for a float."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return "%.17g" % x


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    path.write_text(buf.getvalue())


def read_csv(path: Path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body]) if body else np.zeros((0, len(header)))
    return header, data.reshape(len(body), len(header))


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool
    upper: bool = True

    def line(self) -> str:
        rel = "<=" if self.upper else ">="
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} {self.name}: {self.value:.3e} {rel} {self.tolerance:.1e}"


def _check(name, value, tol, upper=True) -> Check:
    value = float(value)
    ok = (value <= tol) if upper else (value >= tol)
    return Check(name, value, tol, bool(ok and math.isfinite(value)), upper)


@dataclass
class RunResult:
    exit_code: int
    out_dir: Path | None
    checks: list
    message: str = ""

    @property
    def failures(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]


def resolve_out_dir(cfg_name: str, out=None) -> Path:
    base = out or os.environ.get(OUT_ENV) or "lapscatter_out"
    return Path(base) / cfg_name


def run_scenario(config_path, out=None, tol_profile: str = "default", threads: int = 1) -> RunResult:
    """Run every pipeline stage for one scenario file.

    Exit code 0 when all checks pass, 1 on a failed check or a numerical
    error, 2 on a configuration error (nothing is written in that case).
    """
    if tol_profile not in TOLERANCES:
        return RunResult(2, None, [], f"unknown tolerance profile {tol_profile!r}")
    try:
        cfg = load_config(config_path)
        model, rig, P1, P2 = cfg.build()
    except ConfigError as exc:
        return RunResult(2, None, [], str(exc))
    tol = TOLERANCES[tol_profile]
    out_dir = resolve_out_dir(cfg.name, out)
    out_dir.mkdir(parents=True, exist_ok=True)
    checks: list[Check] = []
    artifacts: dict[str, str] = {}
    message = ""
    try:
        _stages(cfg, model, rig, P1, P2, tol, threads, out_dir, checks, artifacts)
    except LapScatterError as exc:
        message = f"{type(exc).__name__}: {exc}"
        checks.append(Check(f"runtime:{type(exc).__name__}", math.nan, 0.0, False))
    code = 0 if checks and all(c.passed for c in checks) else 1
    report = "\n".join(c.line() for c in checks) + ("\n" + message if message else "") + "\n"
    (out_dir / "report.txt").write_text(report)
    artifacts["report"] = "report.txt"
    manifest = {
        "config": cfg.echo,
        "input_hash": cfg.input_hash,
        "tol_profile": tol_profile,
        "tolerances": tol,
        "checks": [{"name": c.name, "value": c.value if math.isfinite(c.value) else None,
                    "tolerance": c.tolerance, "passed": c.passed} for c in checks],
        "artifacts": artifacts,
        "windows": {str(FULL_WINDOW_ID): list(model.interval)},
        "exit_code": code,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return RunResult(code, out_dir, checks, message)


def _stages(cfg: ScenarioConfig, model, rig, P1, P2, tol, threads, out_dir, checks, artifacts):
    grid = cfg.grid
    perts = [P1] + ([P1 + P2] if P2 is not None else [])
    scan = scan_regular_points(model, rig, perts, grid, tol=tol["lap_residual"], threads=threads)
    checks.append(_check("lap.regular_fraction", scan.regular_fraction, tol["regular_fraction"], upper=False))
    m = rig.m
    rows_b, rows_r, rows_s, rows_t = [], [], [], []
    worst = {k: 0.0 for k in ("diamond", "form", "gap", "unitarity", "stationary", "mult")}
    S_points = []
    for i, lam in enumerate(grid):
        regular = bool(scan.common[i])
        T0 = boundary_value(model, rig, float(lam), margin=0.0) if regular else None
        Tvals = T0.T.ravel() if T0 is not None else np.full(m * m, np.nan)
        rows_b.append([lam, float(regular), scan.residuals[0, i]]
                      + [v for z in Tvals for v in (z.real, z.imag)])
        if not regular:
            rows_r.append([lam, math.nan, FULL_WINDOW_ID, math.nan])
            S_points.append(None)
            continue
        p = scatter_at(T0, P1)
        E = p.p0.ev.matrix
        d = float(np.max(np.abs(diamond(p.p0.ev) @ E - p.p0.fiber.phi), initial=0.0))
        worst["diamond"] = max(worst["diamond"], d)
        worst["form"] = max(worst["form"], p.a_plus.factorization_residual, p.a_minus.factorization_residual)
        worst["gap"] = max(worst["gap"], p.w_plus.construction_gap, p.w_minus.construction_gap)
        u = max(p.w_plus.unitarity_defect, p.w_minus.unitarity_defect, p.S.unitarity_defect)
        worst["unitarity"] = max(worst["unitarity"], u)
        worst["stationary"] = max(worst["stationary"], p.stationary_gap)
        mult = math.nan
        if P2 is not None:
            mult = max(multiplicativity_check(lam, s, T0, P1, P2) for s in (1, -1))
            worst["mult"] = max(worst["mult"], mult)
        rows_r.append([lam, p.p0.rank, FULL_WINDOW_ID, p.p1.rank])
        rows_s.append((lam, p, u, mult))
        S_points.append(p)
        if model.kind == LATTICE and p.p0.rank == 2:
            Sl = lead_scattering_matrix(p, rig)
            rows_t.append([lam, abs(Sl[0, 1]) ** 2, abs(Sl[1, 0]) ** 2, abs(Sl[0, 0]) ** 2])

    checks.append(_check("fiber.diamond_identity", worst["diamond"], tol["diamond_identity"]))
    checks.append(_check("scattering.form_factorization", worst["form"], tol["form_factorization"]))
    checks.append(_check("scattering.wave_construction_gap", worst["gap"], tol["wave_construction_gap"]))
    checks.append(_check("scattering.unitarity", worst["unitarity"], tol["unitarity"]))
    checks.append(_check("scattering.stationary_gap", worst["stationary"], tol["stationary_gap"]))
    if P2 is not None:
        checks.append(_check("scattering.multiplicativity", worst["mult"], tol["multiplicativity"]))

    header = ["lambda", "regular", "scan_residual"] + [
        f"T_{part}_{i}{j}" for i in range(m) for j in range(m) for part in ("re", "im")]
    write_csv(out_dir / "boundary.csv", header, rows_b)
    artifacts["boundary"] = "boundary.csv"
    write_csv(out_dir / "fiber_rank.csv", ["lambda", "rank", "window_id", "rank_perturbed"], rows_r)
    artifacts["fiber_rank"] = "fiber_rank.csv"

    r_max = max([row[1].p0.rank for row in rows_s] + [0])
    header = ["lambda", "r0", "r1"]
    header += [f"S_{part}_{i}{j}" for i in range(r_max) for j in range(r_max) for part in ("re", "im")]
    header += [f"phase_{k}" for k in range(r_max)] + ["unitarity_residual", "multiplicativity_residual"]
    rows = []
    for lam, p, u, mult in rows_s:
        r = p.p0.rank
        S = np.full((r_max, r_max), np.nan, dtype=complex)
        S[:r, :r] = p.S.S
        phases = np.full(r_max, np.nan)
        phases[:r] = p.S.eigenphases
        rows.append([lam, r, p.p1.rank] + [v for z in S.ravel() for v in (z.real, z.imag)]
                    + list(phases) + [u, mult])
    write_csv(out_dir / "S.csv", header, rows)
    artifacts["S"] = "S.csv"

    if rows_t:
        write_csv(out_dir / "transmission.csv", ["lambda", "T_right_to_left", "T_left_to_right", "R_left"], rows_t)
        artifacts["transmission"] = "transmission.csv"

    if cfg.energies:
        _timecheck(cfg, rig, P1, tol, out_dir, checks, artifacts)


def _timecheck(cfg, rig, P1, tol, out_dir, checks, artifacts):
    model = rig.model
    J = P1.J
    potential = {int(s): float((J[j, j] * rig.site_weights[j] ** 2).real)
                 for j, s in enumerate(rig.sites) if J[j, j] != 0}
    if np.max(np.abs(J - np.diag(np.diag(J)))) > 0:
        raise ConfigError("time checks need a diagonal site potential")
    pc = PropagationConfig(L_big=int(cfg.flight.get("L_big", 2000)), sigma=cfg.flight.get("sigma", 20.0),
                           center=cfg.flight.get("center", -150.0))
    rows, series = [], []
    worst = 0.0
    for lam in cfg.energies:
        fr = transmission_by_flight(potential, lam, pc)
        p = scatter_at(boundary_value(model, rig, lam), P1)
        Sl = lead_scattering_matrix(p, rig)
        t_stat = abs(Sl[1, 0]) ** 2
        worst = max(worst, abs(t_stat - fr.transmission))
        rows.append([lam, t_stat, fr.transmission, fr.reflection, fr.mass_defect])
        series.extend([[lam] + list(r) for r in fr.series])
    checks.append(_check("timedomain.flight_transmission", worst, tol["flight_transmission"]))
    write_csv(out_dir / "flight.csv", ["lambda", "T_stationary", "T_flight", "R_flight", "mass_defect"], rows)
    write_csv(out_dir / "timeseries.csv",
              ["lambda", "t", "transmitted_mass", "reflected_mass", "norm_defect"], series)
    artifacts["flight"] = "flight.csv"
    artifacts["timeseries"] = "timeseries.csv"


def load_manifest(path) -> tuple[dict, Path]:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path} is not a manifest")
    return data, path.parent


def compare_runs(manifest_a, manifest_b) -> dict:
    """Max entrywise deviation per shared CSV artifact (shared columns only).

    Raises ConfigError when the energy grids differ.
    """
    A, dir_a = load_manifest(manifest_a)
    B, dir_b = load_manifest(manifest_b)
    arts_a, arts_b = A.get("artifacts", {}), B.get("artifacts", {})
    out = {}
    for key in sorted(set(arts_a) & set(arts_b)):
        if not arts_a[key].endswith(".csv"):
            continue
        ha, da = read_csv(dir_a / arts_a[key])
        hb, db = read_csv(dir_b / arts_b[key])
        if "lambda" in ha and "lambda" in hb:
            la, lb = da[:, ha.index("lambda")], db[:, hb.index("lambda")]
            if la.shape != lb.shape or np.any(la != lb):
                raise ConfigError(f"incompatible grids in {key}")
        elif da.shape[0] != db.shape[0]:
            raise ConfigError(f"incompatible row counts in {key}")
        shared = [c for c in ha if c in hb and c != "lambda"]
        dev = 0.0
        for c in shared:
            x, y = da[:, ha.index(c)], db[:, hb.index(c)]
            both = ~(np.isnan(x) & np.isnan(y))
            if np.any(np.isnan(x[both]) | np.isnan(y[both])):
                dev = math.inf
                continue
            if both.any():
                dev = max(dev, float(np.max(np.abs(x[both] - y[both]))))
        out[key] = dev
    return out


def emit_plot_data(manifest, quantity: str, out=None) -> Path:
    """Whitespace-separated numeric columns for an external plotting tool."""
    if quantity not in QUANTITIES:
        raise ConfigError(f"unknown quantity {quantity!r}; choose from {QUANTITIES}")
    data, base = load_manifest(manifest)
    arts = data.get("artifacts", {})
    if not arts:
        raise ConfigError("manifest lists no artifacts")
    source = {"eigenphases": "S", "residuals": "S", "fiber_rank": "fiber_rank", "transmission": "transmission"}[quantity]
    if source not in arts:
        raise ConfigError(f"manifest has no {source} artifact for {quantity}")
    header, table = read_csv(base / arts[source])
    if quantity == "eigenphases":
        cols = ["lambda"] + [h for h in header if h.startswith("phase_")]
    elif quantity == "residuals":
        cols = ["lambda", "unitarity_residual", "multiplicativity_residual"]
    elif quantity == "fiber_rank":
        cols = ["lambda", "rank", "rank_perturbed"]
    else:
        cols = ["lambda", "T_left_to_right"]
    sel = table[:, [header.index(c) for c in cols]]
    if quantity == "eigenphases":
        # continuous phase curves along the grid
        for j in range(1, sel.shape[1]):
            ok = ~np.isnan(sel[:, j])
            sel[ok, j] = np.unwrap(sel[ok, j])
    target = (Path(out) if out else base) / f"plot_{quantity}.dat"
    target.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# " + " ".join(cols)] + [" ".join(fmt(v) for v in row) for row in sel]
    target.write_text("\n".join(lines) + "\n")
    return target
