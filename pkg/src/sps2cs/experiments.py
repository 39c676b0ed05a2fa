"""Bell-transfer fidelity and parameter sweeps (g2, cavity decay) with reproducible CSV output."""
from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .config import TIERS, apply_overrides, load_preset, preset_hash, resolve_preset
from .device import DeviceParams, set_path
from .dynamics import TrajectoryConfig
from .protocol import run_numeric, target_state

CSV_HEADER = ("param", "fidelity", "trace_err", "leakage", "f_pop_max", "wall_s", "status")
TRACE_LIMIT = 1e-5
LEAKAGE_LIMIT = 1e-4
WORKERS_ENV = "SPS2CS_WORKERS"
G2_VALUES_MHZ = tuple(np.linspace(4.0, 24.0, 21))
KAPPA_INV_VALUES_US = (50.0, 100.0, 150.0)


def tier_params(p: DeviceParams, tier: str) -> DeviceParams:
    return set_path(p, "alpha", TIERS[tier].alpha)


def _truncation_leakage(ens, space) -> float:
    """Largest population in the top Fock level of any cavity."""
    worst = 0.0
    for lab, dim in zip(space.labels, space.dims):
        if lab == "qutrit":
            continue
        ax = space.index(lab)
        tot = 0.0
        for s, w in zip(ens.states, ens.weights):
            t = s.reshape(space.dims)
            tot += w * float(np.sum(np.abs(np.take(t, dim - 1, axis=ax)) ** 2)) / max(np.vdot(s, s).real, 1e-300)
        worst = max(worst, tot)
    return worst


def bell_transfer_fidelity(p: DeviceParams, tier: str = "A", lossless: bool = False, seed: int = 0,
                           n_trajectories: int | None = None, drive_model: str = "full",
                           dressing: str = "adiabatic") -> dict:
    """Final fidelity of the Bell transfer on the tier's truncated space plus diagnostics."""
    t0 = time.perf_counter()
    tr = TIERS[tier]
    p = tier_params(p, tier)
    space = tr.space()
    cfg = TrajectoryConfig(n_trajectories=n_trajectories or tr.n_trajectories or 200, seed=seed)
    out = run_numeric(p, space, lossless=lossless, traj=cfg, drive_model=drive_model, dressing=dressing)
    last = out[-1]
    from .dynamics import TrajectoryEnsemble

    ens = last.state if isinstance(last.state, TrajectoryEnsemble) else TrajectoryEnsemble.pure(last.state)
    return {
        "fidelity": last.fidelity,
        "stderr": last.diagnostics.get("stderr", 0.0),
        "trace_err": ens.trace_error if not lossless else abs(last.state.norm() ** 2 - 1),
        "leakage": max(_truncation_leakage(ens, space), target_state(p, space, max_leakage=1.0).meta["leakage"]),
        "f_pop_max": max(o.diagnostics.get("f_pop_max", 0.0) for o in out),
        "wall_s": time.perf_counter() - t0,
        "steps": [o.fidelity for o in out],
    }


@dataclass(frozen=True)
class SweepSpec:
    """One-parameter sweep.  ``path`` is a preset key with optional unit suffix
    (``g.c2_mhz``, ``kappa_inv.all_us``); ``values`` are in those units."""

    path: str
    values: tuple
    base: str = "paper_sec4"
    solver: str = "trajectories"
    out: str | None = None
    tier: str = "A"
    seed: int = 0
    overrides: tuple = ()
    drive_model: str = "full"
    n_trajectories: int | None = None
    timing: bool = False

    def __post_init__(self):
        if self.tier not in TIERS:
            raise ValueError(f"unknown tier {self.tier!r}")
        if self.solver not in ("trajectories", "lossless"):
            raise ValueError(f"unknown solver {self.solver!r}")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "overrides", tuple(self.overrides))

    def point_seed(self, index: int) -> int:
        return self.seed ^ index


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list = field(default_factory=list)

    @property
    def params(self) -> np.ndarray:
        return np.array([float(r["param"]) for r in self.rows])

    @property
    def fidelities(self) -> np.ndarray:
        return np.array([float(r["fidelity"]) for r in self.rows])

    @property
    def failed(self) -> list:
        return [r["param"] for r in self.rows if r.get("status", "ok").startswith("failed")]

    def peak(self) -> tuple[float, float, bool]:
        """Vertex of the parabola through the best point and its neighbours.

        Failed points are ignored.  Returns ``(x, F, interior)``; ``interior``
        is False when the best point sits at either end of the sweep.
        """
        x, y = self.params, self.fidelities
        keep = np.isfinite(y)
        if not keep.any():
            raise ValueError("no successful points to fit")
        x, y = x[keep], y[keep]
        order = np.argsort(x)
        x, y = x[order], y[order]
        i = int(np.argmax(y))
        if i == 0 or i == len(x) - 1:
            return float(x[i]), float(y[i]), False
        a, b, c = np.polyfit(x[i - 1:i + 2], y[i - 1:i + 2], 2)
        if a >= 0:
            return float(x[i]), float(y[i]), True
        xv = -b / (2 * a)
        return float(xv), float(np.polyval([a, b, c], xv)), True

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in sorted(self.rows, key=lambda r: float(r["param"])):
            w.writerow([r[k] for k in CSV_HEADER])
        return buf.getvalue()


def _format_row(value: float, res: dict | None, timing: bool, error: str = "") -> dict:
    if res is None:
        return {"param": f"{value:.6g}", "fidelity": "nan", "trace_err": "nan", "leakage": "nan",
                "f_pop_max": "nan", "wall_s": "nan", "status": f"failed:{error}"}
    flagged = res["trace_err"] >= TRACE_LIMIT or res["leakage"] >= LEAKAGE_LIMIT
    return {
        "param": f"{value:.6g}",
        "fidelity": f"{res['fidelity']:.8f}",
        "trace_err": f"{res['trace_err']:.3e}",
        "leakage": f"{res['leakage']:.3e}",
        "f_pop_max": f"{res['f_pop_max']:.3e}",
        "wall_s": f"{res['wall_s']:.2f}" if timing else "-",
        "status": "flagged" if flagged else "ok",
    }


def _run_point(args) -> tuple[int, dict, float]:
    spec, index, value = args
    t0 = time.perf_counter()
    try:
        p = load_preset(resolve_preset(spec.base))
        p = apply_overrides(p, [*spec.overrides, f"{spec.path}={value!r}"])
        res = bell_transfer_fidelity(p, spec.tier, lossless=spec.solver == "lossless",
                                     seed=spec.point_seed(index), n_trajectories=spec.n_trajectories,
                                     drive_model=spec.drive_model)
        row = _format_row(value, res, spec.timing)
    except Exception as exc:  # a failed point is recorded, not fatal
        row = _format_row(value, None, spec.timing, type(exc).__name__)
    return index, row, time.perf_counter() - t0


def _read_rows(path: Path) -> dict:
    if not path.exists():
        return {}
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    return {r["param"]: r for r in rows if r.get("status") in ("ok", "flagged")}


def workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def run_sweep(spec: SweepSpec, n_workers: int | None = None) -> SweepResult:
    """Run every point not already present in ``spec.out`` (resumable)."""
    out_dir = Path(spec.out) if spec.out else None
    done = _read_rows(out_dir / "results.csv") if out_dir else {}
    todo = [(spec, i, v) for i, v in enumerate(spec.values) if f"{v:.6g}" not in done]
    rows = {k: v for k, v in done.items() if float(k) in {float(f"{x:.6g}") for x in spec.values}}
    timings = {}
    n_workers = n_workers or workers()
    if n_workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(n_workers) as ex:
            results = list(ex.map(_run_point, todo))
    else:
        results = []
        for item in todo:
            results.append(_run_point(item))
            if out_dir:  # checkpoint after every point
                rows[results[-1][1]["param"]] = results[-1][1]
                emit_results(SweepResult(spec, list(rows.values())), out_dir, timings)
    for i, row, wall in results:
        rows[row["param"]] = row
        timings[row["param"]] = round(wall, 3)
    result = SweepResult(spec, list(rows.values()))
    if out_dir:
        emit_results(result, out_dir, timings)
    return result


PLOT_SCRIPT = '''"""Plot fidelity against the swept parameter: python plot.py [results.csv]"""
import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "results.csv"
with open(path) as fh:
    rows = [r for r in csv.DictReader(fh) if r["status"] != "failed"]
x = [float(r["param"]) for r in rows]
y = [float(r["fidelity"]) for r in rows]
plt.plot(x, y, "o-")
plt.xlabel("{label}")
plt.ylabel("Bell-transfer fidelity")
plt.savefig(path.rsplit(".", 1)[0] + ".png", dpi=150)
'''


def emit_results(result: SweepResult, out_dir: str | Path, timings: dict | None = None) -> Path:
    """Write ``results.csv``, ``manifest.json`` and ``plot.py`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = result.spec
    (out_dir / "results.csv").write_text(result.to_csv())
    manifest = {
        "version": __version__,
        "preset": str(spec.base),
        "preset_sha256": preset_hash(resolve_preset(spec.base)),
        "tier": spec.tier,
        "seeds": {f"{v:.6g}": spec.point_seed(i) for i, v in enumerate(spec.values)},
        "spec": asdict(spec),
    }
    if timings:
        manifest["wall_s"] = timings
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    (out_dir / "plot.py").write_text(PLOT_SCRIPT.replace("{label}", spec.path))
    return out_dir / "results.csv"


def sweep_g2(base: str = "paper_sec4", T_us: float = 15.0, values: Sequence[float] = G2_VALUES_MHZ,
             tier: str = "A", out: str | None = None, seed: int = 0, **kw) -> SweepResult:
    """Sweep g2/2pi in MHz; mu follows through the matching rule."""
    spec = SweepSpec("g.c2_mhz", tuple(values), base, out=out, tier=tier, seed=seed,
                     overrides=(f"T_us={T_us!r}",), **kw)
    return run_sweep(spec)


def sweep_kappa(base: str = "paper_sec4", T_us: float = 15.0, values: Sequence[float] = KAPPA_INV_VALUES_US,
                tier: str = "A", out: str | None = None, seed: int = 0, **kw) -> SweepResult:
    """Sweep a uniform cavity lifetime 1/kappa in microseconds."""
    spec = SweepSpec("kappa_inv.all_us", tuple(values), base, out=out, tier=tier, seed=seed,
                     overrides=(f"T_us={T_us!r}",), **kw)
    return run_sweep(spec)
