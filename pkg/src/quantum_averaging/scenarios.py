"""Figure-reproduction sweeps and their CSV / JSON / plot output.

Each sweep point is an independent job seeded by ``derive_seed(run_seed,
*point_key)``, so results do not depend on execution order or on the
number of worker threads.
"""

from __future__ import annotations

import csv
import io
import json
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy

from . import __version__
from .errors import DomainError, StarvedSelectionError
from .gaussian import (
    SampleBatch,
    derive_seed,
    sample_gaussian,
    success_probability,
    threshold_for_success,
)
from .means import CorrelatedPair, stabilization_table
from .network import apply_to_covariance, apply_to_samples
from .protocol import (
    ARITHMETIC_INTERFERENCE,
    ARITHMETIC_PICK,
    HARMONIC_FEEDFORWARD,
    HARMONIC_HERALDED,
    PROTOCOLS,
    PostSelectionRule,
    ProtocolOutcome,
    feedforward_outcome,
    heralded_outcome,
    heralded_prediction,
    interference_network,
    interference_outcome,
    run_arithmetic_pick,
)

__all__ = [
    "CSV_HEADER",
    "DEFAULT_PS_GRID",
    "FIGURE_PRESETS",
    "Fig2Row",
    "Fig2Spec",
    "SweepSpec",
    "SweepRecord",
    "default_c_grid",
    "run_fig2",
    "fig2_records",
    "run_fig4",
    "run_fig5",
    "run_spec",
    "spec_from_dict",
    "records_to_csv",
    "emit",
    "run_from_manifest",
    "crossing_from_records",
]

CSV_HEADER = (
    "figure", "protocol", "n", "v_inputs", "c", "threshold", "ps_analytic", "ps_empirical",
    "ps_ci_lo", "ps_ci_hi", "var_analytic", "var_empirical", "var_stderr", "kept", "total", "seed",
)

DEFAULT_PS_GRID = tuple(float(x) for x in np.logspace(-2, 0, 20))
DEFAULT_SAMPLES = 60_000
MIN_SAMPLES = 1_000
SUMMARY_PS = 0.10
SWEEP_PROTOCOLS = (ARITHMETIC_INTERFERENCE, HARMONIC_HERALDED)

FIGURE_PRESETS = {
    "fig4a": (0.64, 0.90),
    "fig4b": (0.62, 1.83),
    "fig5": (1.95, 3.72),
}
FIG2_DEFAULTS = dict(v_quiet=0.25, v_broken=4.0, n_range=tuple(range(1, 11)), broken_range=tuple(range(0, 6)))


def default_c_grid(v1: float, v2: float) -> tuple[float, ...]:
    """Zero, weak and moderate correlation, well inside ``c^2 < v1 v2``."""
    r = math.sqrt(v1 * v2)
    return (0.0, 0.25 * r, 0.5 * r)


@dataclass(frozen=True)
class SweepRecord:
    figure: str
    protocol: str
    n: int
    v_inputs: tuple[float, ...]
    c: Optional[float] = None
    threshold: Optional[float] = None
    ps_analytic: Optional[float] = None
    ps_empirical: Optional[float] = None
    ps_ci_lo: Optional[float] = None
    ps_ci_hi: Optional[float] = None
    var_analytic: Optional[float] = None
    var_empirical: Optional[float] = None
    var_stderr: Optional[float] = None
    kept: Optional[int] = None
    total: Optional[int] = None
    seed: Optional[int] = None

    @property
    def starved(self) -> bool:
        return self.total is not None and self.var_empirical is None

    def row(self) -> list[str]:
        return [_fmt(getattr(self, name)) for name in CSV_HEADER]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, tuple):
        return ";".join(_fmt(v) for v in value)
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


# -- fig 2 -------------------------------------------------------------------


@dataclass(frozen=True)
class Fig2Row:
    n: int
    n_broken: int
    v_a: float
    v_h: float


@dataclass(frozen=True)
class Fig2Spec:
    figure: str = "fig2"
    v_quiet: float = 0.25
    v_broken: float = 4.0
    n_range: tuple[int, ...] = FIG2_DEFAULTS["n_range"]
    broken_range: tuple[int, ...] = FIG2_DEFAULTS["broken_range"]
    n_fixed: int = 5

    def to_dict(self) -> dict:
        return asdict(self)


def run_fig2(v_quiet: float, v_broken: float, n_range: Sequence[int], broken_range: Sequence[int],
             n_fixed: int = 5) -> list[Fig2Row]:
    """Stabilization table: one broken source among ``n`` (panel a), then
    ``k`` broken sources among ``n_fixed`` (panel b)."""
    rows = []
    for n in n_range:
        if n < 1:
            raise DomainError(f"resource counts must be >= 1, got {n}")
        rows.append(Fig2Row(n, min(1, n), *stabilization_table(n, min(1, n), v_quiet, v_broken)))
    for k in broken_range:
        rows.append(Fig2Row(n_fixed, k, *stabilization_table(n_fixed, k, v_quiet, v_broken)))
    return rows


def fig2_records(rows: Sequence[Fig2Row], v_quiet: float, v_broken: float, n_panel_a: int) -> list[SweepRecord]:
    out = []
    for i, r in enumerate(rows):
        fig = "fig2a" if i < n_panel_a else "fig2b"
        v = tuple([float(v_broken)] * r.n_broken + [float(v_quiet)] * (r.n - r.n_broken))
        out.append(SweepRecord(fig, "arithmetic-mean", r.n, v, var_analytic=r.v_a))
        out.append(SweepRecord(fig, "harmonic-mean", r.n, v, var_analytic=r.v_h))
    return out


# -- fig 4 / fig 5 -------------------------------------------------------------


@dataclass(frozen=True)
class SweepSpec:
    """Inputs of a variance-vs-success-probability sweep (figures 4 and 5)."""

    figure: str
    v_inputs: tuple[float, float]
    c_grid: tuple[float, ...] = (0.0,)
    ps_grid: tuple[float, ...] = DEFAULT_PS_GRID
    n_samples: int = DEFAULT_SAMPLES
    seed: int = 0
    protocols: tuple[str, ...] = SWEEP_PROTOCOLS
    summary_ps: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "v_inputs", tuple(float(v) for v in self.v_inputs))
        object.__setattr__(self, "c_grid", tuple(float(c) for c in self.c_grid))
        object.__setattr__(self, "ps_grid", tuple(float(p) for p in self.ps_grid))
        object.__setattr__(self, "protocols", tuple(self.protocols))
        if len(self.v_inputs) != 2:
            raise DomainError("sweeps take exactly two input variances")
        if not self.ps_grid or not self.c_grid:
            raise DomainError("grids must be non-empty")
        if list(self.ps_grid) != sorted(self.ps_grid):
            raise DomainError("the success-probability grid must be sorted ascending")
        if list(self.c_grid) != sorted(self.c_grid):
            raise DomainError("the correlation grid must be sorted ascending")
        for p in self.ps_grid + ((self.summary_ps,) if self.summary_ps is not None else ()):
            if not 0 < p <= 1:
                raise DomainError(f"success probabilities must lie in (0, 1], got {p}")
        if self.n_samples < MIN_SAMPLES:
            raise DomainError(f"need at least {MIN_SAMPLES} samples per point, got {self.n_samples}")
        for tag in self.protocols:
            if tag not in PROTOCOLS:
                raise DomainError(f"unknown protocol {tag!r}; choose from {PROTOCOLS}")
        v1, v2 = self.v_inputs
        for c in self.c_grid:
            pair = CorrelatedPair(v1, v2, c)
            if not pair.strictly_positive_definite:
                raise DomainError(
                    f"correlation {c} is on the positivity boundary; need |c| < sqrt(v1*v2) = {math.sqrt(v1 * v2):.6g}"
                )

    def to_dict(self) -> dict:
        return asdict(self)


def _point(pair: CorrelatedPair, ps: float, n_samples: int, seed: int, protocols, figure: str) -> list[SweepRecord]:
    net = interference_network(2)
    image = apply_to_covariance(net, pair.covariance())
    v_trig = float(image[1, 1])
    window = threshold_for_success(v_trig, ps)
    batch = sample_gaussian(pair.covariance(), n_samples, seed)
    mixed = apply_to_samples(net, batch)
    v = (pair.v1, pair.v2)
    base = dict(figure=figure, n=2, v_inputs=v, c=pair.c, seed=seed)
    out = []
    for tag in protocols:
        if tag == HARMONIC_HERALDED:
            rule = PostSelectionRule((1,), window)
            analytic = heralded_prediction(image, rule)
            ps_an = success_probability(v_trig, window)
            try:
                oc = heralded_outcome(mixed, rule, 0, analytic)
            except StarvedSelectionError as exc:
                out.append(SweepRecord(protocol=tag, threshold=window.t, ps_analytic=ps_an,
                                       ps_empirical=exc.success_probability, var_analytic=analytic,
                                       kept=exc.kept, total=exc.total, **base))
                continue
            out.append(_from_outcome(oc, base, window.t, ps_an))
            continue
        if tag == ARITHMETIC_INTERFERENCE:
            oc = interference_outcome(mixed, image)
        elif tag == HARMONIC_FEEDFORWARD:
            oc = feedforward_outcome(mixed, image)
        elif tag == ARITHMETIC_PICK:
            resources = [SampleBatch(batch.data[:, i], (f"x{i}",), seed) for i in range(2)]
            oc = run_arithmetic_pick(resources, derive_seed(seed, 1), variances=v)
        else:  # pragma: no cover - validated by SweepSpec
            raise DomainError(tag)
        out.append(_from_outcome(oc, base, None, 1.0))
    return out


def _from_outcome(oc: ProtocolOutcome, base: dict, threshold, ps_an) -> SweepRecord:
    return SweepRecord(
        protocol=oc.protocol, threshold=threshold, ps_analytic=ps_an,
        ps_empirical=oc.success.p, ps_ci_lo=oc.success.ci_lo, ps_ci_hi=oc.success.ci_hi,
        var_analytic=oc.analytic_prediction, var_empirical=oc.variance.value,
        var_stderr=oc.variance.standard_error, kept=oc.kept_count, total=oc.total, **base,
    )


def _run_jobs(jobs, workers, timings):
    def timed(job):
        t0 = time.perf_counter()
        recs = _point(*job)
        return recs, time.perf_counter() - t0

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(timed, jobs))
    else:
        results = [timed(j) for j in jobs]
    records = []
    for recs, dt in results:
        records.extend(recs)
        if timings is not None:
            timings.append(dt)
    return records


def run_fig4(v1: float, v2: float, ps_grid: Sequence[float] = DEFAULT_PS_GRID, n_samples: int = DEFAULT_SAMPLES,
             seed: int = 0, *, c: float = 0.0, protocols: Sequence[str] = SWEEP_PROTOCOLS,
             figure: str = "fig4", workers: Optional[int] = None,
             timings: Optional[list] = None) -> list[SweepRecord]:
    """Variance against success probability for two inputs.

    Each target ``P_S`` is turned into a threshold on the trigger port with
    the closed-form inversion. Points where post-selection keeps fewer than
    two samples are recorded as starved (empty empirical variance).
    """
    spec = SweepSpec(figure, (v1, v2), (c,), tuple(ps_grid), n_samples, seed, tuple(protocols))
    pair = CorrelatedPair(v1, v2, c)
    jobs = [(pair, ps, spec.n_samples, derive_seed(seed, i), spec.protocols, figure)
            for i, ps in enumerate(spec.ps_grid)]
    return _run_jobs(jobs, workers, timings)


def run_fig5(v1: float, v2: float, c_grid: Optional[Sequence[float]] = None,
             ps_grid: Sequence[float] = DEFAULT_PS_GRID, n_samples: int = DEFAULT_SAMPLES, seed: int = 0, *,
             summary_ps: float = SUMMARY_PS, protocols: Sequence[str] = SWEEP_PROTOCOLS,
             workers: Optional[int] = None, timings: Optional[list] = None) -> list[SweepRecord]:
    """Correlation study: a sweep per ``c`` (``fig5a``) and a slice at ``summary_ps`` (``fig5b``).

    The slice also carries a feedforward record, whose analytic value is the
    narrow-window harmonic mean ``2 (v1 v2 - c^2) / (v1 + v2 + 2c)``.
    """
    if c_grid is None:
        c_grid = default_c_grid(v1, v2)
    spec = SweepSpec("fig5", (v1, v2), tuple(c_grid), tuple(ps_grid), n_samples, seed, tuple(protocols), summary_ps)
    summary_protocols = tuple(spec.protocols) + (() if HARMONIC_FEEDFORWARD in spec.protocols
                                                 else (HARMONIC_FEEDFORWARD,))
    jobs = []
    for ci, c in enumerate(spec.c_grid):
        pair = CorrelatedPair(v1, v2, c)
        for i, ps in enumerate(spec.ps_grid):
            jobs.append((pair, ps, spec.n_samples, derive_seed(seed, ci, i), spec.protocols, "fig5a"))
    for ci, c in enumerate(spec.c_grid):
        pair = CorrelatedPair(v1, v2, c)
        jobs.append((pair, summary_ps, spec.n_samples, derive_seed(seed, ci, len(spec.ps_grid)),
                     summary_protocols, "fig5b"))
    return _run_jobs(jobs, workers, timings)


def spec_from_dict(d: dict):
    d = dict(d)
    if d.get("figure", "").startswith("fig2"):
        for key in ("n_range", "broken_range"):
            if key in d:
                d[key] = tuple(d[key])
        return Fig2Spec(**d)
    for key in ("v_inputs", "c_grid", "ps_grid", "protocols"):
        if key in d:
            d[key] = tuple(d[key])
    return SweepSpec(**d)


def run_spec(spec, workers: Optional[int] = None, timings: Optional[list] = None) -> list[SweepRecord]:
    """Run a figure spec; fig4-style specs use only the first correlation."""
    if isinstance(spec, Fig2Spec):
        rows = run_fig2(spec.v_quiet, spec.v_broken, spec.n_range, spec.broken_range, spec.n_fixed)
        return fig2_records(rows, spec.v_quiet, spec.v_broken, len(spec.n_range))
    v1, v2 = spec.v_inputs
    if spec.figure.startswith("fig5"):
        return run_fig5(v1, v2, spec.c_grid, spec.ps_grid, spec.n_samples, spec.seed,
                        summary_ps=spec.summary_ps if spec.summary_ps is not None else SUMMARY_PS,
                        protocols=spec.protocols, workers=workers, timings=timings)
    return run_fig4(v1, v2, spec.ps_grid, spec.n_samples, spec.seed, c=spec.c_grid[0],
                    protocols=spec.protocols, figure=spec.figure, workers=workers, timings=timings)


# -- output --------------------------------------------------------------------


def records_to_csv(records: Sequence[SweepRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def _versions() -> dict:
    return {
        "artifact": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def emit(records: Sequence[SweepRecord], out_dir, stem: str, spec=None, timings: Optional[Sequence[float]] = None,
         plot: bool = False) -> dict:
    """Write ``<stem>.csv``, ``<stem>.json`` (run manifest) and optionally ``<stem>.png``.

    Returns a mapping from kind (``csv``, ``manifest``, ``plot``) to path.
    """
    if not records:
        raise DomainError("nothing to emit: record set is empty")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / f"{stem}.csv", "manifest": out / f"{stem}.json"}
    with open(paths["csv"], "w", newline="", encoding="utf-8") as fh:
        fh.write(records_to_csv(records))
    manifest = {
        "figure": stem,
        "spec": spec.to_dict() if spec is not None else None,
        "seed": getattr(spec, "seed", None),
        "versions": _versions(),
        "csv": paths["csv"].name,
        "records": len(records),
        "point_wall_time_s": list(timings) if timings is not None else None,
    }
    with open(paths["manifest"], "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    if plot:
        paths["plot"] = out / f"{stem}.png"
        plot_records(records, paths["plot"], spec)
    return paths


def run_from_manifest(path) -> list[SweepRecord]:
    """Re-run the sweep described by a manifest written by :func:`emit`."""
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if not manifest.get("spec"):
        raise DomainError(f"manifest {path} carries no spec")
    return run_spec(spec_from_dict(manifest["spec"]))


def crossing_from_records(records: Sequence[SweepRecord], level: float = 1.0, column: str = "var_analytic",
                          protocol: str = HARMONIC_HERALDED) -> Optional[float]:
    """``P_S`` where ``column`` first crosses ``level``, by linear interpolation."""
    pts = sorted((r.ps_analytic, getattr(r, column)) for r in records
                 if r.protocol == protocol and getattr(r, column) is not None and r.ps_analytic is not None)
    for (p0, v0), (p1, v1) in zip(pts, pts[1:]):
        if (v0 - level) * (v1 - level) <= 0 and v0 != v1:
            return p0 + (level - v0) * (p1 - p0) / (v1 - v0)
    return None


def plot_records(records: Sequence[SweepRecord], path, spec=None) -> None:
    """Simple line plot: analytic curves, empirical points with stderr bars."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    if records[0].figure.startswith("fig2"):
        broken_range = getattr(spec, "broken_range", FIG2_DEFAULTS["broken_range"])
        for fig_id in sorted({r.figure for r in records}):
            for proto, style in (("arithmetic-mean", "--"), ("harmonic-mean", "-")):
                sel = [r for r in records if r.figure == fig_id and r.protocol == proto]
                xs = [r.n for r in sel] if fig_id == "fig2a" else list(broken_range)[:len(sel)]
                ax.plot(xs, [r.var_analytic for r in sel], style, marker="o", label=f"{fig_id} {proto}")
        ax.set_xlabel("resources / broken resources")
    else:
        keys = sorted({(r.figure, r.c, r.protocol) for r in records}, key=lambda k: (k[0], k[1] or 0.0, k[2]))
        for fig_id, c, proto in keys:
            sel = [r for r in records if (r.figure, r.c, r.protocol) == (fig_id, c, proto) and r.ps_analytic]
            sel.sort(key=lambda r: r.ps_analytic)
            label = f"{proto} c={c:g}"
            style = "-" if proto.startswith("harmonic") else "--"
            line, = ax.plot([r.ps_analytic for r in sel], [r.var_analytic for r in sel], style, label=label)
            emp = [r for r in sel if r.var_empirical is not None]
            ax.errorbar([r.ps_empirical for r in emp], [r.var_empirical for r in emp],
                        yerr=[r.var_stderr for r in emp], fmt="o", ms=3, color=line.get_color())
        ax.set_xscale("log")
        ax.set_xlabel("success probability")
    ax.axhline(1.0, color="grey", lw=0.8)
    ax.set_ylabel("variance (shot-noise units)")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
