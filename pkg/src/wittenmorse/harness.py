"""Experiment runner and report writers.

Every experiment kind produces a list of homogeneous ReportRow objects.
Rows carry a verdict in {pass, fail, error:<code>}. Wall-clock timing is
logged, never written, so a re-run reproduces the files byte for byte.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import morse, semiclassical as sc, simplicial
from .config import ExperimentConfig
from .errors import ConfigError, InsufficientSpectrum, WittenMorseError
from .smith import smith_betti
from .spectral import kernel_dimension
from .susy import (graded_spectrum, low_lying, pairing_check, strong_inequalities_from_counts,
                   supercharge)
from .witten import DeformedComplex, GridWittenComplex, TorusGrid, grid_witten_laplacian

log = logging.getLogger("wittenmorse")

COLUMNS = {
    "betti": ("p", "beta", "beta_smith"),
    "morse-verify": ("function", "M", "beta", "weak", "strong", "Q", "chi"),
    "witten-scan": ("t", "p", "kernel", "beta"),
    "semiclassical": ("lambda", "n", "E_over_lambda", "e_n", "deviation"),
    "susy-pairing": ("t", "q_deviation", "anticommutator", "pairs", "unmatched", "kernel",
                     "low_lying", "M"),
}


@dataclass
class ReportRow:
    experiment: str
    values: dict
    verdict: str
    message: str = ""
    timing: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if self.verdict not in ("pass", "fail") and not self.verdict.startswith("error:"):
            raise ValueError(f"bad verdict {self.verdict!r}")

    def record(self) -> dict:
        return {"experiment": self.experiment, **self.values, "verdict": self.verdict,
                "message": self.message}


def _verdict(ok: bool) -> str:
    return "pass" if ok else "fail"


def _error_row(cfg, exc, **known):
    values = {c: known.get(c) for c in COLUMNS[cfg.kind]}
    return ReportRow(cfg.experiment_id, values, f"error:{type(exc).__name__}",
                     f"{cfg.experiment_id}: {exc}")


def _row(cfg, ok, message="", **values):
    missing = set(COLUMNS[cfg.kind]) ^ set(values)
    if missing:
        raise AssertionError(f"row columns differ from schema: {sorted(missing)}")
    return ReportRow(cfg.experiment_id, {c: values[c] for c in COLUMNS[cfg.kind]}, _verdict(ok),
                     message)


# --- inputs ----------------------------------------------------------------

def _spec(cfg):
    if cfg.function is None:
        raise ConfigError("this experiment needs a Morse function", "function")
    return morse.get(cfg.function)


def _complex(cfg):
    if cfg.off_path is not None:
        return simplicial.load_off(cfg.off_path)
    if cfg.complex is not None:
        return simplicial.generate(cfg.complex, cfg.complex_params)
    if cfg.function is not None:
        name, params = morse.MANIFOLD_COMPLEX[_spec(cfg).manifold]
        return simplicial.generate(name, {**params, **cfg.complex_params})
    raise ConfigError("need a complex, an OFF path or a Morse function", "complex")


def _stars(cfg, cx):
    if cfg.stars == "combinatorial":
        return simplicial.HodgeStarSet.combinatorial(cx)
    if cfg.stars == "random":
        return simplicial.HodgeStarSet.random(cx, cfg.seed)
    return simplicial.HodgeStarSet.circumcentric(cx)


def _smith(cx):
    n = cx.top_dimension
    return smith_betti([cx.coboundary(p) for p in range(n)], cx.counts())


def _vertex_values(spec, cx):
    if spec.vertex_function is None:
        raise ConfigError(f"{spec.name} has no vertex sampling", "function")
    return np.asarray(spec.vertex_function(cx), float)


def _deformed(cfg, t, cache):
    """A deformed complex at t, on the torus grid when ``grid`` is set, else on a mesh."""
    spec = _spec(cfg)
    if cfg.grid is not None:
        if "grid" not in cache:
            cache["grid"] = TorusGrid(spec.dim, cfg.grid, cfg.order)
        return GridWittenComplex(cache["grid"], spec, t), tuple(spec.betti)
    if "cx" not in cache:
        cx = _complex(cfg)
        cache["cx"] = cx
        cache["stars"] = _stars(cfg, cx)
        cache["f"] = _vertex_values(spec, cx)
        cache["beta"] = tuple(_smith(cx))
    return DeformedComplex(cache["cx"], cache["stars"], cache["f"], t), cache["beta"]


def _kernel(op, cfg):
    return kernel_dimension(op, seed=cfg.seed)


# --- runners ---------------------------------------------------------------

def run_betti(cfg: ExperimentConfig) -> list[ReportRow]:
    cx = _complex(cfg)
    stars = _stars(cfg, cx)
    oracle = _smith(cx)
    rows = []
    for p in range(cx.top_dimension + 1):
        try:
            b = simplicial.betti(cx, stars, p, seed=cfg.seed)
        except WittenMorseError as exc:
            rows.append(_error_row(cfg, exc, p=p, beta_smith=oracle[p]))
            continue
        rows.append(_row(cfg, b == oracle[p], p=p, beta=b, beta_smith=oracle[p]))
    return rows


def run_morse_verify(cfg: ExperimentConfig) -> list[ReportRow]:
    spec = _spec(cfg)
    rep = morse.verify(spec)
    chi = rep.counts.alternating_sum
    msg = "" if rep.euler_ok else "alternating sum of M differs from the Euler characteristic"
    return [_row(cfg, rep.passed, msg, function=spec.name, M=list(rep.counts.M),
                 beta=list(rep.betti), weak=_verdict(rep.weak.passed),
                 strong=_verdict(rep.strong.passed), Q=list(rep.gap.q), chi=chi)]


def run_witten_scan(cfg: ExperimentConfig) -> list[ReportRow]:
    cache, rows = {}, []
    for t in cfg.schedule:
        deformed, beta = _deformed(cfg, t, cache)
        for p in range(deformed.top_dimension + 1):
            try:
                k = _kernel(deformed.laplacian(p), cfg)
            except WittenMorseError as exc:
                rows.append(_error_row(cfg, exc, t=t, p=p, beta=beta[p]))
                continue
            rows.append(_row(cfg, k == beta[p], t=t, p=p, kernel=k, beta=beta[p]))
    return rows


def _scalar_problem(settings):
    if settings.potential == "harmonic":
        wells = [sc.WellData.from_potential_hessian((0.0,), [[2.0]])]
        return (lambda x: x**2), wells
    wells = [sc.WellData.from_potential_hessian((x,), [[8.0]]) for x in (-1.0, 1.0)]
    return (lambda x: (1 - x**2) ** 2), wells


def run_semiclassical(cfg: ExperimentConfig) -> list[ReportRow]:
    s = cfg.semiclassical
    req = cfg.solver.request_kw(cfg.seed)
    req.pop("method")
    if s.potential == "torus-witten":
        spec = _spec(cfg) if cfg.function else morse.get("torus/cos+cos")
        grid = TorusGrid(spec.dim, cfg.grid or 96, cfg.order)
        wells = sc.wells_from_critical_points(morse.find_critical_points(spec))
        model = sc.form_model_spectrum(spec.dim, wells, s.degree, s.n_eigs)

        def family(t):
            return grid_witten_laplacian(grid, spec, t, s.degree)
    else:
        h, wells = _scalar_problem(s)
        model = sc.scalar_model_spectrum(wells, s.n_eigs)
        centers = [w.location for w in wells]
        family = sc.schrodinger_family([tuple(s.domain)], h, None, s.N, cfg.schedule[0],
                                       order=s.order, wells=centers)
    table = sc.semiclassical_convergence(family, model, cfg.schedule, s.n_eigs, req)
    ok = {}
    for n in range(1, s.n_eigs + 1):
        good = table.final_deviation[n] <= s.tolerance
        # zero modes sit at rounding level and carry no trend
        if s.require_monotone and len(cfg.schedule) > 1 and model[n - 1] > 0:
            good = good and table.monotone[n]
        ok[n] = good
    return [_row(cfg, ok[r["n"]], **{"lambda": r["lambda"], "n": r["n"],
                                     "E_over_lambda": r["E_over_lambda"], "e_n": r["model"],
                                     "deviation": r["deviation"]})
            for r in table.rows]


def _paired_spectrum(deformed, k, req):
    """Graded spectrum with k doubled until the pairing window holds a nonzero level.

    A degenerate cluster cut by the truncation sits on the window edge and
    cannot be compared, so a small k can leave nothing to pair.
    """
    top = max(deformed.dims())
    while True:
        spectra = graded_spectrum(deformed, k, req)
        try:
            return spectra, pairing_check(spectra)
        except InsufficientSpectrum:
            if k >= top:
                raise
            k = min(2 * k, top)


def run_susy_pairing(cfg: ExperimentConfig) -> list[ReportRow]:
    cache, rows = {}, []
    kernel0 = None
    req = cfg.solver.request_kw(cfg.seed)
    for t in cfg.schedule:
        try:
            deformed, beta = _deformed(cfg, t, cache)
            q = supercharge(deformed)
            spectra, pairing = _paired_spectrum(deformed, cfg.solver.k, req)
        except WittenMorseError as exc:
            rows.append(_error_row(cfg, exc, t=t))
            continue
        values = {"t": t, "q_deviation": q.deviation, "anticommutator": q.anticommutator,
                  "pairs": len(pairing.matched),
                  "unmatched": len(pairing.unmatched_even) + len(pairing.unmatched_odd),
                  "kernel": None, "low_lying": None, "M": None}
        ok, msg = pairing.passed, ""
        if cfg.low_lying and t > 0:
            try:
                if kernel0 is None:
                    base, _ = _deformed(cfg, 0.0, cache)
                    kernel0 = [_kernel(base.laplacian(p), cfg)
                               for p in range(base.top_dimension + 1)]
                rep = low_lying(spectra, t, kernel_counts=kernel0)
                strong = strong_inequalities_from_counts(rep, beta)
            except WittenMorseError as exc:
                rows.append(_error_row(cfg, exc, **{k: v for k, v in values.items()
                                                    if k not in ("kernel", "low_lying", "M")}))
                continue
            values.update(kernel=list(rep.kernel), low_lying=list(rep.low_lying),
                          M=list(strong.M))
            ok = ok and strong.passed
            if not strong.passed:
                msg = "low-lying counts violate the strong inequalities"
        elif not pairing.passed:
            msg = "unpaired nonzero eigenvalues"
        rows.append(_row(cfg, ok, msg, **values))
    return rows


RUNNERS = {
    "betti": run_betti,
    "morse-verify": run_morse_verify,
    "witten-scan": run_witten_scan,
    "semiclassical": run_semiclassical,
    "susy-pairing": run_susy_pairing,
}


def execute(cfg: ExperimentConfig) -> list[ReportRow]:
    """Run one experiment. Module errors become a single error row with context."""
    start = time.perf_counter()
    try:
        rows = RUNNERS[cfg.kind](cfg)
    except ConfigError:
        raise
    except (WittenMorseError, OSError) as exc:
        rows = [_error_row(cfg, exc)]
    elapsed = time.perf_counter() - start
    for r in rows:
        r.timing = elapsed
    log.info("%s: %d rows in %.2f s", cfg.experiment_id, len(rows), elapsed)
    return rows


# --- writers ---------------------------------------------------------------

def _scalar(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    return v


def format_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    s = format(x, ".17g")
    return s if any(c in s for c in ".en") else s + ".0"


def _json(v) -> str:
    v = _scalar(v)
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        s = format_float(v)
        return s if math.isfinite(v) else f'"{s}"'
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, dict):
        return "{" + ", ".join(f"{_json(str(k))}: {_json(x)}" for k, x in v.items()) + "}"
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_json(x) for x in v) + "]"
    raise TypeError(f"cannot serialise {type(v).__name__}")


def _cell(v) -> str:
    v = _scalar(v)
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format_float(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return _json(v)
    return str(v)


def _records(rows, header=None):
    recs = [r.record() if isinstance(r, ReportRow) else dict(r) for r in rows]
    if recs:
        keys = list(recs[0])
        for r in recs[1:]:
            if list(r) != keys:
                raise ValueError("rows are not homogeneous")
        header = keys
    return recs, list(header or [])


def emit_csv(rows, path, header=None) -> Path:
    """CSV with a header row. With no rows, ``header`` (if given) is written alone."""
    recs, header = _records(rows, header)
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(header)
        for r in recs:
            w.writerow([_cell(r[k]) for k in header])
    return path


def emit_json(rows, path) -> Path:
    recs, _ = _records(rows)
    path = Path(path)
    body = ",\n".join("  " + _json(r) for r in recs)
    path.write_text("[\n" + body + "\n]\n" if recs else "[]\n")
    return path


def header_for(kind: str) -> list[str]:
    return ["experiment", *COLUMNS[kind], "verdict", "message"]


def run(cfg: ExperimentConfig, out: str | Path | None = None):
    """Run one experiment and write ``<out>/<experiment>.csv`` and ``.json``."""
    return run_batch([cfg], out)[0]


def run_batch(configs, out=None, workers: int = 1):
    """Run experiments (concurrently when workers > 1) and write reports in input order.

    Returns a list of (config, rows, csv_path, json_path).
    """
    ids = [c.experiment_id for c in configs]
    if len(set(ids)) != len(ids):
        raise ConfigError("experiment names must be unique within a batch", "name")
    if workers > 1 and len(configs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(execute, configs))
    else:
        results = [execute(c) for c in configs]
    written = []
    for cfg, rows in zip(configs, results):
        base = Path(out if out is not None else cfg.out)
        try:
            base.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory: {exc}", "out") from None
        c = emit_csv(rows, base / f"{cfg.experiment_id}.csv", header_for(cfg.kind))
        j = emit_json(rows, base / f"{cfg.experiment_id}.json")
        written.append((cfg, rows, c, j))
    return written


def exit_code(rows) -> int:
    return 0 if all(r.verdict == "pass" for r in rows) else 1
