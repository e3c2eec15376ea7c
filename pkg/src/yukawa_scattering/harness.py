"""Experiment driver: INI configs in, deterministic CSV tables out.

A config is a flat INI file.  Every key, its section, default and meaning is
listed in :data:`KEYS`; ``yukawa-scattering --help`` prints the same table.
Each experiment writes ``<out>/<experiment>.csv`` whose ``#`` header records
the full resolved config, so a table can be regenerated from its own header.
"""

from __future__ import annotations

import configparser
import csv
import io
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import __version__
from .extrapolation import INVERSE_PARAM, PARAM_SQUARED, extrapolate
from .grid import (BoundaryError, ComplexField, Grid3, dilate, fft_forward, fft_inverse, inner,
                   norm, save_field)
from .models import ModelParams
from .oracles import (brute_convolution, gaussian_free_closed_form, implicit_stepper,
                      kernel_check_table)
from .profiles import Gaussian
from .propagators import (BlowUpError, HamiltonianSpec, decay_rates, evolve_linear, evolve_nls,
                          evolve_srh, nrl_defect)
from .reconstruction import (CapExceededError, ConvergenceError, NonMonotoneError, digit_extract,
                             recon_full, recon_q1, recon_ratio, recon_srh)
from .scattering import ScatterConfig, SmallnessError, amplitude_pairing
from .yukawa import YukawaParams, yukawa_symbol

__all__ = ["ExperimentConfig", "ExperimentOutcome", "KEYS", "EXPERIMENTS", "run_experiment",
           "load_config", "GuardError", "write_csv"]

EXPERIMENTS = ("kernel-check", "self-test", "evolve", "scatter", "recon-ratio", "recon-digits",
               "recon-srh", "nrl", "decay", "recon-full")

# (section, key) -> (attribute, parser, default, help)
KEYS = {
    ("experiment", "name"): ("experiment", str, "kernel-check", "one of " + ", ".join(EXPERIMENTS)),
    ("experiment", "seed"): ("seed", int, 0, "seed for random test fields"),
    ("model", "family"): ("family", str, "nls", "nls or srh"),
    ("model", "Q0"): ("Q0", float, 0.5, "linear potential coupling (nls)"),
    ("model", "mu0"): ("mu0", float, 1.0, "linear potential screening (nls)"),
    ("model", "Q1"): ("Q1", float, 1.25, "Hartree kernel coupling (nls)"),
    ("model", "mu1"): ("mu1", float, 2.0, "Hartree kernel screening (nls)"),
    ("model", "Q2"): ("Q2", float, 1.0, "Hartree kernel coupling (srh)"),
    ("model", "mu2"): ("mu2", float, 1.0, "Hartree kernel screening (srh)"),
    ("grid", "n"): ("n", int, 48, "points per axis"),
    ("grid", "L"): ("L", float, 40.0, "box length"),
    ("time", "T"): ("T", float, 4.0, "half window of the scattering maps"),
    ("time", "dt"): ("dt", float, 0.005, "Strang step"),
    ("time", "t"): ("t", float, 1.0, "evolve: final time"),
    ("sweeps", "lambdas"): ("lambdas", "floats", (2.0, 4.0, 8.0), "dilations for ratio limits"),
    ("sweeps", "nrl_lambdas"): ("nrl_lambdas", "floats", (4.0, 8.0, 16.0), "nrl: dilations"),
    ("sweeps", "eps"): ("eps", "floats", (0.2, 0.1, 0.05), "amplitudes for small-data limits"),
    ("sweeps", "alphas"): ("alphas", "floats", (0.5, 1.0, 2.0), "Psi oddness and monotonicity check points"),
    ("sweeps", "times"): ("times", "floats", (4.0, 6.0, 8.0, 11.0, 16.0), "decay: sample times"),
    ("profile", "width"): ("width", float, 8.0, "Gaussian width a of the ratio-stage profile"),
    ("profile", "coupling_width"): ("coupling_width", float, 1.0,
                                     "Gaussian width of the digit-stage profile"),
    ("recon", "depth"): ("depth", int, 8, "binary digits J"),
    ("recon", "mode"): ("mode", str, "born", "ratio numerator: born, literal or double_limit"),
    ("recon", "target"): ("target", str, "born", "digit target: born or epsilon"),
    ("recon", "extrapolation"): ("extrapolation", str, "auto", "auto, richardson or last_value"),
    ("recon", "ratio"): ("ratio", "optional", None,
                         "recon-digits: known Q/mu^2 (default: planted truth)"),
    ("recon", "tail_budget"): ("tail_budget", float, 1e-8, "mass allowed near the box edge"),
    ("evolve", "kind"): ("kind", str, "yukawa", "free, yukawa, semirel, nls or srh"),
    ("evolve", "dump"): ("dump", str, "norms", "norms (CSV) or fields (binary)"),
    ("evolve", "sample_every"): ("sample_every", int, 1, "stride of sampled steps"),
    ("decay", "n"): ("decay_n", int, 64, "decay: points per axis"),
    ("decay", "L"): ("decay_L", float, 64.0, "decay: box length (wide enough that t <= 16 does not wrap)"),
    ("decay", "width"): ("decay_width", float, 2.0, "decay: Gaussian width"),
    ("decay", "dt"): ("decay_dt", float, 0.02, "decay: Strang step"),
    ("output", "out"): ("out", str, "results", "output directory"),
}


class GuardError(RuntimeError):
    """A resource or validity guard refused the run."""


def _floats(text: str) -> tuple:
    vals = tuple(float(v) for v in text.replace(" ", "").split(",") if v)
    if not vals:
        raise ValueError("empty list")
    return vals


@dataclass
class ExperimentConfig:
    experiment: str = "kernel-check"
    seed: int = 0
    family: str = "nls"
    Q0: float = 0.5
    mu0: float = 1.0
    Q1: float = 1.25
    mu1: float = 2.0
    Q2: float = 1.0
    mu2: float = 1.0
    n: int = 48
    L: float = 40.0
    T: float = 4.0
    dt: float = 0.005
    t: float = 1.0
    lambdas: tuple = (2.0, 4.0, 8.0)
    nrl_lambdas: tuple = (4.0, 8.0, 16.0)
    eps: tuple = (0.2, 0.1, 0.05)
    alphas: tuple = (0.5, 1.0, 2.0)
    times: tuple = (4.0, 6.0, 8.0, 11.0, 16.0)
    width: float = 8.0
    coupling_width: float = 1.0
    depth: int = 8
    mode: str = "born"
    target: str = "born"
    extrapolation: str = "auto"
    ratio: Optional[float] = None
    tail_budget: float = 1e-8
    kind: str = "yukawa"
    dump: str = "norms"
    sample_every: int = 1
    decay_n: int = 64
    decay_L: float = 64.0
    decay_width: float = 2.0
    decay_dt: float = 0.02
    out: str = "results"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.family not in ("nls", "srh"):
            raise ValueError(f"unknown family {self.family!r}")
        for name in ("lambdas", "nrl_lambdas", "eps", "alphas", "times"):
            if not getattr(self, name):
                raise ValueError(f"sweep {name} is empty")
        self.model()

    def model(self) -> ModelParams:
        if self.family == "srh":
            return ModelParams.srh(self.Q2, self.mu2)
        return ModelParams.nls(self.Q0, self.mu0, self.Q1, self.mu1)

    def grid(self) -> Grid3:
        return Grid3(self.n, self.L)

    def scatter_config(self) -> ScatterConfig:
        return ScatterConfig(grid=self.grid(), T=self.T, dt=self.dt, tail_budget=self.tail_budget)

    def planted_ratio(self) -> float:
        return self.model().v1.ratio

    def items(self):
        """``(section, key, text)`` in table order, for headers and round trips."""
        for (section, key), (attr, kind, _, _) in KEYS.items():
            v = getattr(self, attr)
            if v is None:
                continue
            if isinstance(v, tuple):
                text = ",".join(repr(float(x)) for x in v)
            elif isinstance(v, float):
                text = repr(v)
            else:
                text = str(v)
            yield section, key, text

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        for section, key, text in self.items():
            if not cp.has_section(section):
                cp.add_section(section)
            cp.set(section, key, text)
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _parse_value(kind, text: str):
    if kind == "floats":
        return _floats(text)
    if kind == "optional":
        return None if text.strip().lower() in ("", "none") else float(text)
    return kind(text)


def load_config(source: str = "", overrides: Optional[dict] = None) -> ExperimentConfig:
    """Parse INI text (or a path to it).  Unknown sections or keys are errors."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    if source:
        if os.path.exists(source):
            with open(source) as fh:
                cp.read_file(fh, source)
        else:
            cp.read_string(source)
    kw = {}
    lookup = {(s.lower(), k.lower()): (s, k) for s, k in KEYS}
    for section in cp.sections():
        for key, text in cp.items(section):
            found = lookup.get((section.lower(), key.lower()))
            if found is None:
                raise ValueError(f"unknown config key [{section}] {key}")
            attr, kind, _, _ = KEYS[found]
            try:
                kw[attr] = _parse_value(kind, text)
            except ValueError as exc:
                raise ValueError(f"[{section}] {key} = {text!r}: {exc}") from None
    kw.update(overrides or {})
    return ExperimentConfig(**kw)


def keys_help() -> str:
    lines = ["config keys (INI sections):"]
    for (section, key), (_, _, default, text) in KEYS.items():
        d = ",".join(f"{v:g}" for v in default) if isinstance(default, tuple) else default
        lines.append(f"  [{section}] {key} (default {d}): {text}")
    return "\n".join(lines)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.16e" % float(v)
    return str(v)


def write_csv(path: str, cfg: Optional[ExperimentConfig], columns, rows) -> str:
    """Comment header with the resolved config, one header row, then data rows."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# yukawa_scattering {__version__}\n")
        if cfg is not None:
            for section, key, text in cfg.items():
                fh.write(f"# {section}.{key} = {text}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


@dataclass
class ExperimentOutcome:
    status: int
    files: list
    rows: list
    result_line: Optional[str] = None
    messages: list = field(default_factory=list)


def _result_line(q, mu, ratio) -> str:
    def f(v):
        return "nan" if v is None or not math.isfinite(v) else "%.10g" % v
    return f"RESULT Q={f(q)} MU={f(mu)} RATIO={f(ratio)}"


def _kernel_check(cfg):
    rows = [list(r) for r in kernel_check_table()]
    return ["name", "closed_form", "numeric", "rel_err"], rows, None, 0


def _self_test(cfg):
    """Fast gates on small grids; status 3 if any fails."""
    rng = np.random.default_rng(cfg.seed)
    gates = []

    def gate(name, value, tol):
        gates.append([name, float(value), float(tol), bool(value < tol)])

    worst = max(r[3] for r in kernel_check_table())
    gate("kernel_constants_rel_err", worst, 1e-8)

    g16 = Grid3(16, 20.0)
    z = rng.standard_normal(g16.shape) + 1j * rng.standard_normal(g16.shape)
    f = ComplexField(g16, z)
    back = fft_inverse(fft_forward(f))
    gate("fft_roundtrip", norm(back - f) / norm(f), 1e-12)
    fh = fft_forward(f)
    gate("parseval", abs(inner(fh, fh).real - inner(f, f).real) / inner(f, f).real, 1e-12)

    kernel = YukawaParams(1.0, 0.3)
    k = 2.0 * np.pi / g16.box_length
    x, y, zz = g16.coords()
    coef = rng.standard_normal(6)
    smooth = (coef[0] * np.cos(k * x) + coef[1] * np.sin(k * y) + coef[2] * np.cos(k * zz)
              + coef[3] * np.sin(k * (x + y)) + coef[4] + coef[5] * np.cos(k * (y - zz)))
    sf = ComplexField(g16, smooth.astype(complex))
    brute = brute_convolution(sf, kernel, singular="lattice", images=2)
    spectral = ComplexField(g16, np.fft.ifftn(np.fft.fftn(smooth) * yukawa_symbol(kernel, g16.xi2)))
    gate("brute_convolution", norm(brute - spectral) / norm(spectral), 1e-3)

    g = Grid3(64, 32.0)
    phi = dilate(Gaussian(1.0), 1.0, g)
    free = evolve_linear(HamiltonianSpec.free(), phi, 1.0).final
    x, y, zz = g.coords()
    exact = ComplexField(g, gaussian_free_closed_form(1.0, 1.0, x, y, zz))
    gate("free_gaussian_closed_form", norm(free - exact) / norm(exact), 1e-8)

    g24 = Grid3(24, 20.0)
    phi = dilate(Gaussian(1.0), 1.0, g24)
    spec = HamiltonianSpec.yukawa(YukawaParams(0.5, 1.0))
    res = evolve_linear(spec, phi, 1000 * 0.005, 0.005)
    gate("mass_drift_1000_steps", res.diagnostics["mass_drift"], 1e-12)
    strang = evolve_linear(spec, phi, 1.0, 0.005).final
    cn = implicit_stepper(spec, phi, 1.0, 0.005 / 8)
    gate("strang_vs_implicit", norm(strang - cn) / norm(cn), 1e-5)

    pts = [(h, 1.0 + h * h) for h in (0.2, 0.1, 0.05)]
    gate("extrapolation_synthetic", abs(extrapolate(pts, PARAM_SQUARED).estimate - 1.0), 1e-10)
    pts = [(l, 2.0 + l**-3.5) for l in (2.0, 4.0, 8.0)]
    gate("extrapolation_order", abs(extrapolate(pts, INVERSE_PARAM).order - 3.5), 0.2)

    def psi(a):
        return math.atan(a) + a
    misses = 0
    for target in rng.uniform(0.0, 20.0, 100):
        d = digit_extract(psi, psi(target), J=8)
        misses += not (0.0 <= target - d.value < 2.0**-8)
    gate("digit_extraction_misses", misses, 0.5)

    status = 0 if all(r[3] for r in gates) else 3
    return ["gate", "value", "tolerance", "pass"], gates, None, status


def _evolve(cfg):
    model = cfg.model()
    g = cfg.grid()
    phi = dilate(Gaussian(cfg.coupling_width, normalized=True), 1.0, g)
    sample = ("l2", "l4", "l6", "linf") if cfg.dump == "norms" else ()
    kw = dict(sample=sample, sample_every=cfg.sample_every)
    if cfg.kind == "nls":
        res = evolve_nls(model, phi, 0.0, cfg.t, cfg.dt, **kw)
    elif cfg.kind == "srh":
        res = evolve_srh(ModelParams.srh(cfg.Q2, cfg.mu2), phi, 0.0, cfg.t, cfg.dt, **kw)
    else:
        spec = {"free": HamiltonianSpec.free(),
                "yukawa": HamiltonianSpec.yukawa(YukawaParams(cfg.Q0, cfg.mu0)),
                "semirel": HamiltonianSpec.semirel()}.get(cfg.kind)
        if spec is None:
            raise ValueError(f"unknown kind {cfg.kind!r}")
        res = evolve_linear(spec, phi, cfg.t, cfg.dt, **kw)
    if cfg.dump == "fields":
        path = os.path.join(cfg.out, "evolve_final.field")
        os.makedirs(cfg.out, exist_ok=True)
        save_field(path, res.final)
        rows = [[k, v] for k, v in sorted(res.diagnostics.items())]
        return ["key", "value"], rows, None, 0, [path]
    if cfg.dump != "norms":
        raise ValueError(f"unknown dump {cfg.dump!r}")
    rows = [[t] + [res.samples[s][i] for s in sample] for i, t in enumerate(res.times)]
    return ["t"] + list(sample), rows, None, 0


def _scatter(cfg):
    model = cfg.model()
    rows = []
    for lam in cfg.lambdas:
        sc = cfg.scatter_config().scaled(lam) if lam != 1.0 else cfg.scatter_config()
        phi = dilate(Gaussian(cfg.width, normalized=True), lam, sc.grid) * lam**-1.5
        for e in cfg.eps:
            p, res = amplitude_pairing(model, sc, phi, e)
            rows.append([lam, e, p.real, p.imag, res.defect, res.horizon_sensitivity])
    return ["lambda", "eps", "pairing_re", "pairing_im", "defect", "horizon_sensitivity"], rows, None, 0


def _report_rows(rep, truth_ratio=None):
    rows = [["summary", "ratio", rep.ratio], ["summary", "coupling", rep.coupling],
            ["summary", "coupling_width", rep.coupling_width],
            ["summary", "screening", rep.screening if rep.screening is not None else float("nan")],
            ["summary", "screening_width", rep.screening_width]]
    for k in sorted(rep.diagnostics):
        v = rep.diagnostics[k]
        if isinstance(v, (int, float, np.floating)) and not isinstance(v, bool):
            rows.append(["diagnostics", k, float(v)])
    for row in rep.diagnostics.get("ratio_table", []):
        rows.append(["ratio_table", "lambda=%g" % row["lam"], row["ratio"]])
    if rep.digits is not None:
        rows.append(["digits", "m0", rep.digits.m0])
        for j, q in enumerate(rep.digits.digits, 1):
            rows.append(["digits", f"q{j}", q])
        rows.append(["digits", "trusted_depth", rep.digits.trusted_depth])
        for a, v in rep.digits.psi_evaluations:
            rows.append(["psi", "%.16e" % a, v])
    return rows


def _recon_ratio(cfg):
    model = cfg.model()
    est = recon_ratio(model, cfg.scatter_config(), Gaussian(cfg.width, normalized=True),
                      cfg.lambdas, mode=cfg.mode, extrapolation=cfg.extrapolation, eps=cfg.eps)
    rows = [["ratio_table", "lambda=%g" % r["lam"], r["ratio"]] for r in est.table]
    ex = est.extrapolation
    rows += [["summary", "ratio", est.value], ["summary", "width", est.width],
             ["summary", "order", ex.order if ex.order is not None else float("nan")],
             ["summary", "flags", "|".join(ex.flags) or "none"],
             ["summary", "denominator", est.denominator],
             ["summary", "planted_ratio", cfg.planted_ratio()]]
    return ["section", "key", "value"], rows, _result_line(None, None, est.value), 0


def _recon_digits(cfg):
    model = cfg.model()
    if model.family != "nls":
        raise ValueError("recon-digits needs family = nls; use recon-srh")
    ratio = cfg.planted_ratio() if cfg.ratio is None else cfg.ratio
    eps = cfg.eps if cfg.target == "epsilon" else ()
    rep = recon_q1(model, cfg.scatter_config(), Gaussian(cfg.coupling_width, normalized=True),
                   ratio, eps=eps, J=cfg.depth, target=cfg.target, alphas=cfg.alphas)
    return (["section", "key", "value"], _report_rows(rep),
            _result_line(rep.coupling, rep.screening, rep.ratio), 0)


def _recon_srh(cfg):
    model = cfg.model()
    if model.family != "srh":
        raise ValueError("recon-srh needs family = srh")
    eps = cfg.eps if cfg.target == "epsilon" else ()
    rep = recon_srh(model, cfg.scatter_config(), Gaussian(cfg.width, normalized=True),
                    cfg.lambdas, eps=eps, J=cfg.depth, target=cfg.target, mode=cfg.mode,
                    extrapolation=cfg.extrapolation,
                    coupling_phi=Gaussian(cfg.coupling_width, normalized=True),
                    alphas=cfg.alphas)
    return (["section", "key", "value"], _report_rows(rep),
            _result_line(rep.coupling, rep.screening, rep.ratio), 0)


def _recon_full(cfg):
    model = cfg.model()
    eps = cfg.eps if cfg.target == "epsilon" else ()
    rep = recon_full(model, cfg.scatter_config(), Gaussian(cfg.width, normalized=True),
                     cfg.lambdas, eps=eps, J=cfg.depth, target=cfg.target, mode=cfg.mode,
                     extrapolation=cfg.extrapolation,
                     coupling_phi=Gaussian(cfg.coupling_width, normalized=True),
                     alphas=cfg.alphas)
    return (["section", "key", "value"], _report_rows(rep),
            _result_line(rep.coupling, rep.screening, rep.ratio), 0)


def _nrl(cfg):
    phi = dilate(Gaussian(cfg.coupling_width, normalized=True), 1.0, cfg.grid())
    lams = list(cfg.nrl_lambdas)
    vals = [nrl_defect(phi, lam, cfg.T, max(cfg.dt, 0.05)) for lam in lams]
    slope = float(np.polyfit(np.log(lams), np.log(vals), 1)[0])
    rows = [["defect", "lambda=%g" % l, v] for l, v in zip(lams, vals)]
    rows.append(["summary", "slope", slope])
    rows.append(["summary", "decreasing", int(all(b < a for a, b in zip(vals, vals[1:])))])
    return ["section", "key", "value"], rows, None, 0


def _decay(cfg):
    g = Grid3(cfg.decay_n, cfg.decay_L)
    phi = dilate(Gaussian(cfg.decay_width), 1.0, g)
    spec = HamiltonianSpec.yukawa(YukawaParams(cfg.Q0, cfg.mu0))
    r = decay_rates(spec, phi, cfg.times, cfg.decay_dt)
    rows = [[t, a, b] for t, a, b in zip(r["times"], r["linf"], r["l6"])]
    rows.append(["slope", r["slope_linf"], r["slope_l6"]])
    return ["t", "linf", "l6"], rows, None, 0


_RUNNERS: dict[str, Callable] = {
    "kernel-check": _kernel_check,
    "self-test": _self_test,
    "evolve": _evolve,
    "scatter": _scatter,
    "recon-ratio": _recon_ratio,
    "recon-digits": _recon_digits,
    "recon-srh": _recon_srh,
    "nrl": _nrl,
    "decay": _decay,
    "recon-full": _recon_full,
}

_GUARDS = (BoundaryError, SmallnessError, CapExceededError, NonMonotoneError, ConvergenceError,
           BlowUpError, GuardError)


def run_experiment(cfg: ExperimentConfig) -> ExperimentOutcome:
    """Run one experiment and write its CSV.  Guard violations return status 2."""
    try:
        out = _RUNNERS[cfg.experiment](cfg)
    except _GUARDS as exc:
        return ExperimentOutcome(2, [], [], None, [f"{type(exc).__name__}: {exc}"])
    columns, rows, result, status = out[:4]
    files = list(out[4]) if len(out) > 4 else []
    path = os.path.join(cfg.out, f"{cfg.experiment}.csv")
    files.insert(0, write_csv(path, cfg, columns, rows))
    return ExperimentOutcome(status, files, rows, result)
