"""Batch experiment runner.

One JSON config describes one experiment::

    {
      "experiment": "simulate",
      "output_dir": "runs/sim",
      "params": {"ell": 1, "gamma": 0.5, "xi": {"num": 1, "den": 3}},
      "nonlinearity": {"family": "OneSidedSpring", "k": 1.0},
      "numerics": {"N": 16, "dt": 0.01, "T": 10},
      "initial": {"kind": "random", "seed": 0}
    }

Every run writes its reports plus ``manifest.json`` (file list with
sha256 hashes and a summary). Exit codes: 0 ok, 2 invalid config,
3 numerical failure, 4 IO.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from .errors import (BridgeLabError, ConfigError, IncommensurableXi, IrrationalXi, NumericalError,
                     ParameterError, ParseError, ValidationError)
from .model import ModalState, ModelParams, random_state, unit_mode, validate_params

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

EXPERIMENTS = ("simulate", "spectrum", "resolvent-sweep", "f-xi", "characteristics",
               "cross-validate", "decay", "decompose", "absorbing", "attractor")
ENSEMBLE_EXPERIMENTS = ("absorbing", "attractor")
NEEDS_INITIAL = ("simulate", "decay", "decompose", "characteristics")
INITIAL_KINDS = ("random", "mode", "smooth", "state")
PARAM_FIELDS = ("ell", "beta0", "alpha", "alpha0", "k", "gamma", "gamma0", "xi")


@dataclass
class ExperimentConfig:
    experiment: str
    params: ModelParams
    spec: Any                      # NonlinearitySpec
    numerics: dict
    initial: Optional[dict]
    output_dir: Path
    raw: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# validation helpers


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


class _Checker:
    def __init__(self):
        self.errors = []

    def add(self, path: str, message: str):
        self.errors.append({"path": path, "message": message})

    def number(self, obj: dict, key: str, path: str, required=True, default=None,
               positive=False, nonneg=False, integer=False):
        if key not in obj:
            if required:
                self.add(f"{path}.{key}", "required field is missing")
            return default
        val = obj[key]
        if not _is_number(val):
            self.add(f"{path}.{key}", f"expected a finite number, got {val!r}")
            return default
        if integer and int(val) != val:
            self.add(f"{path}.{key}", f"expected an integer, got {val!r}")
            return default
        if positive and not val > 0:
            self.add(f"{path}.{key}", f"must be positive, got {val!r}")
            return default
        if nonneg and val < 0:
            self.add(f"{path}.{key}", f"must be non-negative, got {val!r}")
            return default
        return int(val) if integer else float(val)


# numerics schema: name -> (required, kind, default); kind in {"int+", "float+", "float>=0", "list"}
_NUMERICS = {
    "simulate": {"N": (True, "int+", None), "dt": (True, "float+", None), "T": (True, "float>=0", None),
                 "stride": (False, "int+", 1), "snapshot_times": (False, "list", [])},
    "decay": {"N": (True, "int+", None), "dt": (True, "float+", None), "T": (True, "float+", None),
              "stride": (False, "int+", 1), "fit_window": (False, "list", None)},
    "spectrum": {"N": (True, "int+", None)},
    "resolvent-sweep": {"N": (True, "int+", None), "lam_max": (True, "float+", None),
                        "n_grid": (True, "int+", None), "lam_min": (False, "float>=0", 0.0),
                        "extra_points": (False, "list", [])},
    "f-xi": {"samples_per_period": (False, "int+", 100_000), "n_refine": (False, "int+", 10),
             "window": (False, "list", None)},
    "characteristics": {"M": (False, "int+", 300), "T": (True, "float>=0", None),
                        "N": (False, "int+", 64), "output_every": (False, "int+", 1)},
    "cross-validate": {"N": (False, "int+", 64), "M": (False, "int+", 300), "T": (False, "float+", 2.0),
                       "substeps": (False, "int+", 4)},
    "decompose": {"N": (True, "int+", None), "dt": (True, "float+", None), "T": (True, "float+", None)},
    "absorbing": {"N": (True, "int+", None), "dt": (True, "float+", None), "T": (True, "float+", None),
                  "R": (True, "float+", None), "ensemble_size": (True, "int+", None),
                  "seed": (True, "int>=0", None), "stride": (False, "int+", 10),
                  "margin": (False, "float>=0", 0.1)},
    "attractor": {"N": (True, "int+", None), "dt": (True, "float+", None), "T": (True, "float+", None),
                  "R": (True, "float+", None), "ensemble_size": (True, "int+", None),
                  "seed": (True, "int>=0", None), "t_star": (True, "float+", None),
                  "stride": (False, "int+", 10), "late_fraction": (False, "float+", 0.1),
                  "n_dims": (False, "int+", 4)},
}


def _check_numerics(chk: _Checker, tag: str, raw) -> dict:
    schema = _NUMERICS[tag]
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        chk.add("numerics", "expected an object")
        return {}
    for key in sorted(set(raw) - set(schema)):
        chk.add(f"numerics.{key}", f"unknown field for '{tag}'; allowed: {sorted(schema)}")
    out = {}
    for key, (required, kind, default) in schema.items():
        if kind == "list":
            val = raw.get(key, default)
            if val is not None and (not isinstance(val, list) or not all(_is_number(v) for v in val)):
                chk.add(f"numerics.{key}", "expected a list of numbers")
                val = default
            out[key] = val
            continue
        out[key] = chk.number(raw, key, "numerics", required=required, default=default,
                              integer=kind.startswith("int"), positive=kind.endswith("+"),
                              nonneg=kind.endswith(">=0"))
    if tag == "decay" and out.get("fit_window") is not None and len(out["fit_window"]) != 2:
        chk.add("numerics.fit_window", "expected [t_start, t_end]")
    if tag == "f-xi" and out.get("window") is not None and len(out["window"]) != 2:
        chk.add("numerics.window", "expected [lambda_lo, lambda_hi]")
    if tag in ENSEMBLE_EXPERIMENTS and out.get("ensemble_size") is not None and out["ensemble_size"] < 2:
        chk.add("numerics.ensemble_size", "an ensemble needs at least 2 members")
    return out


def _check_params(chk: _Checker, raw) -> Optional[ModelParams]:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        chk.add("params", "expected an object")
        return None
    n_before = len(chk.errors)
    for key in sorted(set(raw) - set(PARAM_FIELDS)):
        chk.add(f"params.{key}", f"unknown parameter; allowed: {list(PARAM_FIELDS)}")
    ell = chk.number(raw, "ell", "params", required=False, default=1.0, positive=True)
    chk.number(raw, "beta0", "params", required=False, positive=True)
    chk.number(raw, "alpha", "params", required=False, positive=True)
    for key in ("alpha0", "k", "gamma", "gamma0"):
        chk.number(raw, key, "params", required=False, nonneg=True)
    xi = raw.get("xi")
    if isinstance(xi, dict):
        num, den = xi.get("num"), xi.get("den")
        if not (isinstance(num, int) and isinstance(den, int) and not isinstance(num, bool) and den > 0):
            chk.add("params.xi", "rational xi needs integer 'num' and positive integer 'den'")
        elif not 0 < Fraction(num, den) < 1:
            chk.add("params.xi", f"xi/ell = {num}/{den} must lie strictly between 0 and 1")
    elif xi is not None:
        if not _is_number(xi):
            chk.add("params.xi", f"expected a number or {{num, den}}, got {xi!r}")
        elif ell is not None and not 0 < xi < ell:
            chk.add("params.xi", f"xi = {xi} must lie strictly inside (0, ell = {ell})")
    if len(chk.errors) > n_before:
        return None
    try:
        return validate_params(ModelParams.from_json(raw))
    except ParameterError as exc:
        chk.add("params", str(exc))
        return None


def _check_spec(chk: _Checker, raw, N: Optional[int]):
    from .nonlinearity import Family, NonlinearitySpec
    if raw is None:
        return NonlinearitySpec.zero()
    if not isinstance(raw, dict):
        chk.add("nonlinearity", "expected an object")
        return None
    fam = raw.get("family", "Zero")
    allowed = [f.value for f in Family]
    if fam not in allowed:
        chk.add("nonlinearity.family", f"unknown family {fam!r}; allowed: {allowed}")
        return None
    required = {"PowerSeparated": ("mu1", "alpha"), "GradientPotential": ("m", "n"),
                "OneSidedSpring": ("k",)}.get(fam, ())
    ok = True
    for key in required:
        if key not in raw:
            chk.add(f"nonlinearity.{key}", f"required for family {fam}")
            ok = False
    forcing = raw.get("forcing")
    if forcing is not None:
        if not isinstance(forcing, dict):
            chk.add("nonlinearity.forcing", "expected {cable: [...], deck: [...]}")
            ok = False
        else:
            for part in ("cable", "deck"):
                vals = forcing.get(part)
                if vals is None:
                    continue
                if not isinstance(vals, list) or not all(_is_number(v) for v in vals):
                    chk.add(f"nonlinearity.forcing.{part}", "expected a list of numbers")
                    ok = False
                elif N is not None and len(vals) != N:
                    chk.add(f"nonlinearity.forcing.{part}", f"expected {N} modal coefficients, got {len(vals)}")
                    ok = False
    if not ok:
        return None
    try:
        return NonlinearitySpec.from_json(raw)
    except (ValueError, TypeError, KeyError) as exc:
        chk.add("nonlinearity", str(exc))
        return None


def _check_initial(chk: _Checker, raw, tag: str) -> Optional[dict]:
    if raw is None:
        if tag in NEEDS_INITIAL:
            chk.add("initial", f"required for '{tag}'")
        return None
    if not isinstance(raw, dict):
        chk.add("initial", "expected an object")
        return None
    kind = raw.get("kind")
    if kind not in INITIAL_KINDS:
        chk.add("initial.kind", f"unknown kind {kind!r}; allowed: {list(INITIAL_KINDS)}")
        return None
    if kind == "random":
        chk.number(raw, "seed", "initial", integer=True, nonneg=True)
        chk.number(raw, "decay", "initial", required=False, nonneg=True)
        chk.number(raw, "scale", "initial", required=False, positive=True)
    elif kind == "mode":
        chk.number(raw, "j", "initial", integer=True, nonneg=True)
        chk.number(raw, "value", "initial", required=False)
        if raw.get("slot", "a") not in ("a", "adot", "b", "bdot"):
            chk.add("initial.slot", "expected one of a, adot, b, bdot")
    elif kind == "smooth":
        for key in ("mode_amp", "bump_amp"):
            chk.number(raw, key, "initial", required=False)
        for key in ("centre", "width"):
            chk.number(raw, key, "initial", required=False, positive=True)
    elif kind == "state":
        if not isinstance(raw.get("state"), dict):
            chk.add("initial.state", "expected {a, adot, b, bdot}")
    return raw


def validate_config(raw: Any, base_dir: Optional[Path] = None) -> ExperimentConfig:
    """Check a decoded config; raise :class:`ValidationError` listing every violation."""
    chk = _Checker()
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object", [{"path": "", "message": "expected an object"}])
    known = {"experiment", "params", "nonlinearity", "numerics", "initial", "output_dir"}
    for key in sorted(set(raw) - known):
        chk.add(key, f"unknown top-level field; allowed: {sorted(known)}")
    tag = raw.get("experiment")
    if tag not in EXPERIMENTS:
        chk.add("experiment", f"unknown experiment {tag!r}; allowed: {list(EXPERIMENTS)}")
        tag = None
    out_dir = raw.get("output_dir")
    if not isinstance(out_dir, str) or not out_dir:
        chk.add("output_dir", "required non-empty string")
    params = _check_params(chk, raw.get("params"))
    numerics = _check_numerics(chk, tag, raw.get("numerics")) if tag else {}
    spec = _check_spec(chk, raw.get("nonlinearity"), numerics.get("N"))
    initial = _check_initial(chk, raw.get("initial"), tag) if tag else None
    if tag in ENSEMBLE_EXPERIMENTS and "seed" not in (raw.get("numerics") or {}):
        pass  # already reported as missing by the numerics schema
    if tag == "absorbing" and spec is not None and not spec.has_forcing and spec.family.value == "Zero":
        chk.add("nonlinearity", "absorbing probe needs a non-zero nonlinearity or forcing")
    if tag in ("characteristics", "cross-validate") and params is not None:
        if params.k != 0:
            chk.add("params.k", "the characteristic solver needs the decoupled string (k = 0)")
        M = numerics.get("M")
        if M:
            pos = params.xi / params.ell * M
            if abs(pos - round(pos)) > 1e-9 * max(pos, 1.0):
                chk.add("numerics.M", f"xi must fall on a grid node: xi/ell * M = {pos:g} is not an integer")
    if tag in ("characteristics", "cross-validate") and spec is not None and (
            spec.family.value != "Zero" or spec.has_forcing):
        chk.add("nonlinearity", f"'{tag}' handles the linear string only")
    if tag == "f-xi" and params is not None and params.xi_ratio is None and numerics.get("window") is None:
        chk.add("numerics.window", "float xi has no exact period; give a search window")
    if initial is not None and initial.get("kind") == "mode" and _is_number(initial.get("j")):
        N = numerics.get("N")
        if N is not None and initial["j"] >= N:
            chk.add("initial.j", f"mode index must be < N = {N}")
    if chk.errors:
        raise ValidationError(f"{len(chk.errors)} configuration error(s)", chk.errors)
    path = Path(out_dir)
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    return ExperimentConfig(experiment=tag, params=params, spec=spec, numerics=numerics,
                            initial=initial, output_dir=path, raw=copy.deepcopy(raw))


def load_json(path) -> Any:
    try:
        text = Path(path).read_text()
    except OSError:
        raise
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON", [{"path": "", "message": f"line {exc.lineno}: {exc.msg}"}])


def parse_config(path) -> ExperimentConfig:
    """Read and validate a config file. Relative output dirs resolve against the CWD."""
    return validate_config(load_json(path))


# ---------------------------------------------------------------------------
# experiments


def thread_cap() -> Optional[int]:
    raw = os.environ.get("BRIDGELAB_THREADS")
    if raw is None or raw == "":
        return None
    try:
        val = int(raw)
    except ValueError:
        raise ValidationError("BRIDGELAB_THREADS must be a positive integer",
                              [{"path": "env.BRIDGELAB_THREADS", "message": f"got {raw!r}"}]) from None
    if val < 1:
        raise ValidationError("BRIDGELAB_THREADS must be a positive integer",
                              [{"path": "env.BRIDGELAB_THREADS", "message": f"got {raw!r}"}])
    return val


def build_initial(initial: dict, N: int, params: ModelParams) -> ModalState:
    kind = initial["kind"]
    if kind == "random":
        from .model import energy_norm
        state = random_state(N, np.random.default_rng(int(initial["seed"])), float(initial.get("decay", 2.0)))
        if "scale" in initial:
            state = state * (float(initial["scale"]) / energy_norm(state, params))
        return state
    if kind == "mode":
        return unit_mode(N, int(initial["j"]), initial.get("slot", "a"), float(initial.get("value", 1.0)))
    if kind == "smooth":
        from .crossval import smooth_profile
        kw = {key: float(initial[key]) for key in ("mode_amp", "bump_amp", "centre", "width") if key in initial}
        zero = np.zeros(N)
        return ModalState(a=smooth_profile(N, params.ell, **kw), adot=zero, b=zero, bdot=zero)
    state = ModalState.from_json(initial["state"])
    if state.N != N:
        raise ValidationError("initial state size mismatch",
                              [{"path": "initial.state", "message": f"expected {N} modes, got {state.N}"}])
    return state


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _finite(x):
    """JSON-safe float (``None`` for inf/nan)."""
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _csv_rows(header_comment: str, columns: list, rows) -> str:
    lines = [f"# {header_comment}", ",".join(columns)]
    for row in rows:
        lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def _run_simulate(cfg: ExperimentConfig, threads) -> tuple:
    from .galerkin import assemble
    from .timestepper import dissipation_residual, midpoint_stiffness, simulate
    nm = cfg.numerics
    U0 = build_initial(cfg.initial, nm["N"], cfg.params)
    rec = simulate(cfg.params, cfg.spec, U0, nm["T"], nm["dt"], nm["stride"])
    files = {"energy.csv": rec.to_csv()}
    if nm["snapshot_times"]:
        files["snapshots.json"] = _json_text(rec.snapshots_json(nm["snapshot_times"]))
    E = rec.energy_total
    resid = None
    if nm["stride"] == 1 and E.size > 1 and E[0] > 0:
        resid = dissipation_residual(rec)
    summary = {"E0": float(E[0]), "E_final": float(E[-1]), "dissipation_residual": resid,
               "scheme": rec.scheme, "steps": int(round(nm["T"] / nm["dt"])),
               "stiffness": midpoint_stiffness(assemble(cfg.params, nm["N"]), nm["dt"])}
    files["summary.json"] = _json_text({"schema": "bridgelab.simulate/1", **summary})
    return files, summary


def _run_decay(cfg: ExperimentConfig, threads) -> tuple:
    from .galerkin import assemble
    from .timestepper import dissipation_residual, fit_decay_rate, midpoint_stiffness, simulate
    nm = cfg.numerics
    U0 = build_initial(cfg.initial, nm["N"], cfg.params)
    rec = simulate(cfg.params, cfg.spec, U0, nm["T"], nm["dt"], nm["stride"])
    window = tuple(nm["fit_window"]) if nm["fit_window"] else None
    fit = fit_decay_rate(rec, window)
    E = rec.energy_total
    summary = {"rate": fit.rate, "intercept": fit.intercept, "window": list(fit.window),
               "fit_residual": fit.residual,
               "dissipation_residual": dissipation_residual(rec) if nm["stride"] == 1 else None,
               "max_energy_increase": float(max(np.max(np.diff(E)), 0.0)) if E.size > 1 else 0.0,
               "stiffness": midpoint_stiffness(assemble(cfg.params, nm["N"]), nm["dt"])}
    return {"energy.csv": rec.to_csv(),
            "decay.json": _json_text({"schema": "bridgelab.decay/1", **summary})}, summary


def _run_spectrum(cfg: ExperimentConfig, threads) -> tuple:
    from .galerkin import assemble
    from .model import classify_damping_point
    from .spectral import eigenvalues
    rep = eigenvalues(assemble(cfg.params, cfg.numerics["N"]))
    body = rep.to_json()
    body["classification"] = classify_damping_point(cfg.params.ratio).to_json()
    summary = {"classification": body["classification"],
               "spectral_abscissa": rep.spectral_abscissa, "axis_gap": rep.axis_gap,
               "undamped_witnesses": list(rep.undamped_witnesses)}
    return {"spectrum.json": _json_text(body)}, summary


def _run_resolvent(cfg: ExperimentConfig, threads) -> tuple:
    from .galerkin import assemble
    from .spectral import pruss_sweep
    nm = cfg.numerics
    sweep = pruss_sweep(assemble(cfg.params, nm["N"]), nm["lam_max"], nm["n_grid"], nm["lam_min"],
                        threads=threads, extra_points=nm["extra_points"])
    summary = {"sup": _finite(sweep.sup), "finite": sweep.finite,
               "singular_lambdas": [float(l) for l, v in zip(sweep.lambdas, sweep.norms) if not np.isfinite(v)]}
    return {"resolvent.csv": sweep.to_csv(), "resolvent.json": _json_text(sweep.to_json())}, summary


def _run_fxi(cfg: ExperimentConfig, threads) -> tuple:
    from .spectral import F_xi, F_xi_inf
    nm = cfg.numerics
    res = F_xi_inf(cfg.params, nm["samples_per_period"], nm["n_refine"],
                   tuple(nm["window"]) if nm["window"] else None)
    summary = {"minimum": res.minimum, "argmin": res.argmin, "window": list(res.window),
               "exhaustive": res.exhaustive, "samples": res.samples, "F_at_zero": F_xi(0.0, cfg.params)}
    return {"f_xi.json": _json_text({"schema": "bridgelab.f_xi/1", **summary})}, summary


def _run_characteristics(cfg: ExperimentConfig, threads) -> tuple:
    from .characteristics import run_characteristics
    from .model import basis
    nm = cfg.numerics
    M, ell = nm["M"], cfg.params.ell
    U0 = build_initial(cfg.initial, nm["N"], cfg.params)
    dx = ell / M
    nodes = np.arange(M + 1) * dx
    mids = (np.arange(M) + 0.5) * dx
    v0 = basis(nodes, U0.N, ell) @ U0.a
    v1 = basis(mids, U0.N, ell) @ U0.adot
    traj = run_characteristics(v0, v1, cfg.params, nm["T"], M=M, output_every=nm["output_every"])
    summary = {"energy_identity_residual": traj.energy_identity_residual(),
               "E0": float(traj.energy[0]), "E_final": float(traj.energy[-1]),
               "steps": int(traj.energy.size - 1), "dt": traj.dt}
    return {"snapshots.csv": traj.snapshots_csv(), "energy.csv": traj.energy_csv(),
            "characteristics.json": _json_text({"schema": "bridgelab.characteristics/1", **summary})}, summary


def _run_crossval(cfg: ExperimentConfig, threads) -> tuple:
    from .crossval import cross_validate
    nm = cfg.numerics
    coeffs = None
    if cfg.initial is not None:
        coeffs = build_initial(cfg.initial, nm["N"], cfg.params).a
    res = cross_validate(cfg.params, T=nm["T"], N=nm["N"], M=nm["M"], substeps=nm["substeps"], coeffs=coeffs)
    body = res.to_json()
    summary = {k: body[k] for k in ("sup_error_v", "sup_error_vt", "sup_error")}
    return {"cross_validate.json": _json_text(body), "discrepancy.csv": res.to_csv()}, summary


def _run_decompose(cfg: ExperimentConfig, threads) -> tuple:
    from .dynamics import decompose, regularity_audit
    nm = cfg.numerics
    U0 = build_initial(cfg.initial, nm["N"], cfg.params)
    rec = decompose(cfg.params, cfg.spec, U0, nm["T"], nm["dt"])
    audit = regularity_audit(rec)
    summary = {"additivity_error": rec.additivity_error, "V0_norm": float(np.max(np.abs(rec.V[0]))),
               **{k: _finite(v) if not isinstance(v, bool) else v for k, v in audit.to_json().items()}}
    csv_text = _csv_rows("t: time; norm_W, norm_AV, norm_Vt: energy norms of W, A_N V, dV/dt",
                         ["t", "norm_W", "norm_AV", "norm_Vt"],
                         zip(rec.times, rec.norm_W, rec.norm_AV, rec.norm_Vt))
    return {"decomposition.csv": csv_text,
            "regularity.json": _json_text({"schema": "bridgelab.decomposition/1", **summary})}, summary


def _run_absorbing(cfg: ExperimentConfig, threads) -> tuple:
    from .dynamics import absorbing_probe
    nm = cfg.numerics
    rep = absorbing_probe(cfg.params, cfg.spec, nm["R"], nm["ensemble_size"], nm["T"], nm["dt"], nm["N"],
                          seed=nm["seed"], stride=nm["stride"], margin=nm["margin"], threads=threads)
    body = rep.to_json()
    summary = {k: body[k] for k in ("c1", "mu", "c2", "fit_residual", "ball_radius", "failed")}
    cols = ["t"] + [f"member_{i}" for i in range(rep.norms.shape[0])]
    csv_text = _csv_rows("t: time; member_i: energy norm of ensemble member i", cols,
                         np.column_stack([rep.times, rep.norms.T]))
    return {"absorbing.json": _json_text(body), "norms.csv": csv_text}, summary


def _run_attractor(cfg: ExperimentConfig, threads) -> tuple:
    from .dynamics import attractor_probe, sample_ball
    nm = cfg.numerics
    ensemble = sample_ball(nm["N"], nm["R"], nm["ensemble_size"], nm["seed"], params=cfg.params)
    rep = attractor_probe(cfg.params, cfg.spec, ensemble, nm["T"], nm["dt"], nm["t_star"], stride=nm["stride"],
                          late_fraction=nm["late_fraction"], n_dims=nm["n_dims"], threads=threads)
    body = rep.to_json()
    summary = {"final_max_distance": body["final_max_distance"],
               "final_max_distance_m1": body["final_max_distance_m1"],
               "box_dimension": body["box_counting"]["dimension"]}
    return {"attractor.json": _json_text(body), "distances.csv": rep.distances_csv()}, summary


RUNNERS: dict = {
    "simulate": _run_simulate, "decay": _run_decay, "spectrum": _run_spectrum,
    "resolvent-sweep": _run_resolvent, "f-xi": _run_fxi, "characteristics": _run_characteristics,
    "cross-validate": _run_crossval, "decompose": _run_decompose, "absorbing": _run_absorbing,
    "attractor": _run_attractor,
}


# ---------------------------------------------------------------------------
# output


def _claim_dir(path: Path) -> None:
    """Create ``path``; refuse to reuse a non-empty directory."""
    if path.exists():
        if not path.is_dir():
            raise FileExistsError(f"{path} exists and is not a directory")
        if any(path.iterdir()):
            raise FileExistsError(f"output directory {path} is not empty; choose a fresh one")
    path.mkdir(parents=True, exist_ok=True)


def emit_reports(files: dict, out_dir: Path, summary: Optional[dict] = None,
                 experiment: Optional[str] = None, config: Optional[dict] = None) -> list:
    """Write ``files`` (name -> text) and a manifest; returns the manifest entries."""
    out_dir = Path(out_dir)
    _claim_dir(out_dir)
    entries = []
    for name in sorted(files):
        data = files[name].encode()
        (out_dir / name).write_bytes(data)
        entries.append({"path": name, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)})
    manifest = {"schema": "bridgelab.manifest/1", "experiment": experiment, "files": entries,
                "summary": summary or {}, "config": config}
    (out_dir / "manifest.json").write_text(_json_text(manifest))
    return entries


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run one validated config and write its outputs; returns the manifest summary."""
    threads = thread_cap()
    files, summary = RUNNERS[cfg.experiment](cfg, threads)
    summary = json.loads(json.dumps(summary, default=_json_default, allow_nan=True))
    summary = _scrub(summary)
    emit_reports(files, cfg.output_dir, summary, cfg.experiment, cfg.raw)
    return summary


def _scrub(obj):
    if isinstance(obj, dict):
        return {k: _scrub(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_scrub(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


# ---------------------------------------------------------------------------
# sweeps


def _parse_value(text: str, param: str):
    if param == "xi" and "/" in text:
        num, den = text.split("/", 1)
        try:
            return {"num": int(num), "den": int(den)}
        except ValueError:
            pass
    try:
        val = json.loads(text)
    except json.JSONDecodeError:
        return text
    return val


def _set_path(raw: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    if len(parts) == 1:
        parts = ["params"] + parts if parts[0] in PARAM_FIELDS else ["numerics"] + parts
    node = raw
    for key in parts[:-1]:
        if not isinstance(node.get(key), dict):
            node[key] = {}
        node = node[key]
    node[parts[-1]] = value


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() or c in "-._" else "_" for c in text)


def run_sweep(raw: dict, param: str, values: list) -> list:
    """Run one experiment per value into ``output_dir/<param>=<value>``."""
    base = copy.deepcopy(raw)
    configs = []
    errors = []
    for text in values:
        cfg_raw = copy.deepcopy(base)
        _set_path(cfg_raw, param, _parse_value(text, param))
        if isinstance(base.get("output_dir"), str):
            cfg_raw["output_dir"] = str(Path(base["output_dir"]) / _slug(f"{param}={text}"))
        try:
            configs.append((text, validate_config(cfg_raw)))
        except ValidationError as exc:
            errors.extend({"path": f"[{param}={text}].{e['path']}", "message": e["message"]} for e in exc.errors)
    if errors:
        raise ValidationError(f"{len(errors)} configuration error(s) in sweep", errors)
    root = Path(base["output_dir"])
    _claim_dir(root)
    results = []
    for text, cfg in configs:
        summary = run_experiment(cfg)
        manifest = (cfg.output_dir / "manifest.json").read_bytes()
        results.append({"value": text, "output_dir": cfg.output_dir.name, "summary": summary,
                        "manifest_sha256": hashlib.sha256(manifest).hexdigest()})
    sweep = {"schema": "bridgelab.sweep/1", "param": param, "runs": results}
    (root / "sweep.json").write_text(_json_text(sweep))
    return results


# ---------------------------------------------------------------------------
# entry point


def _error_payload(exc: BaseException, code: int) -> dict:
    out = {"schema": "bridgelab.error/1", "error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, ConfigError):
        out["errors"] = exc.errors
    for attr in ("shift", "sigma_min", "contraction"):
        if getattr(exc, attr, None) is not None:
            val = getattr(exc, attr)
            out[attr] = [val.real, val.imag] if isinstance(val, complex) else float(val)
    return out


def classify_exit(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, ParameterError, IncommensurableXi, IrrationalXi)):
        return EXIT_VALIDATION
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, (ValueError, BridgeLabError)):
        return EXIT_VALIDATION
    raise exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bridgelab", description="Batch runner for bridge-model experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--output-dir", help="override output_dir from the config")
    # config comes first: --values takes every following word
    p_sweep = sub.add_parser("sweep", help="run a config once per parameter value")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--param", required=True,
                         help="parameter name (e.g. xi, gamma) or dotted path (numerics.N)")
    p_sweep.add_argument("--values", nargs="+", required=True, help="values; xi accepts p/q")
    p_sweep.add_argument("--output-dir", help="override output_dir from the config")
    p_val = sub.add_parser("validate", help="check a config without running it")
    p_val.add_argument("config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = load_json(args.config)
        if getattr(args, "output_dir", None) and isinstance(raw, dict):
            raw["output_dir"] = args.output_dir
        if args.command == "validate":
            cfg = validate_config(raw)
            print(_json_text({"schema": "bridgelab.validation/1", "valid": True,
                              "experiment": cfg.experiment}), end="")
        elif args.command == "run":
            cfg = validate_config(raw)
            summary = run_experiment(cfg)
            print(_json_text({"schema": "bridgelab.result/1", "experiment": cfg.experiment,
                              "output_dir": str(cfg.output_dir), "summary": summary}), end="")
        else:
            if not isinstance(raw, dict):
                validate_config(raw)
            results = run_sweep(raw, args.param, args.values)
            print(_json_text({"schema": "bridgelab.sweep_result/1", "param": args.param,
                              "runs": results}), end="")
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes
        code = classify_exit(exc)
        sys.stderr.write(_json_text(_error_payload(exc, code)))
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
