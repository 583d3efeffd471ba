"""Batch front-end: scenario files in, CSV/JSON artifacts out.

    adlab run <scenario.json> [--out DIR] [--grid N] [--quiet]
    adlab sweep <scenario.json> --param NAME --values v1,v2,... [--out DIR]

Exit codes: 0 success, 1 parse/I-O error (nothing written), 2 physics-contract
violation (``summary.json`` still written, error names in ``errors``).
"""

import argparse
import json
import logging
import os
import re
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import conditions, evolve, models, perturb, spectral
from .errors import AdlabError, GridTooCoarse, ScenarioError
from .grid import uniform_grid
from .io import fmt, write_csv, write_json

log = logging.getLogger("adlab")

ANALYSES = (
    "propagate",
    "amplitudes",
    "fidelity",
    "perturbation",
    "conditions",
    "dual_check",
    "t_dependence",
    "rl_probe",
)
SWEEP_PARAMS = ("T", "omega0", "grid_points", "theta_exponent")
TOLERANCE_KEYS = {
    "threshold": conditions.DEFAULT_THRESHOLD,
    "denom_floor": None,
    "q_threshold": 0.05,
    "rl_ladder": [0.25, 0.5, 1.0, 2.0, 4.0],
}
MAX_DUAL_DEPTH = 2
_NEEDS_STATE = {"propagate", "amplitudes", "fidelity", "dual_check"}


# ---------------------------------------------------------------- scenario

@dataclass(frozen=True)
class Scenario:
    name: str
    model: tuple  # ("rotating_spin",) | ("chirped_spin",) | ("grid_file", path) | ("dual_of", inner)
    T: float
    omega0: float = 1.0
    theta_exponent: float = 2.0
    grid_points: int = 4097
    initial_eigenstate: int = 1
    analyses: tuple = ANALYSES
    tolerances: dict = field(default_factory=dict)
    substeps: int = 1
    out_dir: str = None

    @property
    def depth(self):
        d, m = 0, self.model
        while m[0] == "dual_of":
            d, m = d + 1, m[1]
        return d

    @property
    def leaf(self):
        m = self.model
        while m[0] == "dual_of":
            m = m[1]
        return m

    def tol(self, key):
        return self.tolerances.get(key, TOLERANCE_KEYS[key])


def parse_number(value, what="value"):
    """Float from a number or a string such as ``"200pi"``, ``"2*pi"``, ``"0.5"``."""
    if isinstance(value, bool):
        raise ScenarioError(f"{what}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        text = value.strip().replace(" ", "")
        m = re.fullmatch(r"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)?\*?(pi|π)?", text)
        if text and m and (m.group(1) or m.group(2)):
            x = float(m.group(1)) if m.group(1) else 1.0
            return x * np.pi if m.group(2) else x
    raise ScenarioError(f"{what}: cannot read {value!r} as a number")


def _parse_model(spec, base_dir, depth=0):
    if depth > MAX_DUAL_DEPTH:
        raise ScenarioError(f"dual_of nesting deeper than {MAX_DUAL_DEPTH}")
    if isinstance(spec, str):
        m = re.fullmatch(r"\s*dual_of\((.*)\)\s*", spec)
        if m:
            return ("dual_of", _parse_model(m.group(1), base_dir, depth + 1))
        m = re.fullmatch(r"\s*grid_file\((.*)\)\s*", spec)
        if m:
            return _parse_model({"grid_file": m.group(1).strip()}, base_dir, depth)
        if spec.strip() in ("rotating_spin", "chirped_spin"):
            return (spec.strip(),)
        raise ScenarioError(f"unknown model {spec!r}")
    if isinstance(spec, dict) and len(spec) == 1:
        (key, val), = spec.items()
        if key == "dual_of":
            return ("dual_of", _parse_model(val, base_dir, depth + 1))
        if key == "grid_file" and isinstance(val, str):
            path = Path(val)
            if not path.is_absolute():
                path = Path(base_dir) / path
            return ("grid_file", str(path.resolve()))
    raise ScenarioError(f"unknown model {spec!r}")


def _load_grid_file(path):
    try:
        return models.GridHamiltonian.load(path)
    except OSError as exc:
        raise ScenarioError(f"cannot read grid file {path}: {exc.strerror or exc}") from exc
    except (ValueError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"bad grid file {path}: {exc}") from exc
    except AdlabError as exc:
        raise ScenarioError(f"bad grid file {path}: {type(exc).__name__}: {exc}") from exc


def scenario_from_dict(data, base_dir=".", name="scenario"):
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    known = {"model", "params", "grid_points", "initial_eigenstate", "analyses",
             "tolerances", "out_dir", "substeps", "name"}
    extra = sorted(set(data) - known)
    if extra:
        raise ScenarioError(f"unknown scenario fields: {', '.join(extra)}")
    if "model" not in data:
        raise ScenarioError("scenario needs a model")
    model = _parse_model(data["model"], base_dir)

    params = data.get("params", {})
    if not isinstance(params, dict):
        raise ScenarioError("params must be an object")
    bad = sorted(set(params) - {"omega0", "T", "omega", "theta_exponent"})
    if bad:
        raise ScenarioError(f"unknown params: {', '.join(bad)}")
    leaf = model
    while leaf[0] == "dual_of":
        leaf = leaf[1]
    grid_H = _load_grid_file(leaf[1]) if leaf[0] == "grid_file" else None

    if "T" in params and "omega" in params:
        raise ScenarioError("give exactly one of T or omega")
    if "T" in params:
        T = parse_number(params["T"], "T")
    elif "omega" in params:
        omega = parse_number(params["omega"], "omega")
        if omega <= 0:
            raise ScenarioError("omega must be positive")
        T = 2 * np.pi / omega
    elif grid_H is not None:
        T = float(grid_H.T)
    else:
        raise ScenarioError("give exactly one of T or omega")
    if not T > 0:
        raise ScenarioError("T must be positive")
    if grid_H is not None and abs(T - grid_H.T) > 1e-12 * max(T, 1.0):
        raise ScenarioError(f"T={T:g} disagrees with the grid file's T={grid_H.T:g}")
    omega0 = parse_number(params.get("omega0", 1.0), "omega0")
    if not omega0 > 0:
        raise ScenarioError("omega0 must be positive")
    theta_exponent = parse_number(params.get("theta_exponent", 2.0), "theta_exponent")

    if grid_H is not None:
        points = grid_H.grid.size
        if "grid_points" in data and data["grid_points"] != points:
            raise ScenarioError("grid_points disagrees with the grid file")
        dim = grid_H.dim
    else:
        points = data.get("grid_points", 4097)
        dim = 2
    if isinstance(points, bool) or not isinstance(points, int) or points < 3:
        raise ScenarioError("grid_points must be an integer >= 3")

    n0 = data.get("initial_eigenstate", 1)
    if isinstance(n0, bool) or not isinstance(n0, int) or not 1 <= n0 <= dim:
        raise ScenarioError(f"initial_eigenstate must be an integer in 1..{dim}")

    analyses = data.get("analyses", list(ANALYSES))
    if analyses == "all":
        analyses = list(ANALYSES)
    if not isinstance(analyses, list) or not all(isinstance(a, str) for a in analyses):
        raise ScenarioError("analyses must be a list of names")
    unknown = sorted(set(analyses) - set(ANALYSES))
    if unknown:
        raise ScenarioError(f"unknown analyses: {', '.join(unknown)}")
    analyses = tuple(a for a in ANALYSES if a in analyses)

    tol = data.get("tolerances", {})
    if not isinstance(tol, dict):
        raise ScenarioError("tolerances must be an object")
    bad = sorted(set(tol) - set(TOLERANCE_KEYS))
    if bad:
        raise ScenarioError(f"unknown tolerances: {', '.join(bad)}")
    tol = dict(tol)
    for key in ("threshold", "denom_floor", "q_threshold"):
        if key in tol and tol[key] is not None:
            tol[key] = parse_number(tol[key], key)
    if "rl_ladder" in tol:
        if not isinstance(tol["rl_ladder"], list) or len(tol["rl_ladder"]) < 2:
            raise ScenarioError("rl_ladder needs at least two multipliers")
        tol["rl_ladder"] = [parse_number(v, "rl_ladder") for v in tol["rl_ladder"]]

    substeps = data.get("substeps", 1)
    if isinstance(substeps, bool) or not isinstance(substeps, int) or substeps < 1:
        raise ScenarioError("substeps must be a positive integer")
    out_dir = data.get("out_dir")
    if out_dir is not None:
        if not isinstance(out_dir, str):
            raise ScenarioError("out_dir must be a string")
        if not Path(out_dir).is_absolute():
            out_dir = str(Path(base_dir) / out_dir)
    return Scenario(
        name=str(data.get("name", name)),
        model=model,
        T=T,
        omega0=omega0,
        theta_exponent=theta_exponent,
        grid_points=points,
        initial_eigenstate=n0,
        analyses=analyses,
        tolerances=tol,
        substeps=substeps,
        out_dir=out_dir,
    )


def bundled_scenarios():
    root = resources.files("adlab") / "scenarios"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".json"))


def resolve_scenario_path(path):
    """The given path, or a bundled scenario of that name if no such file exists."""
    p = Path(path)
    if p.exists():
        return p
    root = resources.files("adlab") / "scenarios"
    if not p.parent.parts:
        for name in (p.name, p.name + ".json"):
            cand = root / name
            if cand.is_file():
                return Path(str(cand))
    return p


def load_scenario(path):
    path = resolve_scenario_path(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: malformed JSON ({exc})") from exc
    return scenario_from_dict(data, base_dir=str(Path(path).parent), name=Path(path).stem)


# ---------------------------------------------------------------- model chain

def model_label(model):
    if model[0] == "dual_of":
        return f"dual_of({model_label(model[1])})"
    if model[0] == "grid_file":
        return f"grid_file({Path(model[1]).name})"
    return model[0]


def base_hamiltonian(sc):
    kind = sc.leaf
    if kind[0] == "rotating_spin":
        return models.rotating_spin(models.RotatingSpinParams(sc.omega0, sc.T))
    if kind[0] == "chirped_spin":
        return models.chirped_spin(sc.omega0, sc.theta_exponent)
    return _load_grid_file(kind[1])


def build_chain(sc, T=None, with_state=True):
    """Hamiltonians from the base up to the requested dual depth, with propagators.

    Returns ``(levels, traces, grid)``; ``traces[i]`` is None when level i's
    propagator was not needed.
    """
    T = sc.T if T is None else T
    base = base_hamiltonian(sc)
    grid = base.grid if isinstance(base, models.GridHamiltonian) else uniform_grid(sc.grid_points)
    levels, traces = [base], [None]
    if sc.depth or with_state:
        traces[0] = evolve.propagator(base, T, grid, substeps=sc.substeps)
    for _ in range(sc.depth):
        H = models.build_dual(levels[-1], T, grid, traces[-1])
        levels.append(H)
        traces.append(H.propagator)
    return levels, traces, grid


# ---------------------------------------------------------------- analyses

def _c(z):
    return {"re": float(np.real(z)), "im": float(np.imag(z))}


class _Run:
    def __init__(self, sc, out):
        self.sc = sc
        self.out = Path(out)
        self.n0 = sc.initial_eigenstate - 1
        self.errors = []
        self.warnings = []
        self.results = {}
        self.scalars = {}
        self.files = []
        self.levels = self.traces = self.grid = None
        self.paths = {}

    def csv(self, name, header, cols):
        write_csv(self.out / name, header, cols)
        self.files.append(name)

    def path(self, level):
        if level not in self.paths:
            self.paths[level] = spectral.parallel_path(self.levels[level], self.sc.T, self.grid)
        return self.paths[level]

    @property
    def top(self):
        return len(self.levels) - 1

    def fail(self, stage, exc):
        self.errors.append({"analysis": stage, "error": type(exc).__name__, "message": str(exc)})
        log.warning("%s: %s: %s", stage, type(exc).__name__, exc)

    # -- individual analyses

    def propagate(self):
        tr = self.traces[self.top]
        psi0 = self.path(self.top).vectors[0][:, self.n0]
        st = evolve.evolve_state(tr, psi0)
        n = st.psi.shape[1]
        eye = np.eye(tr.U.shape[-1])
        per_point = np.max(np.abs(np.swapaxes(tr.U.conj(), 1, 2) @ tr.U - eye), axis=(1, 2))
        header = ["s"]
        cols = [st.grid]
        for i in range(n):
            header += [f"psi_re_{i + 1}", f"psi_im_{i + 1}"]
            cols += [st.psi[:, i].real, st.psi[:, i].imag]
        header.append("unitarity_error")
        cols.append(per_point)
        self.csv("state.csv", header, cols)
        self.state = st
        return {"unitarity_drift": tr.unitarity_error(), "norm_drift": st.norm_error(),
                "substeps": self.sc.substeps}

    def _state(self):
        if not hasattr(self, "state"):
            psi0 = self.path(self.top).vectors[0][:, self.n0]
            self.state = evolve.evolve_state(self.traces[self.top], psi0)
        return self.state

    def _trace_csv(self):
        if "trace.csv" in self.files:
            return
        path = self.path(self.top)
        amps = evolve.amplitudes(self._state(), path)
        fid = evolve.fidelity_trace(self._state(), path, self.n0)
        evolve.trace_to_csv(self.out / "trace.csv", amps, fid)
        self.files.append("trace.csv")
        self.amps, self.fid = amps, fid

    def amplitudes(self):
        self._trace_csv()
        total = self.amps.total_probability()
        return {
            "probability_drift": float(np.max(np.abs(total - 1.0))),
            "final_abs_phi": [float(x) for x in np.abs(self.amps.phi[-1])],
        }

    def fidelity(self):
        self._trace_csv()
        j = int(np.argmin(self.fid))
        self.scalars["fidelity_min"] = float(self.fid[j])
        self.scalars["fidelity_min_s"] = float(self.grid[j])
        return {"level": self.n0 + 1, "min": float(self.fid[j]), "min_s": float(self.grid[j]),
                "final": float(self.fid[-1])}

    def perturbation(self):
        sc, n = self.sc, self.n0
        path = self.path(self.top)
        sol = perturb.first_order(path, sc.T, n)
        out = {"channels": {}}
        parent = self.path(self.top - 1) if self.top else None
        worst = 0.0
        for k in range(path.dim):
            if k == n:
                continue
            P, Q, phi = sol.channel(k)
            info = {
                "max_abs_P": float(np.max(np.abs(P))),
                "max_abs_Q": float(np.max(np.abs(Q))),
                "max_abs_Q_over_T": float(np.max(np.abs(Q)) / sc.T),
                "Q_over_T_end": _c(Q[-1] / sc.T),
                "phi_end": _c(phi[-1]),
            }
            worst = max(worst, info["max_abs_Q_over_T"])
            ratio = None
            if parent is not None:
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always")
                    qa = perturb.q_approx_dual(parent, sc.T, n, k, sc.tol("q_threshold"))
                for w in caught:
                    self.warnings.append({"analysis": "perturbation", "warning": w.category.__name__,
                                          "message": str(w.message)})
                live = self.grid >= 0.1
                rel = np.abs(np.abs(Q[live]) - np.abs(qa[live])) / np.maximum(np.abs(qa[live]), 1e-300)
                info["q_approx_end"] = _c(qa[-1])
                info["q_approx_max_rel_diff"] = float(np.max(rel)) if np.any(live) else float("nan")
                simple = perturb.simplified_b_first_order(parent, n)
                info["simplified_phi_end"] = _c(simple.phi[-1, k])
                try:
                    pq = perturb.pq_ratio(parent, sc.T, n, k)
                    ratio = pq.ratio
                    info["pq_ratio_min"] = float(np.min(pq.ratio[1:]))
                except AdlabError as exc:
                    self.fail("perturbation", exc)
            perturb.channel_to_csv(self.out / f"perturb_{n + 1}_{k + 1}.csv", sol, k, ratio)
            self.files.append(f"perturb_{n + 1}_{k + 1}.csv")
            out["channels"][f"{n + 1}_{k + 1}"] = info
        self.scalars["max_abs_Q_over_T"] = worst
        base_sol = sol if self.top == 0 else perturb.first_order(self.path(0), sc.T, n)
        self.scalars["max_abs_Q_a"] = float(np.max(np.abs(np.delete(base_sol.Q, n, axis=1))))
        return out

    def conditions(self):
        sc = self.sc
        thr, floor = sc.tol("threshold"), sc.tol("denom_floor")
        path = self.path(self.top)
        spectral.path_to_csv(path, self.out / "path.csv")
        self.files.append("path.csv")
        out = {"traditional": conditions.traditional_condition(path, thr).to_dict()}
        try:
            out["ye"] = conditions.ye_condition(path, sc.T, thr, floor).to_dict()
        except AdlabError as exc:
            self.fail("conditions", exc)
        if self.top:
            parent = self.path(self.top - 1)
            try:
                out["ye_dual_form"] = conditions.ye_condition_dual_form(parent, thr, floor).to_dict()
            except AdlabError as exc:
                self.fail("conditions", exc)
            base = self.path(0)
            out["base"] = {"traditional": conditions.traditional_condition(base, thr).to_dict()}
            try:
                out["base"]["ye"] = conditions.ye_condition(base, sc.T, thr, floor).to_dict()
            except AdlabError as exc:
                self.fail("conditions", exc)
        return out

    def dual_check(self):
        if not self.top:
            return {"skipped": "model is not a dual"}
        sc = self.sc
        Ha = models.sample(self.levels[self.top - 1], sc.T, self.grid)[0]
        Hb = self.levels[self.top].matrices
        Ea, Eb = np.linalg.eigvalsh(Ha), np.linalg.eigvalsh(Hb)
        spec_err = np.max(np.abs(Eb + Ea[:, ::-1]), axis=1)
        Ua, Ub = self.traces[self.top - 1].U, self.traces[self.top].U
        ident = np.max(np.abs(Ub @ Ua - np.eye(Ua.shape[-1])), axis=(1, 2))
        back = models.build_dual(self.levels[self.top], sc.T, self.grid, self.traces[self.top])
        invol = np.max(np.abs(back.matrices - Ha), axis=(1, 2))
        out = {
            "spectrum_error": float(np.max(spec_err)),
            "identity_error": float(np.max(ident)),
            "involution_error": float(np.max(invol)),
        }
        direct = np.full(self.grid.size, np.nan)
        try:
            Ud = evolve.propagator(self.levels[self.top], sc.T, self.grid, substeps=sc.substeps)
            direct = np.max(np.abs(Ud.U - Ub), axis=(1, 2))
            out["direct_error"] = float(np.max(direct))
        except AdlabError as exc:
            self.fail("dual_check", exc)
        self.csv("dual_check.csv", ["s", "spectrum_error", "identity_error", "involution_error",
                                    "direct_error"], [self.grid, spec_err, ident, invol, direct])
        return out

    def t_dependence(self):
        sc = self.sc
        T2 = 2 * sc.T
        s = np.linspace(0.0, 1.0, 64)
        top = self.levels[self.top]
        if isinstance(top, models.DrivenHamiltonian):
            probe = models.probe_T_dependence(top, s, [sc.T, T2])
        elif self.top:
            levels, _, _ = build_chain(sc, T=T2, with_state=False)
            probe = models.probe_T_dependence({sc.T: top, T2: levels[-1]}, s, [sc.T, T2])
        else:
            return {"skipped": "a grid file fixes a single T"}
        omega = 2 * np.pi / sc.T
        self.csv("t_dependence.csv", ["T1", "T2", "probe", "omega"], [[sc.T], [T2], [probe], [omega]])
        self.scalars["t_probe"] = probe
        return {"T": [sc.T, T2], "probe": probe, "omega": omega, "probe_over_omega": probe / omega}

    def rl_probe(self):
        sc = self.sc
        base = self.levels[0]
        if not isinstance(base, models.DrivenHamiltonian):
            return {"skipped": "a grid file fixes a single T"}
        path = self.path(0)
        ladder = []
        dropped = []
        for m in sc.tol("rl_ladder"):
            T = sc.T * m
            try:
                perturb.check_resolution(path, T)
                ladder.append(T)
            except AdlabError:
                dropped.append(T)
        if len(ladder) < 2:
            raise GridTooCoarse(f"fewer than two ladder values resolve on the grid (dropped {dropped})")
        out = {"T": sorted(ladder), "dropped_T": dropped, "channels": {}}
        header, cols = ["T"], [np.array(sorted(ladder))]
        for k in range(path.dim):
            if k == self.n0:
                continue
            table = conditions.rl_decay_probe(base, self.n0, k, ladder, grid=self.grid)
            key = f"{self.n0 + 1}_{k + 1}"
            out["channels"][key] = {"max_abs_Q": table.max_Q, "slope": table.slope,
                                    "decays": table.decays, "vanishes": table.vanishes}
            header.append(f"max_abs_Q_{key}")
            cols.append(table.max_Q)
        self.csv("rl_probe.csv", header, cols)
        return out


def _tau_scalar(path):
    # tau_21 on the base path (constant for the rotating spin)
    if path.dim < 2:
        return None
    t = path.tau[:, 1, 0]
    mid = t[t.size // 2]
    return {"re": float(mid.real), "im": float(mid.imag), "spread": float(np.max(np.abs(t - mid)))}


def run_scenario(sc, out_dir):
    """Run every requested analysis; returns ``(exit_code, summary)``.

    Physics errors are recorded and the remaining analyses still run; the
    summary is always written.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    r = _Run(sc, out)
    summary = {
        "scenario": {
            "name": sc.name,
            "model": model_label(sc.model),
            "dual_depth": sc.depth,
            "T": sc.T,
            "omega": 2 * np.pi / sc.T,
            "omega0": sc.omega0,
            "theta_exponent": sc.theta_exponent,
            "grid_points": sc.grid_points,
            "initial_eigenstate": sc.initial_eigenstate,
            "substeps": sc.substeps,
            "analyses": list(sc.analyses),
            "tolerances": {k: sc.tol(k) for k in sorted(TOLERANCE_KEYS)},
        }
    }
    try:
        with_state = bool(_NEEDS_STATE & set(sc.analyses))
        r.levels, r.traces, r.grid = build_chain(sc, with_state=with_state)
        r.path(r.top)
        r.scalars["tau_2_1"] = _tau_scalar(r.path(0))
    except AdlabError as exc:
        r.fail("setup", exc)
    if not r.errors:
        for name in sc.analyses:
            log.info("%s: %s", sc.name, name)
            try:
                r.results[name] = getattr(r, name)()
            except AdlabError as exc:
                r.fail(name, exc)
    if "conditions" in r.results:
        c = r.results["conditions"]
        for key in ("traditional", "ye", "ye_dual_form"):
            if key in c:
                r.scalars[f"{key}_margin"] = c[key]["margin"]
                r.scalars[f"{key}_verdict"] = c[key]["verdict"]
    summary.update({
        "analyses": r.results,
        "conditions": r.results.get("conditions", {}),
        "key_scalars": r.scalars,
        "errors": r.errors,
        "warnings": r.warnings,
        "files": sorted(r.files),
        "status": "failed" if r.errors else "ok",
    })
    write_json(out / "summary.json", summary)
    return (2 if r.errors else 0), summary


# ---------------------------------------------------------------- sweep

SWEEP_COLUMNS = ["value", "traditional_margin", "ye_margin", "min_fidelity", "maxQ_over_T",
                 "maxQ_a", "exit_code"]


def apply_param(sc, param, value):
    if param not in SWEEP_PARAMS:
        raise ScenarioError(f"cannot sweep {param!r}; choose from {', '.join(SWEEP_PARAMS)}")
    if param == "grid_points":
        if sc.leaf[0] == "grid_file":
            raise ScenarioError("grid file scenarios carry their own grid")
        if value != int(value) or value < 3:
            raise ScenarioError("grid_points values must be integers >= 3")
        return replace(sc, grid_points=int(value))
    if param == "T":
        if sc.leaf[0] == "grid_file":
            raise ScenarioError("grid file scenarios carry their own T")
        if not value > 0:
            raise ScenarioError("T must be positive")
        return replace(sc, T=float(value))
    if param == "omega0" and not value > 0:
        raise ScenarioError("omega0 must be positive")
    return replace(sc, **{param: float(value)})


def _sweep_worker(job):
    sc, out_dir = job
    try:
        code, summary = run_scenario(sc, out_dir)
    except ScenarioError as exc:
        return 1, {"errors": [{"analysis": "run", "error": type(exc).__name__, "message": str(exc)}]}
    except OSError as exc:
        return 1, {"errors": [{"analysis": "run", "error": type(exc).__name__, "message": str(exc)}]}
    return code, summary


def _threads(n_jobs):
    env = os.environ.get("ADLAB_THREADS")
    try:
        cap = int(env) if env else (os.cpu_count() or 1)
    except ValueError:
        raise ScenarioError(f"ADLAB_THREADS must be an integer, got {env!r}")
    return max(1, min(cap, n_jobs))


def _dir_token(text):
    return re.sub(r"[^A-Za-z0-9.+\-]", "_", text)


def sweep(sc, param, tokens, out_dir):
    """One isolated run per value; returns ``(exit_code, rows)``."""
    if not tokens:
        raise ScenarioError("empty values list")
    values = [parse_number(t, param) for t in tokens]
    jobs = []
    for tok, v in zip(tokens, values):
        sub = apply_param(sc, param, v)
        jobs.append((sub, str(Path(out_dir) / f"{param}={_dir_token(str(tok))}")))
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    workers = _threads(len(jobs))
    if workers == 1:
        results = [_sweep_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_worker, jobs))
    rows = []
    for v, (code, summary) in zip(values, results):
        ks = summary.get("key_scalars", {})
        rows.append([
            v,
            ks.get("traditional_margin", float("nan")),
            ks.get("ye_margin", float("nan")),
            ks.get("fidelity_min", float("nan")),
            ks.get("max_abs_Q_over_T", float("nan")),
            ks.get("max_abs_Q_a", float("nan")),
            code,
        ])
    write_csv(Path(out_dir) / "sweep.csv", SWEEP_COLUMNS, list(zip(*rows)))
    codes = [row[-1] for row in rows]
    worst = 0 if all(c == 0 for c in codes) else (1 if 1 in codes else 2)
    return worst, rows


# ---------------------------------------------------------------- entry point

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="adlab", description="Adiabatic-condition laboratory.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("scenario")
    r.add_argument("--out", help="output directory")
    r.add_argument("--grid", type=int, help="override grid_points")
    r.add_argument("--quiet", action="store_true")
    s = sub.add_parser("sweep", help="run a scenario over a list of parameter values")
    s.add_argument("scenario")
    s.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    s.add_argument("--values", required=True, help="comma-separated, e.g. 20pi,200pi,2000pi")
    s.add_argument("--out", help="output directory")
    s.add_argument("--quiet", action="store_true")
    sub.add_parser("list", help="list bundled scenarios")
    return p


def _out_dir(sc, flag):
    if flag:
        return flag
    return sc.out_dir or str(Path("out") / sc.name)


def main(argv=None):
    args = build_parser().parse_args(argv)
    quiet = getattr(args, "quiet", False)
    logging.basicConfig(level=logging.WARNING if quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.command == "list":
        for name in bundled_scenarios():
            print(name)
        return 0
    try:
        sc = load_scenario(args.scenario)
        if args.command == "run":
            if args.grid is not None:
                if sc.leaf[0] == "grid_file":
                    raise ScenarioError("--grid cannot override a grid file")
                if args.grid < 3:
                    raise ScenarioError("--grid must be >= 3")
                sc = replace(sc, grid_points=args.grid)
            out = _out_dir(sc, args.out)
            code, summary = run_scenario(sc, out)
            if not quiet:
                for key in ("traditional", "ye", "ye_dual_form"):
                    if key in summary["conditions"]:
                        c = summary["conditions"][key]
                        print(f"{key:>14}: margin {fmt(c['margin'])}  {c['verdict']}")
                for e in summary["errors"]:
                    print(f"error in {e['analysis']}: {e['error']}: {e['message']}")
                print(f"summary: {Path(out) / 'summary.json'}")
            return code
        tokens = [t.strip() for t in args.values.split(",") if t.strip()]
        out = _out_dir(sc, args.out)
        code, rows = sweep(sc, args.param, tokens, out)
        if not quiet:
            print(",".join(SWEEP_COLUMNS))
            for row in rows:
                print(",".join(fmt(x) for x in row))
            print(f"sweep: {Path(out) / 'sweep.csv'}")
        return code
    except ScenarioError as exc:
        print(f"adlab: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"adlab: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
