"""Command-line entry point: ``floquet-ionization <command> RUN.json --out DIR``.

A run file holds the problem (inline or by path), command options and a seed::

    {"problem": {...} | "problem_file": "nonp.json", "options": {...}, "seed": 0}

Every command writes its artifacts atomically into the output directory together
with ``manifest.json`` and exits 0 when its internal checks pass, 2 on configuration
errors, 3 on numerical errors and 4 when a check fails.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import platform
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .errors import ConfigError, FloquetError

log = logging.getLogger("floquet_ionization")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4

_COMPLEX = {
    "oneOf": [
        {"type": "number"},
        {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
    ]
}

OPTION_SCHEMAS = {
    "kernels": {
        "n_min": {"type": "integer"},
        "n_max": {"type": "integer"},
        "sigma": _COMPLEX,
        "check_n": {"type": "integer", "minimum": 0},
    },
    "solve": {"sigma": _COMPLEX},
    "scan": {
        "samples": {"type": "integer", "minimum": 3},
        "imag": {"type": "number"},
        "double_check": {"type": "boolean"},
    },
    "poles": {
        "guesses": {"type": "array", "items": _COMPLEX, "minItems": 1},
        "radius": {"type": "number", "exclusiveMinimum": 0},
    },
    "ionize": {"sigma": _COMPLEX, "r": {"type": "number", "exclusiveMinimum": 0}, "tol": {"type": "number"}},
    "fzeros": {
        "beta": {"type": "number", "exclusiveMinimum": 0},
        "N_min": {"type": "integer", "minimum": 1},
        "N_max": {"type": "integer", "minimum": 1},
    },
    "simulate": {
        "T": {"type": "number", "exclusiveMinimum": 0},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "length": {"type": "number", "exclusiveMinimum": 0},
        "h": {"type": "number", "exclusiveMinimum": 0},
        "absorber_strength": {"type": "number", "minimum": 0},
        "probe_x": {"type": "array", "items": {"type": "number"}},
        "ps": {"type": "array", "items": _COMPLEX},
        "norm_tol": {"type": "number", "exclusiveMinimum": 0},
    },
    "asymptotics": {
        "poles": {"type": "array", "items": _COMPLEX},
        "x": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "times": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "t_min": {"type": "number", "exclusiveMinimum": 0},
        "n_cheb": {"type": "integer", "minimum": 4},
        "scan_samples": {"type": "integer", "minimum": 3},
    },
}

NEEDS_PROBLEM = {"kernels", "solve", "scan", "poles", "ionize", "simulate", "asymptotics"}


def run_schema(command):
    return {
        "type": "object",
        "properties": {
            "problem": {"type": "object"},
            "problem_file": {"type": "string"},
            "options": {"type": "object", "properties": OPTION_SCHEMAS[command], "additionalProperties": False},
            "seed": {"type": "integer", "minimum": 0},
        },
        "additionalProperties": False,
    }


def _cx(v):
    return complex(v[0], v[1]) if isinstance(v, list) else complex(v)


def _fmt(v):
    return "%.17g" % v


def load_run(command, path):
    """Read and validate a run file; returns (run dict, problem dict or None)."""
    path = Path(path)
    try:
        run = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read run file {path}: {exc}") from exc
    try:
        jsonschema.validate(run, run_schema(command))
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid run file: {exc.message}") from exc
    problem = run.get("problem")
    if "problem_file" in run:
        if problem is not None:
            raise ConfigError("give either 'problem' or 'problem_file', not both")
        pf = (path.parent / run["problem_file"]).resolve()
        try:
            problem = json.loads(pf.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read problem file {pf}: {exc}") from exc
    if command in NEEDS_PROBLEM and problem is None:
        raise ConfigError(f"'{command}' needs a problem")
    return run, problem


class Output:
    """Collects artifacts in memory and writes them atomically at the end."""

    def __init__(self, directory):
        self.dir = Path(directory)
        self.files = {}

    def text(self, name, content):
        self.files[name] = content

    def csv(self, name, header, rows):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([_fmt(v) if isinstance(v, float) else v for v in row])
        self.files[name] = buf.getvalue()

    def json(self, name, obj):
        self.files[name] = json.dumps(obj, indent=2, sort_keys=True) + "\n"

    def commit(self):
        self.dir.mkdir(parents=True, exist_ok=True)
        for name, content in self.files.items():
            atomic_write(self.dir / name, content)


def atomic_write(path, content):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _problem(cfg):
    from .floquet_system import problem_from_config

    return problem_from_config(cfg)


def _point(sigma, omega):
    from .greens import SpectralPoint

    return SpectralPoint.from_sigma(sigma, omega)


# ---------------------------------------------------------------------------
# commands; each returns a dict of named checks (True = pass)
# ---------------------------------------------------------------------------


def _kernel_row(args):
    from .greens import g_norm_estimate

    domain, n, s, reg = args
    g = g_norm_estimate(domain, n, s, reg if n == 0 else None)
    return n, g, math.sqrt(1 + abs(n)) * g


def cmd_kernels(problem, opts, out, workers=1, seed=0):
    prob = _problem(problem)
    pot = prob.pot
    s = _point(_cx(opts.get("sigma", 0.5 * pot.omega)), pot.omega)
    ns = list(range(opts.get("n_min", -200), opts.get("n_max", 200) + 1))
    jobs = [(pot.domain, n, s, prob.regularization) for n in ns]
    if workers > 1 and jobs:
        with ProcessPoolExecutor(workers) as ex:
            rows = list(ex.map(_kernel_row, jobs))
    else:
        rows = [_kernel_row(j) for j in jobs]
    out.csv("kernels.csv", ["n", "g_norm", "sqrt(1+|n|)*g_norm"], rows)
    ref_n = opts.get("check_n", 20)
    ref = [r[2] for r in rows if abs(r[0]) == ref_n]
    checks = {}
    if ref:
        bound = 2 * max(ref)
        checks["agmon_bound"] = all(r[2] <= bound for r in rows if abs(r[0]) >= ref_n)
    return checks


def cmd_solve(problem, opts, out, workers=1, seed=0):
    from .floquet_system import assemble_C, build_source, reconstruct_psi_hat
    from .fredholm_solver import Factorized, solve_factorized

    prob = _problem(problem)
    pot = prob.pot
    s = _point(_cx(opts.get("sigma", 0.5 * pot.omega - 0.1j * pot.omega)), pot.omega)
    C = assemble_C(pot, s, prob.N_modes, prob.regularization)
    src = build_source(pot, prob.require_compact_psi0(), C)
    fac = Factorized(C)
    y = solve_factorized(fac, src.w)
    psi = reconstruct_psi_hat(y, src, C)
    x = pot.domain.d_nodes
    rows = [(int(n), float(x[j]), float(psi[i, j].real), float(psi[i, j].imag)) for i, n in enumerate(C.modes) for j in range(x.size)]
    out.csv("psi_hat.csv", ["n", "x", "re", "im"], rows)
    smin = fac.smallest_singular(seed=seed)[0]
    out.json("solve.json", {"sigma": [s.sigma.real, s.sigma.imag], "N_modes": prob.N_modes, "smallest_singular_value": smin})
    return {"finite": bool(np.all(np.isfinite(psi)))}


def cmd_scan(problem, opts, out, workers=1, seed=0):
    from .fredholm_solver import real_axis_path, resolvent_scan

    prob = _problem(problem)
    pot = prob.pot
    path = real_axis_path(pot.omega, opts.get("samples", 200), opts.get("imag", 0.0))
    scan = resolvent_scan(pot, path, prob.N_modes, prob.regularization)
    buf = Path(tempfile.mkdtemp()) / "scan.csv"
    scan.to_csv(buf)
    out.text("scan.csv", buf.read_text())
    checks = {"no_flags": not scan.flags}
    summary = {"N_modes": prob.N_modes, "flags": len(scan.flags), "min_smin": float(scan.smin.min()), "threshold": scan.threshold}
    if opts.get("double_check", False):
        scan2 = resolvent_scan(pot, path, 2 * prob.N_modes, prob.regularization)
        scan2.to_csv(buf)
        out.text("scan_2N.csv", buf.read_text())
        checks["no_flags_2N"] = not scan2.flags
        summary["flags_2N"] = len(scan2.flags)
    out.json("scan_summary.json", summary)
    return checks


def cmd_poles(problem, opts, out, workers=1, seed=0):
    from .fredholm_solver import locate_pole

    prob = _problem(problem)
    pot = prob.pot
    guesses = opts.get("guesses")
    if not guesses:
        raise ConfigError("'poles' needs options.guesses")
    records = []
    for g in guesses:
        rec = locate_pole(pot, _cx(g), prob.N_modes, prob.regularization, prob.psi0, opts.get("radius"), seed=seed + 1)
        records.append(json.loads(rec.to_json()))
    out.json("poles.json", {"poles": records})
    return {"simple": all(0.85 <= -r["simplicity_fit"] <= 1.15 for r in records)}


def cmd_ionize(problem, opts, out, workers=1, seed=0):
    from .floquet_system import assemble_C
    from .fredholm_solver import near_null_vector
    from .ionization_analysis import ionization_report

    prob = _problem(problem)
    pot = prob.pot
    if "sigma" not in opts:
        raise ConfigError("'ionize' needs options.sigma (a located pole)")
    C = assemble_C(pot, _point(_cx(opts["sigma"]), pot.omega), prob.N_modes, prob.regularization)
    smin, v = near_null_vector(C)
    rep = json.loads(ionization_report(C, v, opts.get("r")))
    rep["smallest_singular_value"] = smin
    out.json("ionization.json", rep)
    return {"flux_balance": rep["flux_balance_residual"] <= opts.get("tol", 1e-6)}


def _zeta_row(args):
    from .example_nonp import zeta_table

    N, beta = args
    return zeta_table([N], beta)[0]


def cmd_fzeros(problem, opts, out, workers=1, seed=0):
    from .example_nonp import zeta_table

    beta = opts.get("beta", 1.0)
    Ns = list(range(opts.get("N_min", 4), opts.get("N_max", 8) + 1))
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            rows = list(ex.map(_zeta_row, [(N, beta) for N in Ns]))
    else:
        rows = zeta_table(Ns, beta)
    out.csv("zeta.csv", ["N", "re_zeta", "im_zeta", "abs_F", "winding", "ratio_next"], [tuple(r) for r in rows])
    ratios = [r[5] for r in rows]
    return {
        "winding_one": all(r[4] == 1 for r in rows),
        "ratios_decreasing": all(b < a for a, b in zip(ratios, ratios[1:])),
    }


def cmd_simulate(problem, opts, out, workers=1, seed=0):
    from .tdse_oracle import GridConfig, grid_bound_state, propagate

    prob = _problem(problem)
    pot = prob.pot
    grid = GridConfig(
        length=opts.get("length", 60.0),
        h=opts.get("h", 0.05),
        absorber_strength=opts.get("absorber_strength", 1.0),
        dimension=pot.dimension,
    )
    init = None
    if prob.psi0_kind == "bound_state":
        if pot.dimension != 1:
            raise ConfigError("bound_state psi0 is available in d=1 only")
        init, _ = grid_bound_state(pot, grid, prob.level)
    ps = [_cx(p) for p in opts.get("ps", [])]
    tr = propagate(pot, prob.psi0, opts.get("T", 10.0), opts.get("dt"), grid, probe_x=tuple(opts.get("probe_x", [0.0])), ps=ps, psi_init=init)
    buf = Path(tempfile.mkdtemp()) / "t.csv"
    tr.to_csv(buf)
    out.text("trajectory.csv", buf.read_text())
    growth = float(np.max(np.diff(np.concatenate([[tr.norm0], tr.norm]))))
    drift = float(abs(tr.norm[-1] - tr.norm0))
    rep = {
        "T": tr.T,
        "dt": tr.dt,
        "final_norm": float(tr.norm[-1]),
        "max_norm_increase": growth,
        "norm_drift": drift,
        "laplace": [{"p": [p.real, p.imag], "values": [[v.real, v.imag] for v in tr.laplace[i]]} for i, p in enumerate(tr.ps)],
    }
    out.json("simulate.json", rep)
    tol = opts.get("norm_tol", 1e-8)
    checks = {"norm_nonincreasing": growth <= tol}
    if grid.absorber_strength == 0:
        checks["norm_conserved"] = drift <= tol
    return checks


def cmd_asymptotics(problem, opts, out, workers=1, seed=0):
    from .time_asymptotics import build_model, transseries_eval

    prob = _problem(problem)
    pot = prob.pot
    poles = [_cx(p) for p in opts["poles"]] if "poles" in opts else None
    model = build_model(
        pot,
        prob.require_compact_psi0(),
        opts.get("x", [0.0]),
        prob.N_modes,
        poles=poles,
        t_min=opts.get("t_min"),
        n_cheb=opts.get("n_cheb", 48),
        regularize_a=prob.regularization,
        scan_samples=opts.get("scan_samples", 200),
    )
    out.text("model.json", model.to_json() + "\n")
    times = opts.get("times", [model.t_min, 2 * model.t_min, 5 * model.t_min, 10 * model.t_min])
    rows = []
    for t in times:
        v = np.atleast_1d(transseries_eval(model, t))
        for x, val in zip(model.x, v):
            rows.append((float(t), float(x), float(val.real), float(val.imag)))
    out.csv("transseries.csv", ["t", "x", "re_psi", "im_psi"], rows)
    return {"decaying_poles": all(p.gamma.real > 0 for p in model.poles)}


COMMANDS = {
    "kernels": cmd_kernels,
    "solve": cmd_solve,
    "scan": cmd_scan,
    "poles": cmd_poles,
    "ionize": cmd_ionize,
    "fzeros": cmd_fzeros,
    "simulate": cmd_simulate,
    "asymptotics": cmd_asymptotics,
}


def _versions():
    import numba
    import scipy

    return {
        "artifact": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def run_command(command, run_path, out_dir, workers=1):
    """Execute one command; returns the exit code."""
    start = time.perf_counter()
    out = Output(out_dir)
    manifest = {"command": command, "run_file": str(run_path), "versions": _versions()}
    try:
        run, problem = load_run(command, run_path)
        canon = json.dumps({"run": run, "problem": problem}, sort_keys=True).encode()
        manifest["config_sha256"] = hashlib.sha256(canon).hexdigest()
        seed = run.get("seed", 0)
        manifest["seed"] = seed
        checks = COMMANDS[command](problem, run.get("options", {}), out, workers=workers, seed=seed)
        manifest["checks"] = checks
        code = EXIT_OK if all(checks.values()) else EXIT_CHECK
    except FloquetError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        manifest["error"] = {"type": type(exc).__name__, "message": str(exc)}
        code = exc.exit_code
    manifest["exit_code"] = code
    manifest["wall_time_s"] = time.perf_counter() - start
    manifest["outputs"] = sorted(out.files)
    out.json("manifest.json", manifest)
    out.commit()
    return code


def build_parser():
    ap = argparse.ArgumentParser(prog="floquet-ionization", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("run", help="run configuration (JSON)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--workers", type=int, default=1, help="worker processes (kernels, fzeros)")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return run_command(args.command, args.run, args.out, max(1, args.workers))


if __name__ == "__main__":
    sys.exit(main())
