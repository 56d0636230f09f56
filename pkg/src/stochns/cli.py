"""Configuration-driven experiment runner.

Usage::

    stochns <subcommand> --config run.yaml [--out DIR] [--seed S] [--replicas R]

The YAML file is validated in full before anything is computed; unknown keys
are rejected.  Results are written only after the experiment finished, so a
failed run leaves no partial output.  Exit codes: 0 success, 2 configuration
error, 3 divergence, 4 statistics refused, 5 a built-in check failed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import platform
import sys
import time
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import scipy
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import __version__
from . import coupling, ergodic, noise, nonlin, sde
from . import spectral as sp
from .errors import (ConfigurationError, DivergenceError, DomainError, StatisticsRefused,
                     UnsupportedModelError)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_STATISTICS = 4
EXIT_CHECK = 5

SUBCOMMANDS = ("simulate", "stokes", "couple", "ergodic", "activation", "validate-noise", "oracle")


# ---------------------------------------------------------------------------
# schema


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class FieldSpec(_Strict):
    """A vorticity field: zero, random, explicit modes or a snapshot file.

    ``modes`` entries are ``[k1, k2, re, im]``; the conjugate coefficient at
    ``-k`` is added automatically.
    """

    kind: Literal["zero", "random", "modes", "file"] = "zero"
    amplitude: float = 1.0
    slope: float = 1.0
    seed: int = 0
    dealiased: bool = True
    modes: list[tuple[int, int, float, float]] = Field(default_factory=list)
    path: Optional[str] = None


class NoiseSpec(_Strict):
    kind: Literal["none", "additive_diagonal", "additive_degenerate",
                  "multiplicative_low_mode"] = "additive_diagonal"
    a: float = 0.45
    sigma0: float = 1.0
    z0: list[tuple[int, int]] = Field(default_factory=list)
    q: float = 1.0
    M: int = 24


class SimSpec(_Strict):
    K: int = 16
    nu: float = 1.0
    dt: float = 0.01
    horizon: float = 10.0
    record_every: int = 1
    record_modes: list[tuple[int, int]] = Field(default_factory=list)
    advection: bool = True
    snapshot_every: int = 0
    initial: FieldSpec = Field(default_factory=FieldSpec)
    forcing: FieldSpec = Field(default_factory=FieldSpec)


class CouplingSpec(_Strict):
    N: list[int] = Field(default_factory=lambda: [24])
    replicas: int = 32
    horizon: int = 50
    nudge: Literal["explicit", "implicit"] = "explicit"
    partner: FieldSpec = Field(default_factory=lambda: FieldSpec(kind="random", seed=1))
    record_every: Optional[int] = None

    @field_validator("N", mode="before")
    @classmethod
    def _listify(cls, v):
        return [v] if isinstance(v, int) else v


class ErgodicSpec(_Strict):
    observables: list[str] = Field(default_factory=lambda: ["energy"])
    windows: list[float] = Field(default_factory=list)
    burn_in: Optional[float] = None
    bins: int = 32
    replicas: int = 16
    second_start: Optional[FieldSpec] = None


class ActivationSpec(_Strict):
    T: Optional[float] = None
    burn_in: Optional[float] = None
    replicas: int = 8
    lam_max: Optional[int] = None


class ValidateSpec(_Strict):
    samples: int = 100
    seed: int = 0


class OracleSpec(_Strict):
    K: int = 4
    pairs: int = 50
    tolerance: float = 1e-12


class RunConfig(_Strict):
    experiment: Optional[Literal["simulate", "stokes", "couple", "ergodic", "activation",
                                 "validate-noise", "oracle"]] = None
    seed: int = 0
    out: Optional[str] = None
    replicas: Optional[int] = None
    sim: SimSpec = Field(default_factory=SimSpec)
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    coupling: CouplingSpec = Field(default_factory=CouplingSpec)
    ergodic: ErgodicSpec = Field(default_factory=ErgodicSpec)
    activation: ActivationSpec = Field(default_factory=ActivationSpec)
    validate_noise: ValidateSpec = Field(default_factory=ValidateSpec, alias="validate-noise")
    oracle: OracleSpec = Field(default_factory=OracleSpec)


def load_config(path):
    text = Path(path).read_text()
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ConfigurationError("configuration must be a mapping")
    return RunConfig.model_validate(data), text


# ---------------------------------------------------------------------------
# building library objects


def build_field(grid, spec, base_dir="."):
    if spec.kind == "zero":
        return sp.VorticityField.zeros(grid)
    if spec.kind == "random":
        rng = np.random.default_rng(spec.seed)
        return sp.random_field(grid, rng, amplitude=spec.amplitude, slope=spec.slope,
                               dealiased=spec.dealiased)
    if spec.kind == "modes":
        return sp.from_modes(grid, {(k1, k2): complex(re, im) for k1, k2, re, im in spec.modes})
    if spec.path is None:
        raise ConfigurationError("field kind 'file' needs 'path'")
    f = sp.read_snapshot(Path(base_dir) / spec.path)
    if f.grid.cutoff != grid.cutoff:
        raise ConfigurationError(f"snapshot {spec.path} has K={f.grid.cutoff}, expected {grid.cutoff}")
    return f


def build_noise(grid, spec):
    if spec.kind == "none":
        return noise.AdditiveDiagonal(grid, a=spec.a, sigma0=0.0)
    if spec.kind == "additive_diagonal":
        return noise.AdditiveDiagonal(grid, a=spec.a, sigma0=spec.sigma0)
    if spec.kind == "additive_degenerate":
        if not spec.z0:
            raise ConfigurationError("noise.z0 must list the forced wave vectors")
        return noise.AdditiveDegenerate(grid, tuple(spec.z0), q=spec.q)
    return noise.MultiplicativeLowMode(grid, spec.M)


def build_sim(rc, base_dir="."):
    s = rc.sim
    grid = sp.make_grid(s.K)
    return sde.SimConfig(
        grid=grid, nu=s.nu, dt=s.dt, horizon=s.horizon,
        noise=build_noise(grid, rc.noise),
        forcing=build_field(grid, s.forcing, base_dir),
        initial=build_field(grid, s.initial, base_dir),
        seed=rc.seed, record_every=s.record_every,
        record_modes=tuple(tuple(k) for k in s.record_modes),
        advection=s.advection, snapshot_every=s.snapshot_every,
    )


# ---------------------------------------------------------------------------
# output


class Outputs:
    """Files collected in memory and written together at the end of a run."""

    def __init__(self):
        self.files = {}

    def csv(self, name, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(x) for x in r])
        self.files[name] = buf.getvalue()

    def json(self, name, obj):
        self.files[name] = json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"

    def text(self, name, s):
        self.files[name] = s

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, content in self.files.items():
            p = out / name
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(content)


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


# ---------------------------------------------------------------------------
# experiments


def _trajectory_rows(rec):
    if rec.ensemble:
        for r in range(rec.energy.shape[0]):
            for j, t in enumerate(rec.times):
                yield (r, t, rec.energy[r, j], rec.enstrophy[r, j], rec.palinstrophy[r, j])
    else:
        for j, t in enumerate(rec.times):
            yield (0, t, rec.energy[j], rec.enstrophy[j], rec.palinstrophy[j])


def _mode_rows(rec):
    modes = rec.modes if rec.ensemble else rec.modes[None]
    for r in range(modes.shape[0]):
        for j, t in enumerate(rec.times):
            for m, k in enumerate(rec.mode_list):
                c = modes[r, j, m]
                yield (r, t, k[0], k[1], c.real, c.imag)


def _trajectory_outputs(out, rec, cfg, linear):
    out.csv("trajectory.csv", ["replica", "t", "energy", "enstrophy", "palinstrophy"],
            _trajectory_rows(rec))
    if rec.mode_list:
        out.csv("modes.csv", ["replica", "t", "k1", "k2", "re", "im"], _mode_rows(rec))
    for t, f in rec.snapshots:
        out.text(f"snapshots/t_{t:.6f}.csv", sp.snapshot_text(f))
    e = rec.energy
    out.json("summary.json", {
        "linear_stokes": linear,
        "replicas": int(e.shape[0]) if rec.ensemble else 1,
        "records": int(len(rec.times)),
        "final_mean_energy": float(np.mean(e[..., -1])),
        "mean_energy": float(np.mean(e)),
        "mean_enstrophy": float(np.mean(rec.enstrophy)),
        "n_steps": cfg.n_steps,
    })


def run_simulate(rc, cfg, out, linear=False):
    reps = rc.replicas
    rec = sde.run(cfg, n_replicas=reps, linear_stokes=linear)
    _trajectory_outputs(out, rec, cfg, linear)
    return f"{'stokes' if linear else 'simulate'}: {len(rec.times)} records written"


def run_couple(rc, cfg, out, base_dir):
    c = rc.coupling
    reps = rc.replicas or c.replicas
    partner = build_field(cfg.grid, c.partner, base_dir)
    reports = coupling.fp_experiment(cfg, c.N, reps, c.horizon, partner, nudge=c.nudge,
                                     record_every=c.record_every)
    rows, events, summary = [], [], {}
    for r in reports:
        rows.extend((r.N, t, g, s) for t, g, s in zip(r.times, r.mean_sq_gap, r.stderr))
        events.extend((r.N, n, e, tf) for n, e, tf in
                      zip(r.integer_times, r.event_fractions, r.tail_fractions))
        summary[f"N={r.N}"] = {
            "m_star": r.m_star,
            "m_star_ci": r.m_star_ci,
            "fit": None if r.fit is None else {
                "kind": r.fit.kind, "rate": r.fit.rate, "r2": r.fit.r2,
                "window": r.fit.window, "n_points": r.fit.n_points},
            "p_admissible": r.p_admissible,
            "drift_mean": r.drift_mean,
            "drift_max": r.drift_max,
            "replicas": r.n_replicas,
        }
    out.csv("gap.csv", ["N", "t", "mean_sq_gap", "stderr"], rows)
    out.csv("events.csv", ["N", "n", "event_fraction", "tail_fraction"], events)
    out.json("summary.json", summary)
    return "couple: " + ", ".join(f"N={r.N} m*={r.m_star}" for r in reports)


def run_ergodic(rc, cfg, out, base_dir):
    e = rc.ergodic
    obs = [ergodic.observable(o) for o in e.observables]
    modes = {o.mode for o in obs if o.mode is not None}
    if modes - set(cfg.record_modes):
        cfg = cfg.replace(record_modes=tuple(cfg.record_modes) + tuple(sorted(modes - set(cfg.record_modes))))
    windows = e.windows or list(np.linspace(cfg.horizon / 10, cfg.horizon, 10))
    rec = sde.simulate(cfg)
    rep = ergodic.ergodic_report(rec, obs, windows, burn_in=e.burn_in, bins=e.bins)
    out.csv("averages.csv", ["observable", "window", "average"],
            ((name, t, a) for name, avg in rep.averages.items()
             for t, a in zip(rep.windows, avg)))
    out.csv("mode_variance.csv", ["k1", "k2", "variance"],
            ((k[0], k[1], v) for k, v in rep.mode_variance.items()))
    out.csv("histograms.csv", ["observable", "left", "right", "count"],
            ((name, lo, hi, c) for name, (counts, edges) in rep.histograms.items()
             for lo, hi, c in zip(edges[:-1], edges[1:], counts)))
    summary = {
        "burn_in": rep.burn_in,
        "cauchy": rep.cauchy,
        "moments": {k: dict(zip(("mean", "variance", "skewness", "excess_kurtosis"), v))
                    for k, v in rep.moments.items()},
    }
    if e.second_start is not None:
        x0b = build_field(cfg.grid, e.second_start, base_dir)
        reps = rc.replicas or e.replicas
        ts = ergodic.two_start_comparison(cfg, cfg.initial, x0b, obs, burn_in=e.burn_in,
                                          n_replicas=reps)
        summary["two_start"] = {"ks": ts.ks, "moment_diffs": ts.moment_diffs,
                                "samples_per_start": ts.n_samples,
                                "deterministic_control": ts.deterministic_control,
                                "notes": ts.notes}
    out.json("summary.json", summary)
    return "ergodic: " + ", ".join(f"{k} cauchy={v:.3g}" for k, v in rep.cauchy.items())


def run_activation(rc, cfg, out):
    a = rc.activation
    rep = ergodic.mode_activation(cfg, T=a.T, burn_in=a.burn_in,
                                  n_replicas=rc.replicas or a.replicas, lam_max=a.lam_max)
    out.csv("activation.csv", ["k1", "k2", "lam", "forced", "variance", "first_variance"],
            rep.table())
    out.json("summary.json", {
        "min_unforced_variance": rep.min_unforced(),
        "max_unforced_variance": rep.max_unforced(),
        "first_time": rep.first_time,
        "burn_in": rep.burn_in,
        "horizon": rep.horizon,
    })
    return f"activation: min unforced variance {rep.min_unforced():.3e}"


def validate_noise(model, samples, seed):
    """A1 defect, largest sampled A2 ratio and largest A3 residual of a model."""
    grid = model.grid
    rng = np.random.default_rng(seed)
    fields = [sp.random_field(grid, rng, amplitude=float(rng.uniform(0.1, 10.0)))
              for _ in range(samples)]
    psi = np.stack([f.coeffs for f in fields])
    hs = np.sum(model.gains(psi) ** 2, axis=-1)
    bound = model.C1 * sp.energy(grid, psi) + model.C2
    a1 = float(np.max(np.abs(hs - bound) / np.maximum(bound, 1e-300)))
    a2 = noise.lipschitz_check(model, fields)
    result = {"model": type(model).__name__, "C1": model.C1, "C2": model.C2,
              "L_G": model.lipschitz, "A1_defect": a1, "A2_max_ratio": a2}
    if isinstance(model, noise.MultiplicativeLowMode):
        res = []
        for f in fields:
            x = sp.random_field(grid, rng)
            res.append(noise.right_inverse_check(model, f, x).residual)
        result["A3_max_residual"] = max(res)
        result["inverse_bound"] = model.M + 1
    return result


def run_validate(rc, cfg, out):
    v = rc.validate_noise
    result = validate_noise(cfg.noise, v.samples, v.seed)
    out.json("summary.json", result)
    lines = [f"{k} = {result[k]!r}" for k in ("C1", "C2", "L_G", "A1_defect", "A2_max_ratio",
                                            "A3_max_residual") if k in result]
    return "\n".join(lines)


def oracle_check(K, pairs, seed):
    grid = sp.make_grid(K)
    ws = nonlin.AdvectionWorkspace(grid)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(pairs):
        a = sp.random_field(grid, rng)
        b = sp.random_field(grid, rng)
        fast = nonlin.advect(a, b, ws).coeffs
        slow = nonlin.advect_oracle(a, b).coeffs
        scale = np.max(np.abs(slow))
        if scale > 0:
            worst = max(worst, float(np.max(np.abs(fast - slow)) / scale))
    return worst


def run_oracle(rc, cfg, out):
    o = rc.oracle
    err = oracle_check(o.K, o.pairs, rc.seed)
    out.json("summary.json", {"K": o.K, "pairs": o.pairs, "max_relative_error": err,
                              "tolerance": o.tolerance, "passed": err <= o.tolerance})
    return f"max relative error = {err!r}", err <= o.tolerance


# ---------------------------------------------------------------------------
# entry point


def _parser():
    p = argparse.ArgumentParser(prog="stochns", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"stochns {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="YAML run configuration (defaults apply when omitted)")
        s.add_argument("--out", help="output directory (overrides the config)")
        s.add_argument("--seed", type=int, help="root seed (overrides the config)")
        s.add_argument("--replicas", type=int, help="ensemble size (overrides the config)")
    return p


def manifest(rc, config_text, command, wall):
    h = hashlib.sha256()
    h.update(config_text.encode())
    h.update(json.dumps({"command": command, "seed": rc.seed, "replicas": rc.replicas},
                        sort_keys=True).encode())
    return {
        "command": command,
        "config_sha256": h.hexdigest(),
        "seed": rc.seed,
        "replicas": rc.replicas,
        "versions": {"stochns": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "normalization": sp.NORMALIZATION_TAG,
        "wall_time_s": wall,
        "finished_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }


def main(argv=None):
    args = _parser().parse_args(argv)
    cmd = args.command
    try:
        if args.config:
            rc, text = load_config(args.config)
            base_dir = os.path.dirname(os.path.abspath(args.config))
        else:
            rc, text, base_dir = RunConfig(), "", "."
        if rc.experiment is not None and rc.experiment != cmd:
            raise ConfigurationError(f"config is for '{rc.experiment}', not '{cmd}'")
        if args.seed is not None:
            rc.seed = args.seed
        if args.replicas is not None:
            if args.replicas < 1:
                raise ConfigurationError("--replicas must be positive")
            rc.replicas = args.replicas
        out_dir = args.out or rc.out
        if out_dir is None:
            raise ConfigurationError("no output directory: pass --out or set 'out'")
        cfg = build_sim(rc, base_dir) if cmd not in ("oracle",) else None
    except ValidationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigurationError, DomainError, UnsupportedModelError, OSError, yaml.YAMLError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Outputs()
    t0 = time.perf_counter()
    ok = True
    try:
        if cmd == "simulate":
            msg = run_simulate(rc, cfg, out)
        elif cmd == "stokes":
            msg = run_simulate(rc, cfg, out, linear=True)
        elif cmd == "couple":
            msg = run_couple(rc, cfg, out, base_dir)
        elif cmd == "ergodic":
            msg = run_ergodic(rc, cfg, out, base_dir)
        elif cmd == "activation":
            msg = run_activation(rc, cfg, out)
        elif cmd == "validate-noise":
            msg = run_validate(rc, cfg, out)
        else:
            msg, ok = run_oracle(rc, cfg, out)
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except StatisticsRefused as exc:
        print(f"statistics refused: {exc}", file=sys.stderr)
        return EXIT_STATISTICS
    except (ConfigurationError, DomainError, UnsupportedModelError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out.json("manifest.json", manifest(rc, text, cmd, time.perf_counter() - t0))
    out.write(out_dir)
    print(msg)
    return EXIT_OK if ok else EXIT_CHECK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
