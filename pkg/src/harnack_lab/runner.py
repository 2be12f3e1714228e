"""Configuration-driven experiment runner.

A configuration is one TOML file describing one experiment: the coefficient fields, the
region scale, exponents, the resolution ladder, the trial family, the seed and the list
of checks (a named suite and/or explicit check ids).  Everything is validated before any
solve; each check then produces an :class:`~harnack_lab.verify.EstimateReport` written as
JSON, plus a CSV summary and a manifest.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import inspect
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from . import hydro, verify
from .fields import make_drift, make_tensor
from .norms import check_elliptic_exponent, check_parabolic_exponents, quantity_N

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "RunManifest",
    "SUITES",
    "CHECKS",
    "load_config",
    "parse_config",
    "run",
    "report",
    "plot_series",
]

ENV_OUT = "HARNACK_LAB_OUT"
OK_VERDICTS = (verify.PASS, verify.EXPECTED_FAIL)

SUITES = {
    "elliptic-core": ["local_max", "growth_lemma", "oscillation_decay", "harnack", "max_principle"],
    "counterexample-radial": ["harnack"],
    "parabolic-core": ["max_principle", "measure_propagation", "chain_propagation", "slant_cylinder"],
    "swirl": ["dirac_divergence", "swirl_liouville", "swirl_axis"],
}

# per-suite defaults merged under explicit check parameters
SUITE_DEFAULTS = {
    "counterexample-radial": {
        "harnack": {"expect": "divergent", "candidates": ["abs"], "shift": 0.5, "certify_exclusion": 0.25, "trials": None}
    },
}

CANDIDATES = {
    "abs": lambda X: np.linalg.norm(X, axis=-1),
    "one": lambda X: np.ones(X.shape[:-1]),
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field (and line if known)."""


# --------------------------------------------------------------------------
# check adapters: (config, params) -> EstimateReport


def _h(cfg) -> list:
    return list(cfg.resolution["h"])


def _family(cfg, p):
    t = p.pop("trials", "default")
    if t is None:
        return None
    spec = dict(cfg.trials)
    if isinstance(t, dict):
        spec.update(t)
    spec.setdefault("seed", cfg.seed)
    spec["pole_range"] = tuple(spec.get("pole_range", (1.15, 1.3)))
    return verify.TrialFamily(**spec)


def _fields(cfg, p):
    tensor = p.pop("tensor", None) or cfg.tensor
    drift = p.pop("drift", "default")
    drift = cfg.drift if drift == "default" else drift
    a = make_tensor(tensor["kind"], tensor["nu"], tensor["n"], **tensor.get("params", {}))
    b = None if not drift else make_drift({"kind": drift["kind"], "params": drift.get("params", {})}, n=a.n)
    return a, b


def _swirl(cfg, p):
    sw = dict(cfg.swirl)
    sw.update(p.pop("swirl", {}) or {})
    return hydro.build_swirl_problem(sw.get("background", "zero"), int(sw.get("eps", -1)))


def _scale(cfg, p):
    return p.pop("R", cfg.region["R"])


def _ladder(cfg, p):
    return p.pop("h_ladder", _h(cfg))


def _c_local_max(cfg, p):
    a, b = _fields(cfg, p)
    return verify.check_local_max(a, b, _family(cfg, p), R=_scale(cfg, p), h_ladder=_ladder(cfg, p), **p)


def _c_growth(cfg, p):
    a, b = _fields(cfg, p)
    return verify.check_growth_lemma(a, b, _family(cfg, p), R=_scale(cfg, p), h_ladder=_ladder(cfg, p), **p)


def _c_osc(cfg, p):
    a, b = _fields(cfg, p)
    return verify.check_oscillation_decay(a, b, _family(cfg, p), R=_scale(cfg, p), h_ladder=_ladder(cfg, p), **p)


def _c_harnack(cfg, p):
    a, b = _fields(cfg, p)
    names = p.pop("candidates", None)
    cands = None if not names else [CANDIDATES[nm] for nm in names]
    return verify.check_harnack(a, b, _family(cfg, p), R=_scale(cfg, p), h_ladder=_ladder(cfg, p), candidates=cands, **p)


def _c_max(cfg, p):
    a, b = _fields(cfg, p)
    return verify.check_max_principle(a, b, _family(cfg, p), R=_scale(cfg, p), h=p.pop("h", _h(cfg)[-1]), **p)


def _c_dmp(cfg, p):
    return verify.check_discrete_max_principle(seed=p.pop("seed", cfg.seed), h=p.pop("h", _h(cfg)[-1]), **p)


def _c_measure(cfg, p):
    a, b = _fields(cfg, p)
    fam = _family(cfg, p)
    n_trials = p.pop("count", fam.count if fam else 8)
    return verify.check_measure_propagation(a, b, trials=n_trials, seed=cfg.seed, R=_scale(cfg, p), h=p.pop("h", _h(cfg)[-1]), **p)


def _c_chain(cfg, p):
    a, b = _fields(cfg, p)
    return verify.check_chain_propagation(a, b, R=_scale(cfg, p), h=p.pop("h", _h(cfg)[-1]), **p)


def _c_slant(cfg, p):
    return verify.check_slant_cylinder(h=p.pop("h", _h(cfg)[-1]), **p)


def _c_liouville(cfg, p):
    a, b = _fields(cfg, p)
    return verify.liouville_probe(a, b, _family(cfg, p), **p)


def _c_dirac(cfg, p):
    return hydro.check_dirac_divergence(_swirl(cfg, p), h_ladder=_ladder(cfg, p), **p)


def _c_swirl_liouville(cfg, p):
    return hydro.check_theorem_4_1(_swirl(cfg, p), trials=_family(cfg, p), **p)


def _c_swirl_axis(cfg, p):
    return hydro.check_theorem_4_3(_swirl(cfg, p), seed=cfg.seed, h_ladder=_ladder(cfg, p), **p)


CHECKS = {
    "local_max": (_c_local_max, verify.check_local_max),
    "growth_lemma": (_c_growth, verify.check_growth_lemma),
    "oscillation_decay": (_c_osc, verify.check_oscillation_decay),
    "harnack": (_c_harnack, verify.check_harnack),
    "max_principle": (_c_max, verify.check_max_principle),
    "discrete_max_principle": (_c_dmp, verify.check_discrete_max_principle),
    "measure_propagation": (_c_measure, verify.check_measure_propagation),
    "chain_propagation": (_c_chain, verify.check_chain_propagation),
    "slant_cylinder": (_c_slant, verify.check_slant_cylinder),
    "liouville": (_c_liouville, verify.liouville_probe),
    "dirac_divergence": (_c_dirac, hydro.check_dirac_divergence),
    "swirl_liouville": (_c_swirl_liouville, hydro.check_theorem_4_1),
    "swirl_axis": (_c_swirl_axis, hydro.check_theorem_4_3),
}

# keys every adapter understands in addition to the wrapped function's parameters
_COMMON_KEYS = {"tensor", "drift", "trials", "swirl", "R", "h_ladder", "h", "count", "seed"}


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description (plain data, picklable)."""

    experiment: str
    seed: int
    checks: tuple
    tensor: dict
    drift: dict | None
    region: dict
    exponents: dict
    resolution: dict
    trials: dict
    swirl: dict
    output: dict
    source: str = ""
    config_hash: str = ""

    def check_params(self, key: str) -> dict:
        return copy.deepcopy(dict(self.checks)[key])


def _check_window(key: str, base: str, params: dict):
    """Liouville probes need the observation window resolved by four cells at every scale."""
    if base not in ("liouville", "swirl_liouville"):
        return
    sig = inspect.signature(CHECKS[base][1]).parameters
    get = lambda name: params.get(name, sig[name].default)  # noqa: E731
    Rs, npr, window = get("R_sequence"), get("nodes_per_radius"), get("window")
    if not Rs or npr <= 0 or window <= 0:
        _fail(f"check.{key}", "R_sequence, nodes_per_radius and window must be positive")
    if max(Rs) / npr > window / 4 * (1 + 1e-12):
        _fail(f"check.{key}.nodes_per_radius", f"window {window} unresolved at R={max(Rs)}: need nodes_per_radius >= {math.ceil(4 * max(Rs) / window)}")


def _fail(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def _positive(doc, path, key, kind=float):
    v = doc.get(key)
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0:
        _fail(f"{path}.{key}" if path else key, f"must be a positive number, got {v!r}")
    return kind(v)


def load_config(path) -> ExperimentConfig:
    """Read and validate a TOML configuration file."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_config(raw, source=str(path))


def parse_config(raw: bytes | str, source: str = "<string>") -> ExperimentConfig:
    if isinstance(raw, str):
        raw = raw.encode()
    try:
        doc = tomllib.loads(raw.decode())
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{source}: {e}") from e
    known = {"experiment", "seed", "suite", "checks", "check", "fields", "region", "exponents", "resolution", "trials", "swirl", "output"}
    for k in doc:
        if k not in known:
            _fail(k, "unknown top-level key")
    if "seed" not in doc:
        _fail("seed", "missing (a seed is mandatory)")
    seed = doc["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        _fail("seed", f"must be a nonnegative integer, got {seed!r}")
    experiment = doc.get("experiment", Path(source).stem)
    if not isinstance(experiment, str) or not experiment:
        _fail("experiment", "must be a nonempty string")

    # checks
    keys = []
    suite = doc.get("suite")
    defaults = {}
    if suite is not None:
        if suite not in SUITES:
            _fail("suite", f"unknown suite {suite!r}; known: {sorted(SUITES)}")
        keys += SUITES[suite]
        defaults = SUITE_DEFAULTS.get(suite, {})
    extra = doc.get("checks", [])
    if not isinstance(extra, list) or not all(isinstance(x, str) for x in extra):
        _fail("checks", "must be a list of check ids")
    for k in extra:
        if k not in keys:
            keys.append(k)
    if not keys:
        raise ConfigError("no checks requested")
    tables = doc.get("check", {})
    for k in tables:
        if k not in keys:
            _fail(f"check.{k}", "parameters given for a check that is not requested")
    checks = []
    for k in keys:
        base = k.split(":", 1)[0]
        if base not in CHECKS:
            _fail("checks", f"unknown check id {base!r}; known: {sorted(CHECKS)}")
        params = dict(defaults.get(k, {}))
        params.update(tables.get(k, {}))
        sig = inspect.signature(CHECKS[base][1]).parameters
        for pk in params:
            if pk not in sig and pk not in _COMMON_KEYS:
                _fail(f"check.{k}.{pk}", f"unknown parameter for {base}")
        _check_window(k, base, params)
        checks.append((k, params))

    fields_ = doc.get("fields", {})
    tensor = dict(fields_.get("tensor", {"kind": "identity", "nu": 1.0, "n": 3}))
    try:
        tkind = tensor.pop("kind", "identity")
        nu = float(tensor.pop("nu", 1.0))
        n = int(tensor.pop("n", 3))
        params = tensor.pop("params", {})
        params.update(tensor)
        make_tensor(tkind, nu, n, **params)
    except (ValueError, TypeError, KeyError) as e:
        _fail("fields.tensor", str(e))
    tensor = {"kind": tkind, "nu": nu, "n": n, "params": params}
    drift = fields_.get("drift")
    if drift is not None:
        drift = dict(drift)
        dkind = drift.pop("kind", None)
        if dkind is None:
            _fail("fields.drift.kind", "missing")
        dparams = drift.pop("params", {})
        dparams.update(drift)
        try:
            bb = make_drift({"kind": dkind, "params": dparams}, n=n)
        except (ValueError, TypeError, KeyError) as e:
            _fail("fields.drift", str(e))
        if bb.n != n:
            _fail("fields.drift", f"dimension {bb.n} does not match tensor dimension {n}")
        drift = {"kind": dkind, "params": dparams}

    region = dict(doc.get("region", {"R": 1.0}))
    R = _positive(region, "region", "R")
    region["R"] = R

    exps = dict(doc.get("exponents", {}))
    if "q" in exps:
        try:
            check_elliptic_exponent(float(exps["q"]), n)
            if "ell" in exps:
                check_parabolic_exponents(float(exps["q"]), float(exps["ell"]), n)
        except ValueError as e:
            _fail("exponents", str(e))

    res = dict(doc.get("resolution", {}))
    hs = res.get("h", [1 / 16])
    if isinstance(hs, (int, float)):
        hs = [hs]
    if not hs or not all(isinstance(x, (int, float)) and x > 0 for x in hs):
        _fail("resolution.h", "must be a positive number or a list of positive numbers")
    for x in hs:
        if x > R / 2:
            _fail("resolution.h", f"h={x} exceeds R/2={R / 2} (grid too coarse for the smallest region)")
    res["h"] = [float(x) for x in hs]

    trials = dict(doc.get("trials", {}))
    trials.setdefault("count", 16)
    try:
        fam = verify.TrialFamily(seed=seed, **{k: (tuple(v) if k == "pole_range" else v) for k, v in trials.items()})
        fam._geometry(n)
        if fam.count < 1:
            raise ValueError("count must be >= 1")
        if not (fam.pole_range[0] > 1.0 and fam.pole_range[1] >= fam.pole_range[0]):
            raise ValueError("pole_range must satisfy 1 < lo <= hi")
    except (ValueError, TypeError) as e:
        _fail("trials", str(e))

    swirl = dict(doc.get("swirl", {}))
    if any(k.split(":")[0] in ("dirac_divergence", "swirl_liouville", "swirl_axis") for k, _ in checks):
        try:
            hydro.build_swirl_problem(swirl.get("background", "zero"), int(swirl.get("eps", -1)))
        except (ValueError, TypeError) as e:
            _fail("swirl", str(e))

    output = dict(doc.get("output", {}))
    return ExperimentConfig(
        experiment,
        seed,
        tuple(checks),
        tensor,
        drift,
        region,
        exps,
        res,
        trials,
        swirl,
        output,
        source,
        hashlib.sha256(raw).hexdigest(),
    )


# --------------------------------------------------------------------------
# running


@dataclass
class RunManifest:
    """Run record: config hash, version, report files, verdicts and wall-clock times."""

    experiment: str
    config_path: str
    config_hash: str
    version: str
    seed: int
    reports: list = field(default_factory=list)
    summary_csv: str = ""
    context: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(r["verdict"] in OK_VERDICTS for r in self.reports)

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "config_path": self.config_path,
            "config_hash": self.config_hash,
            "version": self.version,
            "seed": self.seed,
            "reports": self.reports,
            "summary_csv": self.summary_csv,
            "context": self.context,
            "status": "pass" if self.ok else "fail",
        }


def _context(cfg: ExperimentConfig) -> dict:
    """Norm stage: the drift quantity for the configured scale (recorded with reports)."""
    ctx = {}
    if cfg.drift and "q" in cfg.exponents:
        a = cfg.tensor
        b = make_drift({"kind": cfg.drift["kind"], "params": cfg.drift.get("params", {})}, n=a["n"])
        q = float(cfg.exponents["q"])
        ctx["N"] = verify._jsonable(quantity_N(b, cfg.region["R"], float(cfg.exponents.get("lam", 1.0)), q))
        ctx["q"] = q
    return ctx


def execute_check(cfg: ExperimentConfig, key: str) -> tuple[str, dict, float]:
    """Run one configured check; returns ``(key, report dict, seconds)``."""
    base = key.split(":", 1)[0]
    params = cfg.check_params(key)
    t0 = time.perf_counter()
    try:
        rep = CHECKS[base][0](cfg, params)
    except (ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as e:
        rep = verify.EstimateReport(base, {}, {}, verify.FAIL, {}, {}, [], [f"runtime error: {e}"])
    rep.config = dict(rep.config, check=key, seed=cfg.seed, experiment=cfg.experiment)
    return key, rep.to_dict(), time.perf_counter() - t0


def _out_dir(cfg: ExperimentConfig, out) -> Path:
    root = out or cfg.output.get("dir") or os.environ.get(ENV_OUT) or "harnack_out"
    return Path(root) / cfg.experiment


def _summary_rows(key: str, rep: dict, seed: int):
    verdict = rep["verdict"]
    for name, val in sorted(rep["measured"].items()):
        if isinstance(val, (int, float)) and not isinstance(val, bool):
            yield [key, seed, "", name, repr(float(val)), verdict]
        elif isinstance(val, str) and val in ("inf", "-inf", "nan"):
            yield [key, seed, "", name, val, verdict]
    for row in rep.get("trials", []):
        h = row.get("h", "")
        s = row.get("seed", seed)
        for name, val in sorted(row.items()):
            if name in ("h", "seed", "trial", "candidate", "m", "draw", "n"):
                continue
            if isinstance(val, (int, float)) and not isinstance(val, bool):
                yield [key, s, h, name, repr(float(val)), verdict]


def _csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["check_id", "seed", "h", "constant_name", "value", "verdict"])
    w.writerows(rows)
    return buf.getvalue()


def run(config, jobs: int = 1, out=None, log=print) -> RunManifest:
    """Validate ``config`` (path or :class:`ExperimentConfig`), execute its checks and write
    ``<out>/<experiment>/{<check>.json, summary.csv, manifest.json}``."""
    cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
    ctx = _context(cfg)
    keys = [k for k, _ in cfg.checks]
    results = {}
    if jobs > 1 and len(keys) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            for key, rep, sec in ex.map(execute_check, [cfg] * len(keys), keys):
                results[key] = (rep, sec)
    else:
        for key in keys:
            results[key] = execute_check(cfg, key)[1:]
    d = _out_dir(cfg, out)
    d.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(cfg.experiment, cfg.source, cfg.config_hash, __version__, cfg.seed, context=ctx)
    rows = []
    for key in keys:  # serialized, deterministic order
        rep, sec = results[key]
        if ctx:
            rep["config"]["context"] = ctx
        fname = key.replace(":", "__") + ".json"
        (d / fname).write_text(json.dumps(rep, sort_keys=True, indent=1) + "\n")
        manifest.reports.append({"check": key, "estimate_id": rep["estimate_id"], "path": fname, "verdict": rep["verdict"], "wall_time": sec})
        rows += list(_summary_rows(key, rep, cfg.seed))
        log(f"{key}: {rep['verdict']} ({sec:.1f} s)")
    (d / "summary.csv").write_text(_csv_text(rows))
    manifest.summary_csv = "summary.csv"
    (d / "manifest.json").write_text(json.dumps(manifest.to_dict(), sort_keys=True, indent=1) + "\n")
    return manifest


# --------------------------------------------------------------------------
# reporting


def plot_series(rep: dict) -> tuple[list[str], list[list]]:
    """``(header, rows)`` of the natural (x, y) series of a report."""
    m = rep["measured"]
    res = rep.get("resolution", {})
    eid = rep["estimate_id"]
    if eid.startswith("oscillation_decay"):
        fit = m["holder_fit"][-1]
        return ["log_rho", "log_osc"], [[math.log(r), math.log(o)] for r, o in zip(fit["rho"], fit["envelope"]) if isinstance(o, float) and o > 0]
    if eid.startswith("harnack"):
        return ["h", "N3"], [[h, v] for h, v in zip(res["h_ladder"], m["N3_per_h"])]
    if eid.startswith("local_max"):
        return ["h", "N1"], [[h, v] for h, v in zip(res["h_ladder"], m["N1_per_h"])]
    if eid == "growth_lemma":
        return ["h", "beta"], [[h, v] for h, v in zip(res["h_ladder"], m["beta_per_h"])]
    if eid.startswith("chain_propagation"):
        rhos = rep["config"]["rhos"]
        return ["rho", "inf_over_k"], [[r, v] for r, v in zip(rhos, m["inf_over_k"])]
    if eid.startswith("liouville") or eid == "swirl_liouville":
        Rs = rep["config"]["R_sequence"]
        return ["R", "window_osc"], [[r, v] for r, v in zip(Rs, m["window_osc"])]
    if eid == "axis_divergence_pairing":
        return ["h", "relative_error"], [[h, v] for h, v in zip(res["h_ladder"], m["relative_error"])]
    if eid == "swirl_axis_lower_bound":
        return ["h", "beta_hat3"], [[h, v] for h, v in zip(res["h_ladder"], m["beta_hat3_per_h"])]
    # fallback: first numeric trial constant against the trial index
    rows = []
    for i, row in enumerate(rep.get("trials", [])):
        for k, v in sorted(row.items()):
            if k not in ("h", "seed", "trial", "draw", "n", "m") and isinstance(v, (int, float)) and not isinstance(v, bool):
                rows.append([i, v])
                break
    return ["trial", "value"], rows


def report(manifest_path, fmt: str) -> list[Path]:
    """Emit ``json`` (all reports in one file), ``csv`` (summary) or ``plot-data`` (one
    series file per report) next to the manifest; returns the written paths."""
    mpath = Path(manifest_path)
    if not mpath.exists():
        raise FileNotFoundError(f"manifest not found: {mpath}")
    man = json.loads(mpath.read_text())
    d = mpath.parent
    reps = [(r["check"], json.loads((d / r["path"]).read_text())) for r in man["reports"]]
    if fmt == "json":
        p = d / "reports.json"
        p.write_text(json.dumps([rep for _, rep in reps], sort_keys=True, indent=1) + "\n")
        return [p]
    if fmt == "csv":
        rows = []
        for key, rep in reps:
            rows += list(_summary_rows(key, rep, man["seed"]))
        p = d / "summary.csv"
        p.write_text(_csv_text(rows))
        return [p]
    if fmt == "plot-data":
        out = []
        for key, rep in reps:
            header, rows = plot_series(rep)
            p = d / f"plot_{key.replace(':', '__')}.csv"
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(header)
            w.writerows([[repr(float(x)) for x in row] for row in rows])
            p.write_text(buf.getvalue())
            out.append(p)
        return out
    raise ValueError(f"unknown format {fmt!r}")
