"""End-to-end acceptance criteria; each test records one pass/fail line."""
import json
import math
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from harnack_lab.fields import make_drift, make_tensor
from harnack_lab.geometry import Ball, Cylinder, ball_chain, build_grid, layer_split, parabolic_chain
from harnack_lab.hydro import build_swirl_problem, check_dirac_divergence, check_theorem_4_1
from harnack_lab.norms import morrey_norm
from harnack_lab.runner import run
from harnack_lab.solver import solve_elliptic, solve_parabolic
from harnack_lab.verify import EXPECTED_FAIL, PASS, TrialFamily, check_discrete_max_principle, check_harnack, liouville_probe

pytestmark = pytest.mark.acceptance

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
I2 = make_tensor("identity", 1.0, 2)
I3 = make_tensor("identity", 1.0, 3)
LIOUVILLE_TRIALS = TrialFamily(seed=0, count=8, kind="bumps", atoms=8)


def _quiet(msg):
    pass


@pytest.fixture(scope="module")
def elliptic_core(tmp_path_factory):
    """One run of the shipped elliptic-core experiment (criteria 7, 10 and 12)."""
    out = tmp_path_factory.mktemp("core")
    man = run(CONFIGS / "elliptic_core.toml", out=out, log=_quiet)
    return out / man.experiment, man


def test_criterion_01_solver_order(criterion):
    t0 = time.perf_counter()
    b = make_drift({"kind": "constant", "params": {"vector": [1.0, 0.0, 0.0]}})
    errs = []
    for h in (1 / 16, 1 / 32):
        g = build_grid(Ball((0, 0, 0), 1.0), h)
        u = solve_elliptic(I3, b, g, lambda X: np.exp(X[..., 0])).solution.values
        X = g.coords(g.inside)
        errs.append(float(np.max(np.abs(u[g.inside] - np.exp(X[:, 0])))))
    ratio = errs[0] / errs[1]
    dt = time.perf_counter() - t0
    ok = 3.0 <= ratio <= 5.0 and dt < 30
    criterion(1, ok, f"error ratio {ratio:.3f} in [3, 5], {dt:.1f} s < 30 s")
    assert ok


def test_criterion_02_parabolic_exactness(criterion):
    b = make_drift({"kind": "constant", "params": {"vector": [1.0, 0.0]}})
    grid = build_grid(Cylinder((0, 0), 0.0, 1.0, 1.0, 1.0), 1 / 16, 1 / 16)
    exact = lambda X, t: X[..., 0] - t  # noqa: E731
    u = solve_parabolic(I2, b, grid, exact).solution.values
    X = grid.coords(grid.inside)
    err = max(float(np.max(np.abs(u[k][grid.inside] - exact(X, t)))) for k, t in enumerate(grid.times))
    ok = err <= 1e-9
    criterion(2, ok, f"max nodal error {err:.2e} <= 1e-9")
    assert ok


def test_criterion_03_discrete_max_principle(criterion):
    t0 = time.perf_counter()
    rep = check_discrete_max_principle(draws=100, h=1 / 32, seed=0)
    dt = time.perf_counter() - t0
    v = rep.measured["violations"]
    ok = v == 0 and rep.verdict == PASS and dt < 300
    criterion(3, ok, f"{v} violations in 100 draws, {dt:.0f} s < 300 s")
    assert ok


def test_criterion_04_morrey_oracle(criterion):
    b = make_drift({"kind": "radial", "params": {"kappa": 1.0}}, n=3)
    r = morrey_norm(b, 2, 0.5, build_grid(Ball((0, 0, 0), 1.0), 1 / 64), stride=4)
    exact = math.sqrt(4 * math.pi)
    rel = abs(r.value - exact) / exact
    ok = rel <= 0.02
    criterion(4, ok, f"Morrey norm {r.value:.4f} vs {exact:.4f} (rel {rel:.2%} <= 2%)")
    assert ok


def test_criterion_05_harnack_clean(criterion):
    fam = TrialFamily(seed=0, count=200, kind="poisson", atoms=16)
    rep = check_harnack(I3, None, fam, R=1.0, h_ladder=(1 / 8, 1 / 16), bound=27.0)
    per_h = rep.measured["N3_per_h"]
    growth = per_h[1] / per_h[0] - 1
    ok = max(per_h) <= 27 * 1.10 and growth <= 0.10 and rep.verdict == PASS
    criterion(5, ok, f"N3 per h {[round(x, 2) for x in per_h]} <= 29.7, growth {growth:+.1%} <= 10%")
    assert ok


def test_criterion_06_structure_sharpness(criterion, tmp_path):
    man = run(CONFIGS / "counterexample_radial.toml", out=tmp_path, log=_quiet)
    d = tmp_path / man.experiment
    div = json.loads((d / "harnack.json").read_text())
    paired = json.loads((d / "harnack__paired.json").read_text())
    res = div["measured"]["certification"]["0"]["residuals"]
    per_h = div["measured"]["N3_per_h"]
    grow = per_h[-1] / per_h[0]
    ok = (
        div["verdict"] == EXPECTED_FAIL
        and div["measured"]["certification"]["0"]["certified"]
        and res[1] <= res[0] / 1.5
        and grow >= 2
        and not div["measured"]["structure"]["structure_condition"]
        and paired["verdict"] == PASS
        and paired["measured"]["growth_per_step"][0] <= 1.10
        and man.ok
    )
    criterion(
        6,
        ok,
        f"|x| residuals {res[0]:.3f} -> {res[1]:.3f}, quotient x{grow:.1f} (>= 2) from 1/16 to 1/64; "
        f"paired kappa=-2 growth {paired['measured']['growth_per_step'][0]:.3f}",
    )
    assert ok


def test_criterion_07_oscillation_decay(criterion, elliptic_core):
    d, man = elliptic_core
    rep = json.loads((d / "oscillation_decay.json").read_text())
    m = rep["measured"]
    trials = {r["trial"] for r in rep["trials"]}
    ok = man.context["N"] <= 2 and len(trials) == 100 and m["kappa0"] <= 0.95 and m["gamma"] > 0 and m["r2"] >= 0.9
    criterion(7, ok, f"N={man.context['N']:.3f}, kappa0={m['kappa0']:.3f} <= 0.95, gamma={m['gamma']:.3f}, R^2={m['r2']:.4f}")
    assert ok


def _ball_chain_reference(y, R):
    """Exact chain from the lemma formulas, in rational arithmetic."""
    d = Fraction(float(np.linalg.norm(y)))
    Rf = Fraction(R)
    rho = (2 * Rf - d) / 4
    N = 0
    while not (Rf / 2 ** (N + 1) < rho <= Rf / 2**N):
        N += 1
    r = [Rf / 2**N]
    s = [2 * Rf - 2 * r[0]]
    for m in range(1, N + 1):
        r.append(2 * r[m - 1])
        s.append(s[m - 1] - r[m])
    return d, rho, r, s


def _check_ball_chain(y, R):
    d, rho, r, s = _ball_chain_reference(y, R)
    plan = ball_chain(y, R)
    ok = plan.certified and plan.count == len(r) - 1
    ok &= all(float(a) == b for a, b in zip(r, plan.radii))
    ok &= abs(s[0] - d) + r[0] <= 3 * rho  # first ball inside B_{3 rho}(y)
    ok &= all(s[m] + 2 * r[m] <= 2 * R for m in range(len(r)))  # doubled balls inside B_{2R}
    ok &= all(s[m - 1] - s[m] < r[m - 1] + r[m] for m in range(1, len(r)))  # consecutive overlap
    ok &= s[-1] == 0 and r[-1] == R
    e = np.asarray(y) / float(d)
    ok &= all(np.allclose(c, float(sm) * e, rtol=0, atol=1e-12 * R) for c, sm in zip(plan.centers, s))
    return ok


def _check_parabolic_chain(y, s, R):
    d = float(np.linalg.norm(y))
    rho = Fraction(min(2 * R - d, math.sqrt(s + 4 * R * R))) / 4
    Rf, sf = Fraction(R), Fraction(s)
    N = 0
    while not (Rf / 2 ** (N + 1) <= rho < Rf / 2**N):
        N += 1
    r, c, t = [Rf / 2 ** (N + 1)], [Fraction(d)], [sf + (Rf / 2 ** (N + 1)) ** 2]
    for m in range(1, N + 1):
        r.append(2 * r[m - 1])
        c.append(c[m - 1] - min(2 * r[m], c[m - 1]))
        t.append(t[m - 1] + r[m] ** 2)
    plan = parabolic_chain(y, s, R, rho=float(rho))
    ok = plan.certified and plan.count == N
    ok &= all(float(a) == b for a, b in zip(r, plan.radii)) and all(float(a) == b for a, b in zip(t, plan.times))
    ok &= all(c[m] + 4 * r[m] <= 2 * Rf for m in range(N + 1))
    ok &= all(t[m] - r[m] ** 2 >= -4 * Rf * Rf and t[m] <= 0 for m in range(N + 1))
    ok &= 2 * r[-1] == Rf and c[-1] == 0 and t[-1] <= -Fraction(5, 3) * Rf * Rf
    return ok


def test_criterion_08_chain_geometry(criterion):
    rng = np.random.default_rng(8)
    t0 = time.perf_counter()
    bad = 0
    for i in range(1000):
        n = 2 + i % 2
        R = float(rng.uniform(0.25, 4.0))
        u = rng.normal(size=n)
        u /= np.linalg.norm(u)
        y = u * 2 * R * float(rng.uniform(0.0, 0.999)) ** (1 / n)
        if np.linalg.norm(y) == 0:
            continue
        s = -4 * R * R * float(rng.uniform(0.5, 0.999))
        bad += not _check_ball_chain(y, R)
        bad += not _check_parabolic_chain(y, s, R)
    dt = time.perf_counter() - t0
    ok = bad == 0 and dt < 10
    criterion(8, ok, f"{bad} invariant failures over 1000 ball and 1000 cylinder chains, {dt:.1f} s < 10 s")
    assert ok


def test_criterion_09_dirac_pairing(criterion):
    rep = check_dirac_divergence(build_swirl_problem(None, -1), h_ladder=(1 / 16, 1 / 32, 1 / 64))
    err = rep.measured["relative_error"]
    ok = err[-1] <= 0.05 and all(err[i + 1] < err[i] for i in range(len(err) - 1)) and rep.verdict == PASS
    criterion(9, ok, f"relative errors {[f'{e:.4f}' for e in err]}, final <= 5%, decreasing")
    assert ok


def test_criterion_10_liouville_zero_drift(criterion, elliptic_core):
    d, _ = elliptic_core
    kappa0 = json.loads((d / "oscillation_decay.json").read_text())["measured"]["kappa0"]
    t0 = time.perf_counter()
    rep = liouville_probe(I2, None, LIOUVILLE_TRIALS, window=1.0, R_sequence=(1.0, 3.0, 9.0, 27.0), kappa0=kappa0)
    dt = time.perf_counter() - t0
    osc = rep.measured["window_osc"]
    ok = osc[3] <= kappa0**3 * osc[0] and rep.verdict == PASS
    criterion(10, ok, f"b=0: osc {osc[0]:.3g} -> {osc[3]:.3g} <= kappa0^3 osc_0 = {kappa0**3 * osc[0]:.3g} ({dt:.0f} s)")
    assert ok


@pytest.mark.xfail(strict=True, reason="swirl window oscillation decays by about 0.54 per scale step, slower than the measured kappa0")
def test_criterion_10_liouville_swirl(criterion, elliptic_core):
    d, _ = elliptic_core
    kappa0 = json.loads((d / "oscillation_decay.json").read_text())["measured"]["kappa0"]
    t0 = time.perf_counter()
    rep = check_theorem_4_1(build_swirl_problem(None, -1), trials=LIOUVILLE_TRIALS, kappa0=kappa0, oracle=False)
    dt = time.perf_counter() - t0
    osc = rep.measured["window_osc"]
    ok = osc[3] <= kappa0**3 * osc[0] and rep.verdict == PASS
    criterion(10, ok, f"eps=-1 swirl: osc {osc[0]:.3g} -> {osc[3]:.3g} vs kappa0^3 osc_0 = {kappa0**3 * osc[0]:.3g} ({dt:.0f} s)")
    assert ok


def _fibonacci_sphere(m):
    i = np.arange(m) + 0.5
    z = 1 - 2 * i / m
    phi = math.pi * (1 + 5**0.5) * i
    rr = np.sqrt(1 - z * z)
    return np.stack([rr * np.cos(phi), rr * np.sin(phi), z], axis=1)


def _layer_norm(b, lay):
    """||b||_{3, layer} by Gauss-Legendre in the radius and a Fibonacci sphere rule."""
    x, w = np.polynomial.legendre.leggauss(48)
    rr = 0.5 * (lay.outer + lay.inner) + 0.5 * (lay.outer - lay.inner) * x
    ww = 0.5 * (lay.outer - lay.inner) * w
    dirs = _fibonacci_sphere(6000)
    c = np.asarray(lay.center)
    total = sum(wi * ri**2 * 4 * math.pi * np.mean(np.linalg.norm(b(c + ri * dirs), axis=-1) ** 3) for ri, wi in zip(rr, ww))
    return total ** (1 / 3)


def test_criterion_11_layer_split(criterion):
    rng = np.random.default_rng(11)
    eps = 0.3
    worst = 0.0
    for i in range(20):
        R = float(rng.uniform(0.5, 2.0))
        if i == 0:
            b, R = make_drift({"kind": "radial", "params": {"kappa": 1.0}}, n=3), 1.0
        elif i % 2:
            kappa = float(rng.choice([-1, 1]) * rng.uniform(0.2, 2.0))
            centre = (rng.uniform(-1, 1, 3) * R / 4).tolist()
            b = make_drift({"kind": "radial", "params": {"kappa": kappa, "center": centre}}, n=3)
        else:
            v = rng.normal(size=3)
            v *= rng.uniform(0.1, 1.0) / (R * np.linalg.norm(v))
            b = make_drift({"kind": "constant", "params": {"vector": v.tolist()}})
        lay = layer_split(b, R, eps)
        assert R <= lay.inner < lay.outer <= 2 * R
        worst = max(worst, _layer_norm(b, lay))
    ok = worst <= eps
    criterion(11, ok, f"largest independent layer norm {worst:.4f} <= {eps} over 20 draws")
    assert ok


def test_criterion_12_determinism(criterion, elliptic_core, tmp_path):
    d, man = elliptic_core
    again = run(CONFIGS / "elliptic_core.toml", out=tmp_path, log=_quiet)
    d2 = tmp_path / again.experiment
    names = [r["path"] for r in man.reports] + ["summary.csv"]
    same = [(d / nm).read_bytes() == (d2 / nm).read_bytes() for nm in names]
    ok = all(same) and again.config_hash == man.config_hash
    criterion(12, ok, f"{sum(same)}/{len(same)} report files byte-identical on rerun")
    assert ok
