"""Acceptance gate: ten verdicts, one per criterion, each printing a single
pass/fail line (written straight to the terminal so the lines appear even
under output capture).  Criterion 7 is the slow tail suite and only runs
with ``pytest --long``.
"""

import sys
import time

import numpy as np
import pytest

from homlab.corrector import (build_corrector_set, compute_corrector,
                              compute_flux_and_ahom, extended_components)
from homlab.diagnostics import excess_decay_experiment, minimal_radius
from homlab.elliptic import SolveOptions
from homlab.ensemble import (ExperimentPlan, fit_linear, fit_tail,
                             run_ensemble, sample_coefficients, summarize)
from homlab.lattice import GridSpec, div, grad
from homlab.partition import (build_partition, check_refinement,
                              interaction_sum)
from homlab.randomfield import (CoefficientField, constant_coefficients)
from homlab.sensitivity import FunctionalSpec, fd_check, malliavin_derivative


_CAPFD = None


@pytest.fixture(autouse=True)
def _live_report(capfd):
    # pytest captures at the file-descriptor level, so the verdict lines
    # are printed with capture suspended to reach the terminal directly
    global _CAPFD
    _CAPFD = capfd
    yield
    _CAPFD = None


def _report(num, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:>2}: {detail}"
    if _CAPFD is not None:
        with _CAPFD.disabled():
            print(line, flush=True)
    else:
        print(line, file=sys.__stdout__, flush=True)
    assert ok, line


def _laminate_4cell(n=64):
    grid = GridSpec(2, n)
    prof = np.array([1.0, 0.5, 0.25, 0.5])[np.arange(n) % 4]
    a = np.zeros((2, 2) + grid.shape)
    a[0, 0] = prof[:, None]
    a[1, 1] = prof[:, None]
    return CoefficientField(a, 0.25, grid)


def test_criterion_01_laminate_oracle():
    t0 = time.perf_counter()
    a = _laminate_4cell()
    phi, _ = compute_corrector(a, SolveOptions(tol=1e-12))
    _, tensor = compute_flux_and_ahom(a, phi)
    err = max(abs(tensor.matrix[0, 0] / (4.0 / 9.0) - 1.0),
              abs(tensor.matrix[1, 1] / (9.0 / 16.0) - 1.0),
              abs(tensor.matrix[0, 1]), abs(tensor.matrix[1, 0]))
    dt = time.perf_counter() - t0
    _report(1, err <= 1e-8 and dt < 1.0,
            f"laminate a_hom = diag(4/9, 9/16), rel err {err:.2e}, {dt:.2f}s")


def test_criterion_02_structural_identities():
    plan = ExperimentPlan(kind="growth", d=2, n=256, lam=0.25, gamma=2.5,
                          m=10, master_seed=11, tol=1e-10)
    opts = plan.opts()
    rng = np.random.default_rng(0)
    u = rng.standard_normal(plan.grid().shape)
    f = rng.standard_normal((2,) + plan.grid().shape)
    adjoint_err = abs(float(np.sum(grad(u) * f))
                      + float(np.sum(u * div(f))))
    worst_sigma, worst_skew, worst_energy = 0.0, 0.0, 0.0
    for idx in range(plan.m):
        a = sample_coefficients(plan, idx)
        corr = build_corrector_set(a, opts)
        s = corr.sigma
        worst_skew = max(worst_skew, float(np.max(np.abs(
            s.component(0, 0, 1) + s.component(0, 1, 0)))))
        ds = s.divergence()
        for i in range(2):
            rel = (np.linalg.norm(ds[i] - corr.q[i])
                   / np.linalg.norm(corr.q[i]))
            worst_sigma = max(worst_sigma, rel)
            energy = float(np.mean(np.sum(corr.grad_phi[i] ** 2, axis=0)))
            worst_energy = max(worst_energy,
                               energy - 1.0 / corr.lam_eff**2)
    ok = (worst_sigma <= 1e-6 and worst_skew == 0.0
          and adjoint_err < 1e-9 and worst_energy <= 1e-3)
    _report(2, ok,
            f"sigma identity {worst_sigma:.2e} (<=1e-6), skew exact, "
            f"adjointness {adjoint_err:.1e}, energy margin "
            f"{worst_energy:+.2e}")


def test_criterion_03_sensitivity_gradient():
    plan = ExperimentPlan(kind="scaling", d=2, n=128, lam=0.25, gamma=2.5,
                          nu=0.1, m=2, master_seed=13)
    a = sample_coefficients(plan, 0)
    opts = SolveOptions(tol=1e-12)
    rng = np.random.default_rng(3)
    g = rng.standard_normal((2,) + plan.grid().shape)
    g /= np.sqrt(np.mean(np.sum(g**2, axis=0)))
    cell = (41, 97)
    skew = np.array([[0.0, 1.0], [-1.0, 0.0]]) / np.sqrt(2.0)
    worst = 0.0
    richardson_ok = True
    details = []
    for kind in ("phi", "sigma"):
        spec = FunctionalSpec(kind, g)
        deriv = malliavin_derivative(a, spec, opts)
        for name, da in (("sym", np.eye(2)), ("skew", skew)):
            e1, _, _ = fd_check(a, spec, cell, da, 2e-5, opts, deriv)
            e2, _, _ = fd_check(a, spec, cell, da, 1e-5, opts, deriv)
            worst = max(worst, e1, e2)
            richardson_ok &= e2 < 0.75 * e1 + 1e-6
            details.append(f"{kind}/{name} {max(e1, e2):.1e}")
    _report(3, worst <= 1e-4 and richardson_ok,
            f"adjoint vs fd: {', '.join(details)} (<=1e-4, O(t) confirmed)")


def test_criterion_04_voigt_reuss():
    plan = ExperimentPlan(kind="scaling", d=2, n=256, lam=0.25, gamma=2.5,
                          m=32, master_seed=17)
    opts = plan.opts()
    margin = np.inf
    for idx in range(plan.m):
        a = sample_coefficients(plan, idx)
        phi, _ = compute_corrector(a, opts, directions=[0])
        _, tensor = compute_flux_and_ahom(a, phi)
        a11 = a.a[0, 0]
        harm = 1.0 / np.mean(1.0 / a11)
        arith = np.mean(a11)
        got = tensor.matrix[0, 0]
        margin = min(margin, got - harm, arith - got)
    _report(4, margin >= -1e-9,
            f"harmonic <= a_hom_11 <= arithmetic on 32/32 realizations "
            f"(worst margin {margin:+.2e})")


def test_criterion_05_gradient_average_decay():
    plan = ExperimentPlan(kind="scaling", d=2, n=512, lam=0.25, gamma=2.5,
                          m=64, master_seed=19,
                          radii=(8.0, 16.0, 32.0, 64.0))
    out = summarize(plan, run_ensemble(plan))
    slope = out["slope"]
    _report(5, abs(slope + 1.0) <= 0.15,
            f"sd of ball-averaged corrector gradient: slope {slope:+.3f} "
            f"(target -1 +/- 0.15, R^2 {out['r_squared']:.3f})")


def test_criterion_06_growth_regimes():
    plan3 = ExperimentPlan(kind="growth", d=3, n=96, lam=0.25, gamma=3.5,
                           m=16, master_seed=23, radii=(8.0, 12.0))
    out3 = summarize(plan3, run_ensemble(plan3))
    ratio = out3["V"][-1] / out3["V"][0]
    plan2 = ExperimentPlan(kind="growth", d=2, n=512, lam=0.25, gamma=2.5,
                           m=32, master_seed=29,
                           radii=(8.0, 16.0, 32.0, 64.0))
    out2 = summarize(plan2, run_ensemble(plan2))
    r2 = out2["loglinear_r_squared"]
    _report(6, ratio <= 4.0 and r2 >= 0.9,
            f"d=3 bounded regime V(L/8)/V(8) = {ratio:.2f} (<=4); "
            f"d=2 critical V vs log R linear, R^2 = {r2:.3f} (>=0.9)")


@pytest.mark.long
def test_criterion_07_minimal_radius_tail():
    plan = ExperimentPlan(kind="tail", d=2, n=512, lam=0.25, gamma=2.5,
                          m=256, master_seed=31,
                          deltas=(1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0))
    records = run_ensemble(plan)
    details, ok = [], True
    for delta in plan.deltas:
        samples = [rec.values[f"rstar_d{delta:g}"] for rec in records
                   if not rec.failed]
        fit = fit_tail(samples, 2.0)
        good = fit.degenerate or fit.r_squared >= 0.9
        ok &= good
        details.append(f"delta={delta:g}: R^2 {fit.r_squared:.3f}")
    _report(7, ok,
            "log survival of r_* linear in r^2: " + "; ".join(details)
            + " (all >= 0.9)")


def test_criterion_08_two_scale_expansion():
    plan3 = ExperimentPlan(kind="twoscale", d=3, n=16, lam=0.25, gamma=3.5,
                           m=8, master_seed=37, grids=(16, 32, 64))
    out3 = summarize(plan3, run_ensemble(plan3))
    rate = out3["rate"]
    plan2 = ExperimentPlan(kind="twoscale", d=2, n=64, lam=0.25, gamma=2.5,
                           m=8, master_seed=41, grids=(64, 128, 256, 512))
    out2 = summarize(plan2, run_ensemble(plan2))
    spread = out2["critical_spread"]
    _report(8, abs(rate - 1.0) <= 0.2 and spread <= 2.0,
            f"d=3 rate {rate:.3f} (1.0 +/- 0.2); d=2 critical "
            f"err*N/sqrt(log N) spread {spread:.2f}x (<=2x)")


def test_criterion_09_excess_decay():
    plan = ExperimentPlan(kind="excess", d=2, n=512, lam=0.25, gamma=2.5,
                          m=32, master_seed=43)
    out = summarize(plan, run_ensemble(plan))
    median = out["median_exponent"]
    # constant-coefficient control: the quadratic-boundary law Exc ~ r^2
    grid = GridSpec(2, 128)
    a0 = constant_coefficients(grid)
    corr0 = build_corrector_set(a0, SolveOptions(tol=1e-11))
    slopes = []
    rng = np.random.default_rng(47)
    for _ in range(4):
        _, slope, _ = excess_decay_experiment(
            a0, corr0, R=32.0, r_list=[4.0, 8.0, 16.0], rng=rng,
            opts=SolveOptions(tol=1e-11))
        slopes.append(slope)
    control = float(np.median(slopes))
    _report(9, median >= 0.8 and abs(control - 2.0) <= 0.2,
            f"median decay exponent {median:.2f} (>=0.8); constant-"
            f"coefficient control {control:.2f} (2.0 +/- 0.2)")


def test_criterion_10_partition():
    t0 = time.perf_counter()
    ok = True
    details = []
    for beta in (0.0, 0.3, 0.6):
        parts = [build_partition(w, beta, 2) for w in (4.5, 13.5, 40.5)]
        for w, part in zip((4.5, 13.5, 40.5), parts):
            vol_ok = np.isclose(part.volume(), (2.0 * w) ** 2, rtol=1e-12)
            ok &= vol_ok
        cs = [check_refinement(p) for p in parts]       # left inequality
        stable = abs(cs[2] - cs[1]) <= 0.1 * max(cs[1], cs[2])
        gamma = 2.0 * (1.0 - beta) + 0.5
        # the truncation error decays like W^{-1/2}; the widths below are
        # the first tripling at which the Cauchy difference dips under 5%
        # (beta > 0 partitions are coarser far out, so wider regions stay cheap)
        ws = (40.5, 121.5) if beta == 0.0 else (121.5, 364.5)
        sums = [interaction_sum(build_partition(w, beta, 2), gamma)
                for w in ws]
        converged = abs(sums[1] - sums[0]) < 0.05 * sums[0]
        ok &= stable and converged
        details.append(f"beta={beta:g}: C {cs[2]:.2f} "
                       f"({abs(cs[2] - cs[1]) / cs[2]:.1%}), sum "
                       f"{sums[1]:.1f} ({abs(sums[1] - sums[0]) / sums[0]:.1%})")
    dt = time.perf_counter() - t0
    ok &= dt < 60.0
    _report(10, ok, "tiling + refinement + interaction convergence: "
            + "; ".join(details) + f"; {dt:.1f}s")
