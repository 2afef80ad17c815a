"""Acceptance suite: the eleven headline checks at full budgets.

Each test pins its tolerances, sample budgets and seeds, prints a one-line
verdict, and asserts the advertised bound.  Wall-clock limits are asserted
where the guarantee includes one; they are generous against the measured
runtimes, so they only trip on genuine regressions.

Layout: criteria 1-4 are deterministic identity grids, 5-8 compare sampled
steady states against closed-form laws, 9-10 cover the particle/diffusion
mixture bridges, and 11 establishes truncation and step-size convergence.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from mixflow import ness
from mixflow.duality import (
    check_kmp_edge_duality,
    check_moment_relation,
    check_poisson_intertwiner,
    check_reservoir_intertwining,
    mc_mixture_duality,
)
from mixflow.models import DualIndex, Family, ReservoirSpec, chain_graph
from mixflow.rng import RngStream

TWO_S_GRID = (0.25, 0.5, 1.0, 2.0, 3.5)


def _verdict(label: str, ok: bool, detail: str) -> None:
    print(f"{label}: {detail} -> {'PASS' if ok else 'FAIL'}")


# ---------------------------------------------------------------------------
# 1. edge duality on the shape grid
# ---------------------------------------------------------------------------


def test_criterion_01_edge_duality_grid() -> None:
    """Two-site redistribution duality to 1e-10 over shapes, orders, masses."""
    theta_grid = (0.0, 0.75, 1.5, 3.0)
    start = time.monotonic()
    worst = 0.0
    checks = 0
    for two_s in TWO_S_GRID:
        for total in range(0, 11):  # |xi| <= 10
            for a in range(total + 1):
                xi = (a, total - a)
                for ta in theta_grid:
                    for tb in theta_grid:
                        rep = check_kmp_edge_duality(xi, (ta, tb), two_s,
                                                     tol=1e-10)
                        worst = max(worst, rep.abs_error)
                        checks += 1
                        assert rep.passed, (xi, (ta, tb), two_s, rep.abs_error)
    elapsed = time.monotonic() - start
    _verdict("criterion-01 edge-duality",
             worst < 1e-10 and elapsed < 10.0,
             f"{checks} checks, max |error| {worst:.2e}, {elapsed:.1f}s")
    assert worst < 1e-10
    assert elapsed < 10.0


# ---------------------------------------------------------------------------
# 2. reservoir moment recursion
# ---------------------------------------------------------------------------


def test_criterion_02_moment_relation() -> None:
    """Dual absorption moments against measure moments, n <= 20, k = 1..n."""
    worst = 0.0
    checks = 0
    for two_s in TWO_S_GRID:
        for n in range(1, 21):
            for k in range(1, n + 1):
                rep = check_moment_relation(n, k, two_s=two_s, tol=1e-10)
                worst = max(worst, rep.abs_error)
                checks += 1
                assert rep.passed, (n, k, two_s, rep.abs_error)
                assert rep.detail["error_scale"] == "relative"
    _verdict("criterion-02 moment-relation", worst < 1e-10,
             f"{checks} checks, max relative error {worst:.2e}")
    assert worst < 1e-10


# ---------------------------------------------------------------------------
# 3. reservoir intertwining up to order 40
# ---------------------------------------------------------------------------


def test_criterion_03_reservoir_intertwining() -> None:
    """Both reservoir kernels intertwine with their hidden update, n <= 40."""
    theta_grid = (0.0, 0.35, 0.8, 1.2)
    worst = 0.0
    checks = 0
    for family in ("kmp", "harmonic"):
        for two_s in TWO_S_GRID:
            for n in range(0, 41):
                for theta in theta_grid:
                    for theta_star in theta_grid:
                        rep = check_reservoir_intertwining(
                            n, theta, theta_star, two_s, family, tol=1e-10)
                        worst = max(worst, rep.abs_error)
                        checks += 1
                        assert rep.passed, (family, n, theta, theta_star,
                                            two_s, rep.abs_error)
    # At shape one the particle-side average collapses to the closed
    # uniform-average sum; the check must exercise that route.
    route = check_reservoir_intertwining(12, 0.8, 0.35, 1.0, "kmp")
    assert route.name == "reservoir-intertwining-kmp"
    assert route.detail["routes"][1] == "uniform-average closed sum"
    _verdict("criterion-03 reservoir-intertwining", worst < 1e-10,
             f"{checks} checks, max |error| {worst:.2e}")
    assert worst < 1e-10


# ---------------------------------------------------------------------------
# 4. generator intertwining on scaled monomials
# ---------------------------------------------------------------------------


def test_criterion_04_poisson_intertwiner() -> None:
    """Finite-difference generator comparison, orders <= 8, z in {0.1, 1, 5}."""
    start = time.monotonic()
    rep = check_poisson_intertwiner(n_max=8, z_grid=(0.1, 1.0, 5.0), tol=1e-6)
    elapsed = time.monotonic() - start
    _verdict("criterion-04 poisson-intertwiner",
             rep.passed and elapsed < 60.0,
             f"max |error| {rep.abs_error:.2e} vs 1e-06, {elapsed:.1f}s")
    assert rep.passed
    assert rep.abs_error < 1e-6
    assert elapsed < 60.0


# ---------------------------------------------------------------------------
# 5. single-site boundary-driven law
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("two_s,label", [(1.0, "uniform"), (2.0, "beta-2-2")])
def test_criterion_05_single_site_law(two_s: float, label: str) -> None:
    """KS below 0.01 against the exact rescaled-Beta law at 1e5 samples."""
    start = time.monotonic()
    rep = ness.hidden_single_site_experiment(
        two_s, 0.0, 1.0, epsilon=1e-4, n_samples=100_000,
        stream=RngStream(105))
    elapsed = time.monotonic() - start
    _verdict(f"criterion-05 single-site[{label}]",
             rep.passed and elapsed < 300.0,
             f"ks {rep.statistic:.5f} vs 0.01, {elapsed:.1f}s")
    assert rep.statistic < 0.01
    assert rep.passed
    assert elapsed < 300.0


# ---------------------------------------------------------------------------
# 6. driven chain profile and covariance
# ---------------------------------------------------------------------------


def test_criterion_06_hidden_chain_moments() -> None:
    """Three-site means at i/4 and two-site covariances, three sigma."""
    start = time.monotonic()
    means = ness.ness_chain_experiment(
        Family.HIDDEN_HARMONIC, 3, 1.0, 0.0, 1.0, epsilon=1e-3,
        n_samples=40_000, stream=RngStream(61))
    cov = ness.ness_chain_experiment(
        Family.HIDDEN_HARMONIC, 2, 2.0, 0.0, 1.0, epsilon=1e-3,
        n_samples=40_000, stream=RngStream(106))
    elapsed = time.monotonic() - start
    worst = max(abs(r.statistic) for r in means + cov)
    ok = all(r.passed for r in means + cov)
    _verdict("criterion-06 hidden-chain", ok and elapsed < 600.0,
             f"{len(means) + len(cov)} checks, worst |z| {worst:.2f} vs 3, "
             f"{elapsed:.1f}s")
    failures = [(r.name, r.statistic) for r in means + cov if not r.passed]
    assert not failures, failures
    assert elapsed < 600.0


# ---------------------------------------------------------------------------
# 7. mixture propagation between a particle model and its hidden twin
# ---------------------------------------------------------------------------


def test_criterion_07_mixture_propagation() -> None:
    """Dual moments vs hidden averages at t=1, all orders up to (2, 2)."""
    graph = chain_graph(2, coupling=0.0)
    theta = np.array([0.5, 1.5])
    indices = [(1, 0), (0, 1), (1, 1), (2, 0), (0, 2), (2, 1), (1, 2), (2, 2)]
    start = time.monotonic()
    worst = 0.0
    failures = []
    for k, (a, b) in enumerate(indices):
        xi = DualIndex({v: e for v, e in zip((1, 2), (a, b)) if e})
        rep = mc_mixture_duality(
            graph, (Family.KMP_CONTINUOUS, Family.HIDDEN_KMP), xi, theta,
            1.0, 100_000, RngStream(107).child(k), two_s=1.0)
        worst = max(worst, rep.abs_error / rep.tol if rep.tol else 0.0)
        if not rep.passed:
            failures.append(((a, b), rep.abs_error, rep.tol))
    elapsed = time.monotonic() - start
    _verdict("criterion-07 mixture-propagation",
             not failures and elapsed < 600.0,
             f"{len(indices)} dual indices, worst |diff|/3se {worst:.2f}, "
             f"{elapsed:.1f}s")
    assert not failures, failures
    assert elapsed < 600.0


# ---------------------------------------------------------------------------
# 8. equal boundaries collapse to equilibrium
# ---------------------------------------------------------------------------


def test_criterion_08_equal_reservoir_degeneracy() -> None:
    """Equal boundary parameters freeze the hidden state: sup gap < 1e-3."""
    kmp = ness.hidden_equilibrium_degeneracy_check(
        4, 1.0, 0.9, stream=RngStream(108))
    harmonic = ness.hidden_equilibrium_degeneracy_check(
        4, 2.0, 0.9, family="HIDDEN_HARMONIC", epsilon=1e-3,
        stream=RngStream(108))
    sup = max(kmp.statistic, harmonic.statistic)
    _verdict("criterion-08 degeneracy", sup < 1e-3,
             f"sup distance {sup:.2e} vs 1e-03")
    assert kmp.passed and harmonic.passed
    assert sup < 1e-3


# ---------------------------------------------------------------------------
# 9. inclusion counts as a Poisson mixture of their diffusion
# ---------------------------------------------------------------------------


def test_criterion_09_sip_bep_mixture() -> None:
    """Factorial-moment bridge, TV < 0.02 near 1e6 events, mean within 2%."""
    reps = ness.sip_poisson_mixture_experiment(
        chain_graph(1), 1.0, {1: ReservoirSpec(alpha=0.5, gamma=1.5)},
        n_samples=200_000, dt=1e-3, stream=RngStream(109))
    by_name = {r.name: r for r in reps}
    tv = by_name["single-site-pmf-tv"]
    mean = by_name["bep-mean-relative"]
    ok = all(r.passed for r in reps)
    _verdict("criterion-09 sip-bep-mixture", ok,
             f"tv {tv.statistic:.5f} vs 0.02 at {tv.metadata['n_events']} "
             f"events, mean error {mean.statistic:.4f} vs 0.02")
    assert tv.metadata["n_events"] > 900_000
    assert tv.statistic < 0.02
    assert mean.statistic < 0.02
    assert ok, [(r.name, r.statistic) for r in reps if not r.passed]


# ---------------------------------------------------------------------------
# 10. independent walkers keep a Poisson product profile
# ---------------------------------------------------------------------------


def test_criterion_10_irw_poisson_product() -> None:
    """Mean at the flow fixed point, unit dispersion, zero cross covariance."""
    start = time.monotonic()
    reps = ness.irw_poisson_product_experiment(
        chain_graph(3), {1: ReservoirSpec(alpha=0.6, gamma=0.3),
                         3: ReservoirSpec(alpha=0.2, gamma=0.1)},
        n_samples=50_000, stream=RngStream(110))
    elapsed = time.monotonic() - start
    disp = max(r.statistic for r in reps if "dispersion" in r.name)
    ok = all(r.passed for r in reps)
    _verdict("criterion-10 irw-product", ok and elapsed < 300.0,
             f"{len(reps)} checks, worst dispersion gap {disp:.4f} vs 0.03, "
             f"{elapsed:.1f}s")
    assert ok, [(r.name, r.statistic) for r in reps if not r.passed]
    assert elapsed < 300.0


# ---------------------------------------------------------------------------
# 11. truncation and step-size convergence
# ---------------------------------------------------------------------------


def test_criterion_11_epsilon_convergence() -> None:
    """Steady-state statistics drift < 1% (or < 1 se) from eps 1e-3 to 1e-4."""
    single = ness.epsilon_convergence_sweep(
        "hidden-single-site", [1e-3, 1e-4], stream=RngStream(211),
        n_samples=150_000)
    chain = ness.epsilon_convergence_sweep(
        "hidden-chain", [1e-3, 1e-4], stream=RngStream(112),
        n_samples=40_000)
    reports = single + chain
    worst_rel = max(r.detail["rel_change"] for r in reports)
    ok = all(r.passed for r in reports)
    _verdict("criterion-11 epsilon-sweep", ok,
             f"{len(reports)} drift checks, worst relative change "
             f"{worst_rel:.4%}")
    assert ok, [(r.name, r.detail) for r in reports if not r.passed]
    assert all(math.isfinite(r.statistic) for r in reports)


def test_criterion_11_dt_halving() -> None:
    """Halving the diffusion step moves the stationary mean by < 1%."""
    reports = ness.dt_convergence_check(
        1.0, 1.0, 2.0, [1e-3, 5e-4], stream=RngStream(115))
    (rep,) = reports
    rel = abs(rep.detail["value"] - rep.detail["value_prev"]) \
        / rep.detail["value_prev"]
    _verdict("criterion-11 dt-halving", rep.passed,
             f"mean {rep.detail['value_prev']:.5f} -> {rep.detail['value']:.5f}"
             f" ({rel:.4%} change vs 1%)")
    assert rep.passed
    assert rel < 0.01
