"""Single-event kernels: conservation, fixed-point laws, and rate tables."""

import math

import numpy as np
import pytest
from scipy import stats as sp_stats

from mixflow.errors import NegativeStateError, OutOfRangeError, UnsupportedModelError
from mixflow.kernels import (
    bep_drift_diffusion,
    harmonic_discrete_move,
    harmonic_edge_apply,
    harmonic_hidden_reservoir_apply,
    harmonic_hidden_update,
    harmonic_mass_move,
    harmonic_reservoir_apply,
    irw_rates,
    irw_vector_field,
    kmp_continuous_edge_apply,
    kmp_discrete_edge_apply,
    kmp_discrete_reservoir_apply,
    kmp_hidden_edge_apply,
    kmp_hidden_reservoir_apply,
    kmp_reservoir_apply,
    sip_rates,
)
from mixflow.models import (
    Family,
    ModelSpec,
    ReservoirKind,
    ReservoirSpec,
    build_graph,
    chain_graph,
    validate_model,
)
from mixflow.rng import RngStream


def _bep_model(graph, reservoirs, two_s=1.0):
    return validate_model(graph, ModelSpec(Family.BEP, two_s=two_s, reservoirs=reservoirs))


# --- KMP-type kernels -----------------------------------------------------------------


def test_kmp_discrete_edge_conserves_particles():
    gen = RngStream(11).generator()
    for _ in range(200):
        x, y = kmp_discrete_edge_apply(5, 3, 1.7, gen)
        assert x + y == 8 and x >= 0 and y >= 0


def test_kmp_discrete_edge_empty_consumes_no_randomness():
    gen = RngStream(12).generator()
    before = gen.bit_generator.state
    assert kmp_discrete_edge_apply(0, 0, 1.0, gen) == (0, 0)
    assert gen.bit_generator.state == before


def test_kmp_discrete_edge_two_particles_uniform():
    # n = 2 at unit shape redistributes to 0/1/2 with probability 1/3 each.
    gen = RngStream(13).generator()
    m = 15_000
    counts = np.zeros(3)
    for _ in range(m):
        k, _ = kmp_discrete_edge_apply(2, 0, 1.0, gen)
        counts[k] += 1
    se = math.sqrt((1.0 / 3.0) * (2.0 / 3.0) / m)
    np.testing.assert_array_less(np.abs(counts / m - 1.0 / 3.0), 5 * se)


def test_kmp_continuous_edge_conserves_and_is_uniform():
    gen = RngStream(14).generator()
    m = 5000
    fr = np.empty(m)
    for t in range(m):
        x, y = kmp_continuous_edge_apply(1.25, 0.75, 1.0, gen)
        assert x + y == pytest.approx(2.0, rel=1e-12)
        assert x >= 0 and y >= 0
        fr[t] = x / 2.0
    assert sp_stats.kstest(fr, "uniform").statistic < 0.028


def test_kmp_hidden_edge_collapses_to_common_value():
    gen = RngStream(15).generator()
    vals = []
    for _ in range(4000):
        a, b = kmp_hidden_edge_apply(1.0, 3.0, 2.0, gen)
        assert a == b and 1.0 <= a <= 3.0
        vals.append(a)
    vals = np.asarray(vals)
    se = vals.std(ddof=1) / math.sqrt(vals.size)
    assert abs(vals.mean() - 2.0) < 5 * se


def test_kmp_reservoir_fixed_point_is_gamma():
    # Gamma(two_s, theta*) in, one kernel event, Gamma(two_s, theta*) out (exactly).
    two_s, theta = 1.5, 0.8
    stream = RngStream(16)
    gen = stream.generator()
    x = sp_stats.gamma.rvs(two_s, scale=theta, size=5000,
                           random_state=np.random.default_rng(1))
    out = np.array([kmp_reservoir_apply(v, theta, two_s, gen) for v in x])
    stat = sp_stats.kstest(out, lambda q: sp_stats.gamma.cdf(q, two_s, scale=theta)).statistic
    assert stat < 0.028


def test_kmp_discrete_reservoir_fixed_point_moments():
    # negative binomial in, negative binomial out: mean 2s*theta, var 2s*theta*(1+theta)
    two_s, theta = 1.5, 0.8
    gen = RngStream(17).generator()
    m = 20_000
    x = sp_stats.nbinom.rvs(two_s, 1.0 / (1.0 + theta), size=m,
                            random_state=np.random.default_rng(2))
    out = np.array([kmp_discrete_reservoir_apply(int(v), theta, two_s, gen) for v in x])
    mean, var = two_s * theta, two_s * theta * (1.0 + theta)
    assert abs(out.mean() - mean) < 5 * math.sqrt(var / m)
    assert abs(out.var(ddof=1) - var) < 0.12
    assert kmp_discrete_reservoir_apply(0, 0.0, two_s, gen) == 0


def test_kmp_hidden_reservoir_bounds_and_mean():
    gen = RngStream(18).generator()
    vals = np.array([kmp_hidden_reservoir_apply(0.5, 2.5, 1.0, gen) for _ in range(4000)])
    assert np.all((vals >= 0.5) & (vals <= 2.5))
    se = vals.std(ddof=1) / math.sqrt(vals.size)
    assert abs(vals.mean() - 1.5) < 5 * se  # E[B] = 1/2 pulls halfway


# --- harmonic-type kernels --------------------------------------------------------------


def test_harmonic_mass_move_conserves():
    gen = RngStream(19).generator()
    for _ in range(300):
        a, b = harmonic_mass_move(2.0, 1.0, 1.0, 1e-3, gen)
        assert a + b == pytest.approx(3.0, rel=1e-12)
        assert 0.0 <= a <= 2.0 * (1.0 - 1e-3) and b >= 1.0


def test_harmonic_hidden_update_moves_toward_target():
    gen = RngStream(20).generator()
    eps = 0.01
    for _ in range(300):
        out = harmonic_hidden_update(1.0, 2.0, 1.5, eps, gen)
        assert 1.0 + eps * 1.0 <= out <= 2.0


def test_harmonic_discrete_move_conserves_and_weights():
    gen = RngStream(21).generator()
    m = 15_000
    counts = np.zeros(3)
    for _ in range(m):
        a, b = harmonic_discrete_move(3, 1, 1.0, gen)
        assert a + b == 4 and 0 <= a <= 2
        counts[3 - a - 1] += 1
    # k ∝ 1/k over k = 1..3: probabilities 6/11, 3/11, 2/11
    probs = np.array([6.0, 3.0, 2.0]) / 11.0
    se = np.sqrt(probs * (1 - probs) / m)
    np.testing.assert_array_less(np.abs(counts / m - probs), 5 * se)


def test_harmonic_discrete_move_edge_cases():
    gen = RngStream(22).generator()
    before = gen.bit_generator.state
    assert harmonic_discrete_move(0, 7, 1.0, gen) == (0, 7)
    assert gen.bit_generator.state == before
    with pytest.raises(OutOfRangeError):
        harmonic_discrete_move(5, 0, 1.0, gen, weights=np.array([1.0, 0.5]))


def test_harmonic_edge_apply_dispatch():
    gen = RngStream(23).generator()
    a, b = harmonic_edge_apply((2.0, 1.0), 1.0, 1e-3, Family.HARMONIC_CONTINUOUS, gen)
    assert a + b == pytest.approx(3.0, rel=1e-12)
    t = harmonic_edge_apply((1.0, 2.0), 1.0, 1e-3, Family.HIDDEN_HARMONIC, gen)
    assert (t[0] == 1.0) != (t[1] == 2.0)  # exactly one side moved
    n = harmonic_edge_apply((3, 2), 1.0, 1e-3, Family.HARMONIC_DISCRETE, gen)
    assert n[0] + n[1] == 5
    with pytest.raises(UnsupportedModelError):
        harmonic_edge_apply((1.0, 1.0), 1.0, 1e-3, Family.KMP_CONTINUOUS, gen)


@pytest.mark.parametrize("kind", [ReservoirKind.STANDARD, ReservoirKind.SAMPLED])
def test_harmonic_reservoir_stationary_mean(kind):
    # one-site balance at unit shape: mean(x) * (1 - eps) = theta* e^-eps (STANDARD)
    # and mean(x) = 2s theta* (SAMPLED); both targets are 1 here up to O(eps).
    gen = RngStream(24).generator()
    eps, theta = 1e-3, 1.0
    x, acc = 1.0, 0.0
    m = 20_000
    for _ in range(m):
        x = harmonic_reservoir_apply(x, theta, 1.0, eps, kind, gen)
        acc += x
    assert abs(acc / m - 1.0) < 0.06


def test_harmonic_reservoir_nonnegative_and_zero_target():
    gen = RngStream(25).generator()
    x = 1.0
    for _ in range(200):
        x = harmonic_reservoir_apply(x, 0.0, 1.5, 0.01, ReservoirKind.SAMPLED, gen)
        assert x >= 0.0
    assert x < 1.0  # zero target only drains


def test_harmonic_hidden_reservoir_bounds():
    gen = RngStream(26).generator()
    eps = 0.05
    for _ in range(200):
        out = harmonic_hidden_reservoir_apply(2.0, 0.5, 1.0, eps, gen)
        assert 0.5 <= out <= 2.0 - eps * 1.5


# --- inclusion / walker rates -------------------------------------------------------------


def _rate_chain(family, eta_alpha_gamma):
    g = chain_graph(2, edge_weight=2.0, coupling=1.0)
    spec = validate_model(
        g,
        ModelSpec(
            family,
            two_s=1.5,
            reservoirs={
                1: ReservoirSpec(alpha=0.5, gamma=1.0),
                2: ReservoirSpec(alpha=0.25, gamma=2.0),
            },
        ),
    )
    return g, spec


def test_sip_rates_hand_table():
    g, spec = _rate_chain(Family.SIP, None)
    rates = dict(sip_rates({1: 2, 2: 0}, g, spec))
    assert rates == {
        ("move", 1, 2): 2.0 * 2 * 1.5,          # w n_1 (2s + n_2)
        ("birth", 1): 0.5 * (1.5 + 2),
        ("death", 1): 1.0 * 2,
        ("birth", 2): 0.25 * 1.5,
    }
    with pytest.raises(NegativeStateError):
        sip_rates({1: -1, 2: 0}, g, spec)


def test_irw_rates_hand_table():
    g, spec = _rate_chain(Family.IRW, None)
    rates = dict(irw_rates({1: 3, 2: 1}, g, spec))
    assert rates == {
        ("move", 1, 2): 2.0 * 3,
        ("move", 2, 1): 2.0 * 1,
        ("birth", 1): 0.5,
        ("death", 1): 3.0,
        ("birth", 2): 0.25,
        ("death", 2): 2.0,
    }


def test_irw_vector_field_fixed_point():
    g = chain_graph(2, edge_weight=1.0, coupling=1.0)
    spec = validate_model(
        g,
        ModelSpec(
            Family.IRW,
            reservoirs={
                1: ReservoirSpec(alpha=2.0, gamma=1.0),
                2: ReservoirSpec(alpha=2.0, gamma=1.0),
            },
        ),
    )
    # symmetric boundaries: z = alpha/gamma = 2 at both sites kills the field
    np.testing.assert_allclose(irw_vector_field([2.0, 2.0], g, spec), 0.0, atol=1e-14)
    out = irw_vector_field([0.0, 0.0], g, spec)
    np.testing.assert_allclose(out, [2.0, 2.0], rtol=1e-14)


# --- energy-exchange diffusion --------------------------------------------------------------


def test_bep_drift_diffusion_hand_values():
    g = chain_graph(2, edge_weight=2.0, coupling=1.0)
    spec = _bep_model(
        g,
        {1: ReservoirSpec(alpha=0.5, gamma=1.0), 2: ReservoirSpec(alpha=0.5, gamma=1.0)},
        two_s=1.5,
    )
    dd = bep_drift_diffusion([1.0, 3.0], g, spec)
    # edge part: 1.5 * 2 * (z_j - z_i); reservoir part: c (2s a - (g - a) z)
    np.testing.assert_allclose(
        dd.drift,
        [1.5 * 2 * 2 + (1.5 * 0.5 - 0.5 * 1.0), -1.5 * 2 * 2 + (1.5 * 0.5 - 0.5 * 3.0)],
        rtol=1e-14,
    )
    np.testing.assert_allclose(dd.edge_var, [2.0 * 2.0 * 1.0 * 3.0], rtol=1e-14)
    np.testing.assert_allclose(dd.reservoir_var, [2 * 0.5 * 1.0, 2 * 0.5 * 3.0], rtol=1e-14)
    np.testing.assert_allclose(
        dd.total_noise_var(), [12.0 + 1.0, 12.0 + 3.0], rtol=1e-14
    )


def test_bep_drift_diffusion_rejects_negative_energy():
    g = chain_graph(2, edge_weight=1.0, coupling=1.0)
    spec = _bep_model(
        g, {1: ReservoirSpec(alpha=0.5, gamma=1.0), 2: ReservoirSpec(alpha=0.5, gamma=1.0)}
    )
    with pytest.raises(NegativeStateError):
        bep_drift_diffusion([-0.1, 1.0], g, spec)


def test_bep_drift_diffusion_isolated_site():
    g = build_graph([1], edges=[], couplings=[(1, 2.0)])
    spec = _bep_model(g, {1: ReservoirSpec(alpha=1.0, gamma=2.0)})
    dd = bep_drift_diffusion([0.5], g, spec)
    assert dd.edge_sites.shape == (0, 2)
    np.testing.assert_allclose(dd.drift, [2.0 * (1.0 - 1.0 * 0.5)], rtol=1e-14)
    np.testing.assert_allclose(dd.reservoir_var, [2 * 2.0 * 1.0 * 0.5], rtol=1e-14)
