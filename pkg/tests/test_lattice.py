import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trilattice import (
    Convention,
    LatticeSpec,
    OptionKind,
    OptionSpec,
    RiskNeutralProbs,
    StepFactors,
    deflator_identities,
    gamma_exponent,
    price_european,
    risk_neutral_probs,
    solve_replication,
)
from trilattice.errors import (
    DegenerateVolatility,
    InvalidRiskNeutralMeasure,
    SingularDenominator,
    SingularReplication,
)
from trilattice.lattice import node_prices, value_slices

from reference import (
    aapl_natural_params,
    path_enumeration_price,
    random_valid_factors,
    state_prices,
)
from trilattice import build_step_factors, compute_UD


class TestGammaExponent:
    def test_direct_substitution(self):
        assert gamma_exponent(0.5, 1.0) == -1.0

    def test_zero_rate(self):
        assert gamma_exponent(0.0, 0.02) == 0.0

    def test_large_cap_daily_values(self):
        # scalar arithmetic oracle evaluated independently
        expected = -2.0 * 5.83e-4 / (0.0212 * 0.0212)
        assert gamma_exponent(5.83e-4, 0.0212) == pytest.approx(expected, rel=1e-15)

    def test_zero_volatility_rejected(self):
        with pytest.raises(DegenerateVolatility):
            gamma_exponent(1e-4, 0.0)


class TestStepFactors:
    def test_from_returns_arithmetic(self):
        f = StepFactors.from_returns(0.01, -0.01, 0.0, -2.0, Convention.ARITHMETIC)
        assert f.u == 1.01 and f.d == 0.99 and f.R_f == 1.0

    def test_from_returns_log(self):
        f = StepFactors.from_returns(0.01, -0.01, 5e-4, -2.0, Convention.LOG)
        assert f.u == pytest.approx(math.exp(0.01), rel=1e-15)
        assert f.d == pytest.approx(math.exp(-0.01), rel=1e-15)
        assert f.R_f == pytest.approx(math.exp(5e-4), rel=1e-15)

    def test_rejects_inverted_ordering(self):
        with pytest.raises(ValueError):
            StepFactors.from_returns(-0.01, 0.01, 0.0, -2.0, Convention.ARITHMETIC)

    def test_rejects_inconsistent_ratios(self):
        with pytest.raises(ValueError):
            StepFactors(0.01, -0.01, 1.02, 0.99, 1.0, -2.0, Convention.ARITHMETIC)


class TestRiskNeutralProbs:
    def test_zero_rate_puts_all_mass_on_middle(self):
        f = StepFactors.from_returns(0.02, -0.02, 0.0, -3.0, Convention.ARITHMETIC)
        q = risk_neutral_probs(f)
        assert q.q_u == 0.0 and q.q_d == 0.0 and q.q_m == 1.0
        assert q.pi_m == 1.0

    def test_matches_dense_state_price_solve(self, rng):
        for _ in range(300):
            f = random_valid_factors(rng)
            q = risk_neutral_probs(f)
            pi = state_prices(f.u, f.d, f.gamma, f.R_f)
            oracle = pi * f.R_f
            assert q.q_u == pytest.approx(oracle[0], abs=1e-9)
            assert q.q_m == pytest.approx(oracle[1], abs=1e-9)
            assert q.q_d == pytest.approx(oracle[2], abs=1e-9)

    def test_simplex_and_martingales(self, rng):
        for _ in range(500):
            f = random_valid_factors(rng)
            q = risk_neutral_probs(f)
            assert abs(q.q_u + q.q_m + q.q_d - 1.0) <= 1e-14
            assert abs(f.u * q.q_u + q.q_m + f.d * q.q_d - f.R_f) <= 1e-12
            g = f.gamma
            assert abs(f.u ** g * q.q_u + q.q_m + f.d ** g * q.q_d - f.R_f) <= 1e-12

    def test_reference_calibration_reprices_spot(self):
        p = aapl_natural_params()
        f = build_step_factors(p, *compute_UD(p), Convention.ARITHMETIC)
        q = risk_neutral_probs(f)
        assert q.q_u + q.q_m + q.q_d == pytest.approx(1.0, abs=1e-14)
        s0 = 192.94
        repriced = (q.pi_u * f.u + q.pi_m + q.pi_d * f.d) * s0
        assert repriced == pytest.approx(s0, rel=1e-12)

    def test_gamma_zero_is_singular(self):
        f = StepFactors.from_returns(0.02, -0.02, 1e-4, 0.0, Convention.ARITHMETIC)
        with pytest.raises(SingularDenominator):
            risk_neutral_probs(f)

    def test_arbitrage_inconsistent_inputs_rejected(self):
        # riskless growth above the up ratio cannot be a martingale measure
        f = StepFactors.from_returns(0.01, -0.01, 0.02, -2.0, Convention.ARITHMETIC)
        with pytest.raises(InvalidRiskNeutralMeasure):
            risk_neutral_probs(f)


def _single_step_oracle(f, s0, strike):
    pi = state_prices(f.u, f.d, f.gamma, f.R_f)
    payoffs = np.array([
        max(s0 * f.u - strike, 0.0),
        max(s0 - strike, 0.0),
        max(s0 * f.d - strike, 0.0),
    ])
    return float((pi * payoffs).sum())


class TestPriceEuropean:
    def test_zero_strike_call_is_spot(self, rng):
        f = random_valid_factors(rng)
        spec = LatticeSpec.constant(123.4, 12, 1.0, f)
        price = price_european(spec, OptionSpec(OptionKind.CALL, 0.0, 12))
        assert price == pytest.approx(123.4, rel=1e-12)

    def test_single_step_matches_hand_formula(self, rng):
        for _ in range(25):
            f = random_valid_factors(rng)
            s0 = float(rng.uniform(50.0, 250.0))
            strike = s0 * float(rng.uniform(0.9, 1.1))
            spec = LatticeSpec.constant(s0, 1, 1.0, f)
            got = price_european(spec, OptionSpec(OptionKind.CALL, strike, 1))
            assert got == pytest.approx(_single_step_oracle(f, s0, strike), abs=1e-10)

    def test_matches_path_enumeration(self, rng):
        for _ in range(25):
            n = int(rng.integers(1, 7))
            base = random_valid_factors(rng)
            factors = []
            while len(factors) < n:
                # rates and gamma vary per step; price ratios must not
                rf_dt = float(rng.uniform(1e-4, 6e-4))
                if not base.D < rf_dt < base.U:
                    continue
                sigma = float(rng.uniform(1e-2, 3e-2))
                cand = StepFactors.from_returns(
                    base.U, base.D, rf_dt, gamma_exponent(rf_dt, sigma),
                    Convention.ARITHMETIC,
                )
                try:
                    risk_neutral_probs(cand)
                except (InvalidRiskNeutralMeasure, SingularDenominator):
                    continue
                factors.append(cand)
            spec = LatticeSpec(100.0, n, 1.0, tuple(factors))
            kind = OptionKind.CALL if rng.random() < 0.5 else OptionKind.PUT
            strike = float(rng.uniform(80.0, 120.0))
            got = price_european(spec, OptionSpec(kind, strike, n))
            qs = [risk_neutral_probs(f) for f in factors]
            want = path_enumeration_price(
                100.0, strike, kind.value, factors[0].u, factors[0].d, qs,
                [f.R_f for f in factors],
            )
            assert got == pytest.approx(want, abs=1e-10)

    def test_call_monotone_decreasing_in_strike(self, rng):
        f = random_valid_factors(rng)
        spec = LatticeSpec.constant(100.0, 15, 1.0, f)
        strikes = np.linspace(60.0, 140.0, 17)
        calls = [price_european(spec, OptionSpec(OptionKind.CALL, k, 15))
                 for k in strikes]
        puts = [price_european(spec, OptionSpec(OptionKind.PUT, k, 15))
                for k in strikes]
        assert all(a >= b - 1e-12 for a, b in zip(calls, calls[1:]))
        assert all(a <= b + 1e-12 for a, b in zip(puts, puts[1:]))
        assert all(p >= 0.0 for p in calls + puts)

    def test_put_call_parity(self, rng):
        f = random_valid_factors(rng)
        spec = LatticeSpec.constant(100.0, 10, 1.0, f)
        strike = 95.0
        call = price_european(spec, OptionSpec(OptionKind.CALL, strike, 10))
        put = price_european(spec, OptionSpec(OptionKind.PUT, strike, 10))
        assert call - put == pytest.approx(100.0 - strike / f.R_f ** 10, rel=1e-10)

    def test_invalid_measure_reports_step(self):
        good = StepFactors.from_returns(0.02, -0.02, 2e-4, -1.5, Convention.ARITHMETIC)
        bad = StepFactors.from_returns(0.02, -0.02, 0.019, -1.5, Convention.ARITHMETIC)
        spec = LatticeSpec(100.0, 3, 1.0, (good, good, bad))
        with pytest.raises(InvalidRiskNeutralMeasure) as excinfo:
            price_european(spec, OptionSpec(OptionKind.CALL, 100.0, 3))
        assert excinfo.value.step == 2
        assert "step 2" in str(excinfo.value)

    def test_maturity_beyond_lattice_rejected(self, rng):
        f = random_valid_factors(rng)
        spec = LatticeSpec.constant(100.0, 3, 1.0, f)
        with pytest.raises(ValueError):
            price_european(spec, OptionSpec(OptionKind.CALL, 100.0, 4))

    def test_varying_price_ratios_rejected(self, rng):
        a = random_valid_factors(rng, convention=Convention.ARITHMETIC)
        b = random_valid_factors(rng, convention=Convention.ARITHMETIC)
        assert a.u != b.u
        with pytest.raises(ValueError):
            LatticeSpec(100.0, 2, 1.0, (a, b))


class TestReplication:
    def test_flat_payoff_is_bond_only(self, rng):
        f = random_valid_factors(rng)
        w = solve_replication(100.0, 1.0, f, (5.0, 5.0, 5.0))
        assert w.a == pytest.approx(0.0, abs=1e-10)
        assert w.c * 100.0 ** f.gamma == pytest.approx(0.0, abs=1e-10)
        assert w.b * 1.0 * f.R_f == pytest.approx(5.0, rel=1e-10)

    def test_stock_payoff_is_stock_only(self, rng):
        f = random_valid_factors(rng)
        s = 80.0
        w = solve_replication(s, 1.0, f, (s * f.u, s, s * f.d))
        assert w.a == pytest.approx(1.0, rel=1e-10)
        assert w.b == pytest.approx(0.0, abs=1e-10)
        assert w.c * s ** f.gamma == pytest.approx(0.0, abs=1e-10)

    def test_single_step_portfolio_reprices_option(self, rng):
        for _ in range(10):
            f = random_valid_factors(rng)
            s0, strike = 100.0, float(rng.uniform(85.0, 115.0))
            payoffs = (
                max(s0 * f.u - strike, 0.0),
                max(s0 - strike, 0.0),
                max(s0 * f.d - strike, 0.0),
            )
            w = solve_replication(s0, 1.0, f, payoffs)
            spec = LatticeSpec.constant(s0, 1, 1.0, f)
            want = price_european(spec, OptionSpec(OptionKind.CALL, strike, 1))
            assert w.value(s0, 1.0, f.gamma) == pytest.approx(want, abs=1e-10)

    def test_every_node_of_small_tree(self, rng):
        for _ in range(4):
            f = random_valid_factors(rng)
            n = 5
            spec = LatticeSpec.constant(100.0, n, 1.0, f)
            opt = OptionSpec(OptionKind.CALL, float(rng.uniform(90, 110)), n)
            slices = value_slices(spec, opt)
            bond = 1.0
            for k in range(n):
                prices = node_prices(spec, k)
                for a in range(k + 1):
                    for b in range(k + 1 - a):
                        nxt = (
                            slices[k + 1][a + 1, b],
                            slices[k + 1][a, b],
                            slices[k + 1][a, b + 1],
                        )
                        w = solve_replication(prices[a, b], bond, f, nxt)
                        got = w.value(prices[a, b], bond, f.gamma)
                        assert got == pytest.approx(slices[k][a, b], abs=1e-10)
                bond *= f.R_f

    def test_singular_system_raises(self):
        f = StepFactors.from_returns(0.02, -0.02, 1e-4, 0.0, Convention.ARITHMETIC)
        with pytest.raises(SingularReplication):
            solve_replication(100.0, 1.0, f, (1.0, 2.0, 3.0))


class TestDeflatorIdentities:
    def test_zero_rate_residuals_vanish(self):
        f = StepFactors.from_returns(0.02, -0.02, 0.0, -3.0, Convention.ARITHMETIC)
        q = risk_neutral_probs(f)
        assert deflator_identities(f, q) == (0.0, 0.0, 0.0)

    def test_random_sweep_within_tolerance(self, rng):
        for _ in range(300):
            f = random_valid_factors(rng)
            q = risk_neutral_probs(f)
            assert max(deflator_identities(f, q)) <= 1e-12

    def test_perturbation_is_detected(self, rng):
        f = random_valid_factors(rng)
        q = risk_neutral_probs(f)
        bumped = RiskNeutralProbs(
            q.q_u + 1e-3, q.q_m, q.q_d,
            (q.q_u + 1e-3) / f.R_f, q.pi_m, q.pi_d,
        )
        residuals = deflator_identities(f, bumped)
        assert residuals[0] == pytest.approx(1e-3, rel=1e-6)


@settings(max_examples=60, deadline=None)
@given(
    p_m=st.floats(0.0, 0.5),
    p_u_frac=st.floats(0.3, 0.7),
    sigma=st.floats(0.01, 0.03),
    rf=st.floats(1e-4, 8e-4),
    log_conv=st.booleans(),
)
def test_property_valid_factors_admit_valid_measure(p_m, p_u_frac, sigma, rf, log_conv):
    from trilattice import NaturalParams

    p_u = p_u_frac * (1.0 - p_m)
    p = NaturalParams(p_u=p_u, p_m=p_m, p_d=1.0 - p_m - p_u,
                      mu_r=0.0, sigma_r=sigma, r_f=rf)
    conv = Convention.LOG if log_conv else Convention.ARITHMETIC
    try:
        f = build_step_factors(p, *compute_UD(p), conv)
        q = risk_neutral_probs(f)
    except InvalidRiskNeutralMeasure:
        return  # genuinely infeasible corner; validation is the point
    assert abs(q.q_u + q.q_m + q.q_d - 1.0) <= 1e-14
    assert abs(f.u * q.q_u + q.q_m + f.d * q.q_d - f.R_f) <= 1e-12
