"""
Unit tests for utility metrics, reference points and welfare functions.

Tests:
- Generation and export metrics
- Fallback/utopia envelopes per scheme, including clamping and degenerate agents
- KS ratios, Nash product and the utilitarian-egalitarian mix
- Gini and Jain indices, including the weak-Pareto conflict of Gini
- Affine invariance of the KS ratios and of the Nash argmax (property based)
"""

import sys
from pathlib import Path

import numpy as np
import pydantic
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

# Add package to path
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from fair_curtail.api.schemas import MetricKind, SchemeConfig, SchemeType, Snapshot
from fair_curtail.core.exceptions import (
    AllZero,
    DegenerateAgent,
    DimensionMismatch,
    EmptyAgentSet,
    NegativeGain,
    NonPositiveScale,
    ValidationError,
)
from fair_curtail.services.welfare import (
    EXPORT,
    GENERATION,
    ReferencePoints,
    UtilityMetric,
    apply_affine,
    cfc_welfare,
    curtailment,
    evaluate_metric,
    gini,
    jain,
    ks_ratios,
    ks_welfare,
    metric_for,
    nash_welfare,
    reference_points,
    transform_references,
)


def origin_refs(utopia, fallback=None) -> ReferencePoints:
    """Reference points in the generation metric with zero demand."""
    utopia = np.asarray(utopia, dtype=float)
    fallback = np.zeros_like(utopia) if fallback is None else np.asarray(fallback, dtype=float)
    return ReferencePoints(
        fallback_u=fallback,
        utopia_u=utopia,
        fallback_x=fallback,
        utopia_x=utopia,
        included=utopia > fallback,
    )


_scale = st.floats(min_value=0.1, max_value=10.0, allow_nan=False, allow_infinity=False)
_shift = st.floats(min_value=-5.0, max_value=5.0, allow_nan=False, allow_infinity=False)
_fraction = st.floats(min_value=0.0, max_value=1.0, allow_nan=False, allow_infinity=False)


class TestUtilityMetric:
    """Test per-agent utility proxies."""
    
    def setup_method(self):
        """Set up test fixtures."""
        self.snap = Snapshot(demand=(1.0, 5.0), potential=(6.0, 6.0))
    
    def test_generation_is_identity(self):
        """Test u(x) = x under the generation metric."""
        u = evaluate_metric(GENERATION, self.snap, np.array([3.0, 4.0]))
        
        assert np.array_equal(u, [3.0, 4.0])
    
    def test_export_subtracts_demand(self):
        """Test u(x) = x - d under the export metric."""
        u = evaluate_metric(EXPORT, self.snap, np.array([3.0, 4.0]))
        
        assert np.array_equal(u, [2.0, -1.0])
    
    def test_export_zero_at_self_consumption(self):
        """Test that x = d exports nothing."""
        u = evaluate_metric(EXPORT, self.snap, self.snap.d)
        
        assert np.array_equal(u, [0.0, 0.0])
    
    def test_wrong_envelope_length(self):
        """Test that an envelope of the wrong length is a DimensionMismatch."""
        with pytest.raises(DimensionMismatch):
            evaluate_metric(GENERATION, self.snap, np.array([1.0, 2.0, 3.0]))
    
    def test_invert_round_trip(self):
        """Test that invert undoes evaluate for a scaled export metric."""
        metric = EXPORT.compose(np.array([2.0, 0.5]), np.array([1.0, -1.0]))
        x = np.array([2.5, 5.5])
        
        assert np.allclose(metric.invert(self.snap, metric.evaluate(self.snap, x)), x)
    
    def test_evaluate_many_matches_rows(self):
        """Test that batch evaluation equals per-row evaluation."""
        X = np.array([[0.0, 0.0], [3.0, 4.0], [6.0, 6.0]])
        
        batch = EXPORT.evaluate_many(self.snap, X)
        
        for row, expected in zip(X, batch):
            assert np.array_equal(EXPORT.evaluate(self.snap, row), expected)
    
    def test_metric_for_scheme(self):
        """Test metric selection per scheme."""
        assert metric_for(SchemeType.OPF_GENERATION).kind == MetricKind.GENERATION
        assert metric_for(SchemeType.EGALITARIAN).kind == MetricKind.GENERATION
        assert metric_for(SchemeType.OPF_EXPORT).kind == MetricKind.EXPORT
        assert metric_for(SchemeType.NASH_EXPORT).kind == MetricKind.EXPORT
    
    def test_compose_stacks_maps(self):
        """Test that composing two affine maps multiplies scales and chains shifts."""
        metric = UtilityMetric(MetricKind.GENERATION, scale=(2.0, 2.0), shift=(1.0, 0.0))
        composed = metric.compose(np.array([3.0, 1.0]), np.array([0.0, 5.0]))
        
        assert composed.scale == (6.0, 2.0)
        assert composed.shift == (3.0, 5.0)


class TestReferencePoints:
    """Test fallback and utopia envelopes of each scheme."""
    
    def setup_method(self):
        """Set up test fixtures."""
        self.snap = Snapshot(demand=(2.0, 1.0), potential=(5.0, 3.0))
    
    def test_opf_generation(self):
        """Test u0 = 0 and umax = p_bar."""
        refs = reference_points(SchemeConfig(scheme=SchemeType.OPF_GENERATION), self.snap)
        
        assert np.array_equal(refs.fallback_u, [0.0, 0.0])
        assert np.array_equal(refs.utopia_u, [5.0, 3.0])
    
    def test_opf_export(self):
        """Test fallback at self-consumption and utopia at the potential."""
        refs = reference_points(SchemeConfig(scheme=SchemeType.OPF_EXPORT), self.snap)
        
        assert np.array_equal(refs.fallback_x, [2.0, 1.0])
        assert np.array_equal(refs.utopia_x, [5.0, 3.0])
        assert np.array_equal(refs.fallback_u, [0.0, 0.0])
        assert np.array_equal(refs.utopia_u, [3.0, 2.0])
    
    def test_uniform_dynamic_export(self):
        """Test that the utopia exports at most K per prosumer."""
        cfg = SchemeConfig(scheme=SchemeType.UNIFORM_DYNAMIC_EXPORT, k_kw=1.5)
        refs = reference_points(cfg, self.snap)
        
        assert np.array_equal(refs.utopia_x, [3.5, 2.5])
        assert np.array_equal(refs.utopia_u, [1.5, 1.5])
    
    def test_uniform_utopia_capped_by_potential(self):
        """Test that d + K above the potential is clamped to p_bar."""
        cfg = SchemeConfig(scheme=SchemeType.UNIFORM_DYNAMIC_EXPORT, k_kw=2.5)
        refs = reference_points(cfg, self.snap)
        
        assert np.array_equal(refs.utopia_x, [4.5, 3.0])
    
    def test_egalitarian_fallback_clamped(self):
        """Test that p_bar - c below zero is clamped to zero."""
        snap = Snapshot(demand=(0.0, 0.0), potential=(5.0, 3.0))
        refs = reference_points(SchemeConfig(scheme=SchemeType.EGALITARIAN, c_kw=4.0), snap)
        
        assert np.array_equal(refs.fallback_x, [1.0, 0.0])
        assert np.array_equal(refs.utopia_x, [5.0, 3.0])
    
    def test_degenerate_agent_excluded(self):
        """Test that an agent with demand equal to potential is excluded under opf_export."""
        snap = Snapshot(demand=(2.0, 3.0), potential=(5.0, 3.0))
        refs = reference_points(SchemeConfig(scheme=SchemeType.OPF_EXPORT), snap)
        
        assert list(refs.included) == [True, False]
        assert refs.degenerate == (1,)
    
    def test_degenerate_agent_strict(self):
        """Test that strict mode reports the degenerate agent with its 1-based index."""
        snap = Snapshot(demand=(2.0, 3.0), potential=(5.0, 3.0))
        
        with pytest.raises(DegenerateAgent) as exc:
            reference_points(SchemeConfig(scheme=SchemeType.OPF_EXPORT), snap, strict=True)
        
        assert exc.value.agents == (2,)
    
    def test_missing_parameters_rejected(self):
        """Test that uniform needs K and egalitarian needs c."""
        with pytest.raises(pydantic.ValidationError):
            SchemeConfig(scheme=SchemeType.UNIFORM_DYNAMIC_EXPORT)
        with pytest.raises(pydantic.ValidationError):
            SchemeConfig(scheme=SchemeType.EGALITARIAN, c_kw=0.0)


class TestKSWelfare:
    """Test normalised gains and the KS min."""
    
    def setup_method(self):
        """Set up test fixtures."""
        self.refs = origin_refs([4.0, 4.0])
    
    def test_utopia_ratio_one(self):
        """Test that u = umax gives welfare 1."""
        assert ks_welfare(np.array([4.0, 4.0]), self.refs) == pytest.approx(1.0)
    
    def test_fallback_ratio_zero(self):
        """Test that u = u0 gives welfare 0."""
        assert ks_welfare(np.array([0.0, 0.0]), self.refs) == pytest.approx(0.0)
    
    def test_equal_ratio_point(self):
        """Test the KS point of the 0.75 u1 + u2 <= 4 frontier."""
        assert ks_welfare(np.array([2.286, 2.286]), self.refs) == pytest.approx(0.5714, abs=1e-4)
    
    def test_excluded_agent_ratio_nan(self):
        """Test that excluded agents carry NaN and do not enter the min."""
        refs = origin_refs([4.0, 0.0])
        u = np.array([2.0, 0.0])
        
        ratios = ks_ratios(u, refs)
        
        assert ratios[0] == pytest.approx(0.5)
        assert np.isnan(ratios[1])
        assert ks_welfare(u, refs) == pytest.approx(0.5)
    
    def test_all_excluded(self):
        """Test that KS welfare needs at least one included agent."""
        with pytest.raises(EmptyAgentSet):
            ks_welfare(np.array([0.0, 0.0]), origin_refs([0.0, 0.0]))


class TestNashWelfare:
    """Test the Nash product of gains."""
    
    def test_left_frontier_point(self):
        """Test the Nash point of the straight frontier."""
        refs = origin_refs([4.0, 4.0])
        
        assert nash_welfare(np.array([2.67, 2.0]), refs) == pytest.approx(5.34)
    
    def test_right_frontier_point(self):
        """Test the Nash point of the expanded frontier."""
        refs = origin_refs([4.0, 4.0])
        
        assert nash_welfare(np.array([2.4, 3.0]), refs) == pytest.approx(7.2)
    
    def test_agent_at_fallback(self):
        """Test that one agent at its fallback zeroes the product."""
        refs = origin_refs([4.0, 4.0])
        
        assert nash_welfare(np.array([0.0, 3.0]), refs) == 0.0
    
    def test_negative_gain(self):
        """Test that utilities below the fallback are rejected with the agent index."""
        refs = origin_refs([4.0, 4.0], fallback=[1.0, 1.0])
        
        with pytest.raises(NegativeGain) as exc:
            nash_welfare(np.array([2.0, 0.5]), refs)
        
        assert exc.value.agent == 2


class TestCFCWelfare:
    """Test the utilitarian-egalitarian mix."""
    
    def test_gamma_zero_is_mean(self):
        """Test that gamma = 0 is the plain mean."""
        assert cfc_welfare(np.array([1.0, 2.0, 3.0]), 0.0) == pytest.approx(2.0)
    
    def test_gamma_one_adds_max_deviation(self):
        """Test that gamma = 1 adds the largest deviation from the mean."""
        assert cfc_welfare(np.array([1.0, 2.0, 3.0]), 1.0) == pytest.approx(3.0)
    
    def test_constant_profile(self):
        """Test that a constant profile returns the constant for any gamma."""
        for gamma in (0.0, 0.3, 1.0):
            assert cfc_welfare(np.full(4, 2.5), gamma) == pytest.approx(2.5)
    
    def test_gamma_out_of_range(self):
        """Test that gamma must lie in [0, 1]."""
        with pytest.raises(ValidationError):
            cfc_welfare(np.array([1.0]), 1.5)
    
    @settings(max_examples=100, deadline=None)
    @given(
        u=st.lists(_shift, min_size=1, max_size=6),
        gamma=_fraction,
        t=_scale,
        c=_shift,
    )
    def test_homogeneous_and_translatable(self, u, gamma, t, c):
        """Test W(t u + c) = t W(u) + c."""
        u = np.array(u)
        
        assert cfc_welfare(t * u + c, gamma) == pytest.approx(t * cfc_welfare(u, gamma) + c, abs=1e-9)


class TestInequalityIndices:
    """Test Gini and Jain indices."""
    
    def test_gini_two_agents(self):
        """Test |u1 - u2| / (u1 + u2) for two agents."""
        assert gini(np.array([2.0, 1.0])) == 1 / 3
        assert gini(np.array([1.0, 1.0])) == 0.0
    
    def test_gini_constant_profile(self):
        """Test zero inequality for identical utilities."""
        assert gini(np.full(5, 0.7)) == pytest.approx(0.0)
    
    def test_gini_single_agent(self):
        """Test that a single agent has no inequality."""
        assert gini(np.array([3.0])) == 0.0
    
    def test_gini_single_winner_reaches_one(self):
        """Test that the upper end of the range is attained only when one agent holds everything."""
        assert gini(np.array([1.0, 0.0])) == 1.0
        assert gini(np.array([0.0, 0.0, 4.0])) == 1.0
        assert gini(np.array([0.0, 1.0, 4.0])) < 1.0
    
    def test_gini_prefers_dominated_profile(self):
        """Test that minimising Gini picks the Pareto-dominated profile."""
        candidates = {"dominant": np.array([2.0, 1.0]), "dominated": np.array([1.0, 1.0])}
        
        fairest = min(candidates, key=lambda name: gini(candidates[name]))
        
        assert np.all(candidates["dominant"] >= candidates["dominated"])
        assert fairest == "dominated"
    
    def test_gini_rejects_negative_and_zero(self):
        """Test domain errors of the Gini index."""
        with pytest.raises(ValidationError):
            gini(np.array([1.0, -1.0]))
        with pytest.raises(AllZero):
            gini(np.zeros(3))
    
    def test_jain_values(self):
        """Test Jain index examples."""
        assert jain(np.array([1.0, 1.0])) == pytest.approx(1.0)
        assert jain(np.array([2.0, 1.0])) == pytest.approx(0.9)
        assert jain(np.array([1.0, 0.0, 0.0, 0.0])) == pytest.approx(0.25)
    
    def test_jain_all_zero(self):
        """Test that the Jain index is undefined for zero profiles."""
        with pytest.raises(AllZero):
            jain(np.zeros(2))


class TestAffineMaps:
    """Test positive affine utility transforms."""
    
    def test_identity(self):
        """Test a = 1, b = 0."""
        u = np.array([2.0, 1.0])
        
        assert np.array_equal(apply_affine(u, 1.0, 0.0), u)
    
    def test_scaling(self):
        """Test per-agent scaling."""
        assert np.array_equal(apply_affine(np.array([2.0, 1.0]), np.array([2.0, 2.0]), 0.0), [4.0, 2.0])
    
    def test_non_positive_scale(self):
        """Test that a <= 0 is rejected."""
        with pytest.raises(NonPositiveScale):
            apply_affine(np.array([1.0, 2.0]), np.array([1.0, 0.0]), 0.0)
    
    @settings(max_examples=200, deadline=None)
    @given(
        a=st.lists(_scale, min_size=3, max_size=3),
        b=st.lists(_shift, min_size=3, max_size=3),
        frac=st.lists(_fraction, min_size=3, max_size=3),
    )
    def test_ks_ratios_invariant(self, a, b, frac):
        """Test that KS ratios do not change under per-agent positive affine maps."""
        refs = origin_refs([4.0, 2.0, 3.0], fallback=[1.0, 0.5, 0.0])
        u = refs.fallback_u + np.array(frac) * refs.span
        
        before = ks_ratios(u, refs)
        after = ks_ratios(apply_affine(u, np.array(a), np.array(b)), transform_references(refs, np.array(a), np.array(b)))
        
        assert np.allclose(after, before, rtol=1e-12, atol=1e-12)
    
    @settings(max_examples=100, deadline=None)
    @given(
        a=st.lists(_scale, min_size=2, max_size=2),
        b=st.lists(_shift, min_size=2, max_size=2),
    )
    def test_nash_argmax_invariant(self, a, b):
        """Test that the Nash choice among candidates survives affine maps."""
        refs = origin_refs([4.0, 4.0])
        candidates = [np.array(c) for c in [(1.0, 4.0), (2.0, 2.4), (3.0, 1.0), (2.5, 2.1)]]
        a, b = np.array(a), np.array(b)
        
        moved = transform_references(refs, a, b)
        before = int(np.argmax([nash_welfare(u, refs) for u in candidates]))
        after = int(np.argmax([nash_welfare(apply_affine(u, a, b), moved) for u in candidates]))
        
        assert after == before


class TestCurtailment:
    """Test curtailment bookkeeping."""
    
    def test_curtailment_is_potential_minus_envelope(self):
        """Test p_bar - x."""
        snap = Snapshot(demand=(0.0, 0.0), potential=(4.0, 3.0))
        
        assert np.array_equal(curtailment(snap, np.array([1.0, 3.0])), [3.0, 0.0])
