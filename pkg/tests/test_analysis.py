import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qbutterfly import analysis, qsim


def kraus_fidelity(kraus):
    """Independent oracle: F_e = sum_k |tr K_k|^2 / d^2 for d = 2."""
    return sum(abs(np.trace(k)) ** 2 for k in kraus) / 4


def test_identity_channel_fidelity_one():
    assert analysis.entanglement_fidelity(analysis.identity_channel) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("basis", ["Z", "X"])
def test_measure_resend_matches_kraus(basis):
    vecs = qsim.Z_BASIS if basis == "Z" else qsim.X_BASIS
    kraus = [np.outer(v, np.conj(v)) for v in vecs.values()]
    got = analysis.entanglement_fidelity(analysis.measure_resend_channel(basis))
    assert got == pytest.approx(kraus_fidelity(kraus), abs=1e-12)
    assert got == pytest.approx(0.5, abs=1e-12)


def test_replacement_matches_kraus():
    e = np.eye(2)
    kraus = [np.outer(e[m], e[k]) / np.sqrt(2) for m in range(2) for k in range(2)]
    got = analysis.entanglement_fidelity(analysis.replacement_channel)
    assert got == pytest.approx(kraus_fidelity(kraus), abs=1e-12)
    assert got == pytest.approx(0.25, abs=1e-12)


@given(st.floats(0, 1))
@settings(max_examples=30, deadline=None)
def test_fidelity_linear_in_mixture(w):
    ch = analysis.mixture(w, analysis.identity_channel, analysis.replacement_channel)
    assert analysis.entanglement_fidelity(ch) == pytest.approx(w + (1 - w) * 0.25, abs=1e-12)


def test_bad_channels_rejected():
    with pytest.raises(analysis.ChannelError):
        analysis.entanglement_fidelity(lambda s, q: [(0.5, s)])
    with pytest.raises(analysis.ChannelError):
        analysis.measure_resend_channel("Y")
    with pytest.raises(analysis.ChannelError):
        analysis.mixture(1.5, analysis.identity_channel, analysis.identity_channel)


def test_channel_acts_only_on_target_qubit():
    rng = qsim.random_source(3)
    v = rng.normal(size=8) + 1j * rng.normal(size=8)
    state = qsim.StateVector(v, normalize=True)
    before = qsim.reduced_density_matrix(state, [0, 2])
    branches = analysis.measure_resend_channel("Z")(state, 1)
    after = sum(p * qsim.reduced_density_matrix(s, [0, 2]) for p, s in branches)
    assert np.allclose(before, after, atol=1e-12)


@pytest.mark.parametrize("n", [3, 4])
@pytest.mark.parametrize("chirality", ["clockwise", "counterclockwise"])
def test_protocol_channel_perfect(n, chirality):
    for t in range(1, n + 1):
        f = analysis.entanglement_fidelity(analysis.protocol_channel(n, t, chirality))
        assert f == pytest.approx(1.0, abs=1e-9)


def test_protocol_channel_independent_of_background_seed():
    for seed in range(5):
        f = analysis.entanglement_fidelity(analysis.protocol_channel(3, 2, seed=seed))
        assert f == pytest.approx(1.0, abs=1e-9)


def test_protocol_channel_with_product_resource_is_classical():
    product_resource = qsim.tensor_all([qsim.StateVector(qsim.Z_BASIS[0])] * 3)
    f = analysis.entanglement_fidelity(analysis.protocol_channel(3, 1, resource=product_resource))
    assert f == pytest.approx(0.5, abs=1e-9)
    with pytest.raises(analysis.ChannelError):
        analysis.protocol_channel(3, 1, resource=qsim.prepare_ghz(2))


def test_thresholds():
    assert analysis.bound_threshold(3) == pytest.approx(2.1384, abs=1e-12)
    assert analysis.bound_threshold(4) == pytest.approx(2.28096, abs=1e-12)


def test_perfect_fidelities_violate_bound():
    report = analysis.check_bound([1, 1, 1], 3)
    assert report.total == pytest.approx(3.0)
    assert not report.satisfied


def test_check_bound_input_errors():
    with pytest.raises(ValueError):
        analysis.check_bound([1, 1], 3)
    with pytest.raises(ValueError):
        analysis.check_bound([1, 1, 1.2], 3)


@given(st.integers(2, 12), st.data())
@settings(max_examples=50, deadline=None)
def test_bound_monotone(d, data):
    f = data.draw(st.lists(st.floats(0, 1), min_size=d, max_size=d))
    k = data.draw(st.integers(0, d - 1))
    lowered = list(f)
    lowered[k] = lowered[k] * data.draw(st.floats(0, 1))
    # lowering any fidelity never turns a satisfied sum into a violation
    if analysis.check_bound(f, d).satisfied:
        assert analysis.check_bound(lowered, d).satisfied


@pytest.mark.parametrize("n,total", [(3, 1.5), (4, 2.0)])
def test_baseline_respects_bound(n, total):
    report = analysis.baseline_no_entanglement(n)
    assert report.total == pytest.approx(total, abs=1e-12)
    assert report.satisfied


def test_baseline_exceeds_threshold_beyond_four_terminals():
    # n/2 grows faster than 2.8512 n/(n+1) once n >= 5
    report = analysis.baseline_no_entanglement(5)
    assert report.total == pytest.approx(2.5, abs=1e-12)
    assert not report.satisfied


def test_protocol_separates_from_baseline():
    proto = analysis.protocol_bound_report(3)
    base = analysis.baseline_no_entanglement(3)
    assert not proto.satisfied and base.satisfied
    assert proto.total - base.total == pytest.approx(1.5, abs=1e-9)
