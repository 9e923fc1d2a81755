import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sbse.transform import (
    Spectrogram,
    StftParams,
    analyze,
    istft,
    istft_adjoint,
    stft,
    synthesize,
    synthesize_adjoint,
    synthesize_linearized,
)

PAPER = StftParams(510, 128, 0.5, 0.33)
TOY = StftParams(16, 4, 0.5, 0.33)


def direct_dft_bin(x, params, frame, k):
    """Single STFT coefficient by an explicit O(N) sum over the padded frame."""
    n = params.window_len
    padded = np.pad(x, params.pad, mode="reflect")
    seg = padded[frame * params.hop: frame * params.hop + n]
    seg = np.pad(seg, (0, n - len(seg)))
    m = np.arange(n)
    return np.sum(seg * params.window * np.exp(-2j * np.pi * k * m / n))


def test_paper_configuration_shape():
    x = np.random.default_rng(0).standard_normal(16000)
    s = analyze(x, PAPER)
    assert s.shape == (256, 126)


def test_magnitude_and_phase_of_compression():
    x = np.random.default_rng(1).standard_normal(4000)
    raw = stft(x, PAPER)
    s = analyze(x, PAPER)
    np.testing.assert_allclose(np.abs(s.bins), 0.33 * np.abs(raw) ** 0.5, rtol=1e-12)
    nz = np.abs(raw) > 1e-9
    np.testing.assert_allclose(np.exp(1j * np.angle(s.bins[nz])), np.exp(1j * np.angle(raw[nz])), atol=1e-10)


def test_zero_waveform_gives_zero_spectrogram():
    s = analyze(np.zeros(2000), PAPER)
    assert np.all(s.bins == 0)


def test_plain_stft_matches_direct_dft_sum():
    p = StftParams(510, 128, 1.0, 1.0)
    t = np.arange(3000) / 16000
    x = np.sin(2 * np.pi * 1000 * t)
    s = analyze(x, p)
    for frame, k in [(5, 32), (10, 31), (3, 0), (12, 255)]:
        assert s.bins[k, frame] == pytest.approx(direct_dft_bin(x, p, frame, k), abs=1e-9)


@pytest.mark.parametrize("params", [PAPER, StftParams(510, 128, 1.0, 2.0)])
def test_round_trip_white_noise(params):
    x = np.random.default_rng(2).standard_normal(16000)
    y = synthesize(analyze(x, params), len(x))
    assert np.max(np.abs(y - x)) <= 1e-6 * np.max(np.abs(x))


def test_zero_spectrogram_synthesizes_to_zero():
    s = Spectrogram(np.zeros((256, 20), complex), PAPER)
    assert np.all(synthesize(s, 19 * 128) == 0)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.integers(300, 3000), elements=st.floats(-1, 1)))
def test_round_trip_property(x):
    y = synthesize(analyze(x, PAPER), len(x))
    assert np.max(np.abs(y - x)) <= 1e-6 * max(np.max(np.abs(x)), 1e-300) + 1e-300


def test_analysis_is_not_additive_when_compressed():
    rng = np.random.default_rng(3)
    a, b = rng.standard_normal(1000), rng.standard_normal(1000)
    lhs = analyze(a + b, PAPER).bins
    rhs = analyze(a, PAPER).bins + analyze(b, PAPER).bins
    assert np.max(np.abs(lhs - rhs)) > 1e-2


def test_errors():
    with pytest.raises(ValueError):
        analyze(np.zeros(0), PAPER)
    with pytest.raises(ValueError):
        StftParams(510, 128, 0.0, 0.33)
    with pytest.raises(ValueError):
        StftParams(510, 128, 0.5, -1.0)
    with pytest.raises(ValueError):
        StftParams(16, 17)
    s = analyze(np.ones(1000), PAPER)
    with pytest.raises(ValueError):
        synthesize(s, 1000, StftParams(510, 128, 1.0, 1.0))
    with pytest.raises(ValueError):
        synthesize(s, 10_000)


def test_nola_violation_rejected():
    # Hann with hop == window leaves zero weight at every frame boundary.
    with pytest.raises(ValueError, match="overlap-add"):
        StftParams(16, 16)


# -- adjoint -------------------------------------------------------------------


def _random_spec(rng, params, n_frames):
    z = rng.standard_normal((params.n_freqs, n_frames)) + 1j * rng.standard_normal((params.n_freqs, n_frames))
    z[0] = z[0].real
    z[-1] = z[-1].real
    return z


def test_adjoint_of_zero_cotangent_is_zero():
    rng = np.random.default_rng(4)
    z = _random_spec(rng, TOY, 8)
    g = synthesize_adjoint(z, np.zeros(TOY.max_length(8)), TOY)
    assert np.all(g == 0)


def test_linear_adjoint_matches_explicit_matrix():
    p = StftParams(16, 4, 1.0, 1.0)
    n_frames, L = 17, 64
    F = p.n_freqs
    # Build the real matrix of istft acting on (Re, Im) parts column by column.
    cols = []
    for part in (1.0, 1j):
        for k in range(F):
            for f in range(n_frames):
                e = np.zeros((F, n_frames), complex)
                e[k, f] = part
                cols.append(istft(e, p, L))
    M = np.array(cols).T  # L x (2*F*n_frames)
    v = np.random.default_rng(5).standard_normal(L)
    g = istft_adjoint(v, p, n_frames)
    expected = M.T @ v
    got = np.concatenate([g.real.ravel(), g.imag.ravel()])
    np.testing.assert_allclose(got, expected, atol=1e-12)
    # a=1, b=1: the full adjoint reduces to the istft adjoint.
    z = _random_spec(np.random.default_rng(6), p, n_frames)
    np.testing.assert_allclose(synthesize_adjoint(z, v, p), g, atol=1e-12)


@pytest.mark.parametrize("params", [TOY, StftParams(16, 4, 0.3, 2.0), PAPER])
def test_adjoint_inner_product_identity(params):
    rng = np.random.default_rng(7)
    n_frames = 8
    L = params.max_length(n_frames)
    s = _random_spec(rng, params, n_frames)
    u = _random_spec(rng, params, n_frames)
    v = rng.standard_normal(L)
    lhs = np.dot(synthesize_linearized(s, u, L, params), v)
    g = synthesize_adjoint(s, v, params)
    rhs = np.sum(u.real * g.real + u.imag * g.imag)
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


def test_adjoint_matches_finite_differences():
    rng = np.random.default_rng(8)
    p = TOY
    n_frames = 8
    L = p.max_length(n_frames)
    # Keep Im of DC/Nyquist: through |X| they still reach the waveform.
    s = rng.standard_normal((p.n_freqs, n_frames)) + 1j * rng.standard_normal((p.n_freqs, n_frames)) + 0.5
    v = rng.standard_normal(L)

    def loss(z):
        return np.dot(synthesize(z, L, p), v)

    g = synthesize_adjoint(s, v, p)
    h = 1e-6
    for k in range(p.n_freqs):
        for f in range(n_frames):
            for part, gpart in ((1.0, g.real), (1j, g.imag)):
                e = np.zeros_like(s)
                e[k, f] = part * h
                fd = (loss(s + e) - loss(s - e)) / (2 * h)
                assert fd == pytest.approx(gpart[k, f], rel=1e-4, abs=1e-8)
