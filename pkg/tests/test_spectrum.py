import numpy as np
import pytest

from lakin.errors import ValidationError
from lakin.spectrum import amplitude_spectrum, extract_segment, spectrum_power
from lakin.synth import SynthParams, generate_trial

FS = 102.4


def test_constant_signal_all_zero_bins():
    spec = amplitude_spectrum(np.full(128, 7.3), FS)
    assert np.allclose(spec.values, 0.0, atol=1e-12)
    assert spectrum_power(spec) == pytest.approx(0.0, abs=1e-24)


@pytest.mark.parametrize("amp", [1.0, 5.0, 30.0])
@pytest.mark.parametrize("n", [64, 1024])
def test_single_cosine_bins(amp, n):
    k = 5
    x = amp * np.cos(2 * np.pi * k * np.arange(n) / n)
    spec = amplitude_spectrum(x, FS)
    assert spec.values[k] == pytest.approx(amp / 2, rel=1e-9)
    assert spec.values[n - k] == pytest.approx(amp / 2, rel=1e-9)
    others = np.delete(spec.values, [k, n - k])
    assert np.abs(others).max() < 1e-9 * amp
    # two bins of amp/2 each: power = amp^2 / (2 n)
    assert spectrum_power(spec) == pytest.approx(amp * amp / (2 * n), rel=1e-9)


def test_two_cosines_two_symmetric_pairs():
    n = 256
    idx = np.arange(n)
    x = 3.0 * np.cos(2 * np.pi * 4 * idx / n) + 1.5 * np.cos(2 * np.pi * 19 * idx / n)
    spec = amplitude_spectrum(x, FS)
    for k, amp in ((4, 3.0), (19, 1.5)):
        assert spec.values[k] == pytest.approx(amp / 2, rel=1e-9)
        assert spec.values[n - k] == pytest.approx(amp / 2, rel=1e-9)


def test_parseval_identity_random_signals():
    rng = np.random.default_rng(17)
    for _ in range(200):
        n = int(rng.integers(2, 2048))
        x = rng.normal(0, rng.uniform(0.1, 50), n)
        centered = x - x.mean()
        ss = float(centered @ centered)
        if ss == 0.0:
            continue
        p = spectrum_power(amplitude_spectrum(x, FS))
        assert abs(n * n * p - ss) / ss < 1e-9


def test_amplitudes_invariant_under_circular_shift():
    rng = np.random.default_rng(23)
    x = rng.normal(size=200)
    base = amplitude_spectrum(x, FS).values
    for k in (1, 17, 99):
        shifted = amplitude_spectrum(np.roll(x, k), FS).values
        assert np.allclose(shifted, base, atol=1e-10)


def test_power_scales_quadratically():
    rng = np.random.default_rng(29)
    x = rng.normal(size=333)
    p1 = spectrum_power(amplitude_spectrum(x, FS))
    p3 = spectrum_power(amplitude_spectrum(3.0 * x, FS))
    assert p3 == pytest.approx(9.0 * p1, rel=1e-12)


def test_severity_sweep_power_monotone():
    powers_theta, powers_omega = [], []
    for half_steps in range(9):
        sev = half_steps / 2.0
        rec, labels, truth = generate_trial(SynthParams.from_severity(sev, seed=5))
        t0, t1 = labels.span()
        seg_t = extract_segment(rec.t, truth.theta, t0, t1, FS)
        seg_o = extract_segment(rec.t, truth.omega, t0, t1, FS)
        powers_theta.append(spectrum_power(amplitude_spectrum(seg_t, FS)))
        powers_omega.append(spectrum_power(amplitude_spectrum(seg_o, FS)))
    assert all(a >= b for a, b in zip(powers_theta, powers_theta[1:]))
    assert all(a >= b for a, b in zip(powers_omega, powers_omega[1:]))


def test_extract_segment_slices_by_time():
    t = np.arange(1000) / FS
    x = np.sin(t)
    seg = extract_segment(t, x, 2.0, 5.0, FS)
    expected = x[(t >= 2.0) & (t <= 5.0)]
    assert np.array_equal(seg, expected)


def test_extract_segment_resamples_irregular_times():
    rng = np.random.default_rng(31)
    t = np.cumsum(rng.uniform(0.5 / FS, 2.0 / FS, 600))
    x = np.sin(2 * np.pi * 1.3 * t)
    seg = extract_segment(t, x, t[10], t[-10], FS)
    mask = (t >= t[10]) & (t <= t[-10])
    ts, xs = t[mask], x[mask]
    n = int(np.floor((ts[-1] - ts[0]) * FS)) + 1
    grid = ts[0] + np.arange(n) / FS
    assert np.allclose(seg, np.interp(grid, ts, xs))


def test_too_short_segment_rejected():
    with pytest.raises(ValidationError):
        amplitude_spectrum(np.array([1.0]), FS)
    t = np.arange(100) / FS
    with pytest.raises(ValidationError):
        extract_segment(t, np.sin(t), 0.5, 0.5, FS)


def test_one_sided_view():
    n = 64
    x = np.cos(2 * np.pi * 3 * np.arange(n) / n)
    spec = amplitude_spectrum(x, FS)
    freqs, amps = spec.one_sided()
    assert len(freqs) == n // 2 + 1
    assert freqs[1] == pytest.approx(FS / n)
    assert amps[3] == pytest.approx(0.5, rel=1e-9)
