"""Tests for the singular-data evolution and largeness measurements."""

from __future__ import annotations

import math
import sys
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import simpson

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from heatlab import linear_evolve as le  # noqa: E402
from heatlab.errors import InvalidQueryError, NumericalFailure  # noqa: E402
from heatlab.kernel_core import Ball, Interval, gaussian_values  # noqa: E402


def _make_data(alpha: float = 0.5, R: float = 0.5, cap: float = math.inf, n: int = 1) -> le.SingularData:
    return le.SingularData(alpha=alpha, R=R, cap=cap, n=n)


def test_singular_data_validation():
    with pytest.raises(InvalidQueryError):
        _make_data(alpha=1.0)
    with pytest.raises(InvalidQueryError):
        _make_data(alpha=2.5, n=2)
    with pytest.raises(InvalidQueryError):
        _make_data(R=0.0)
    with pytest.raises(InvalidQueryError):
        _make_data(cap=1.0)


def test_singular_data_eval_applies_cap_and_support():
    d = _make_data(cap=4.0)
    assert le.singular_data_eval(d, 0.25) == pytest.approx(2.0)
    assert le.singular_data_eval(d, -0.01) == pytest.approx(4.0)
    assert le.singular_data_eval(d, 0.6) == 0.0
    d2 = _make_data(n=2)
    assert le.singular_data_eval(d2, (0.3, 0.4)) == pytest.approx(0.5**-0.5)
    with pytest.raises(InvalidQueryError):
        le.singular_data_eval(d2, 0.1)


def test_cap_radius():
    assert _make_data().cap_radius == 0.0
    assert _make_data(cap=4.0).cap_radius == pytest.approx(1.0 / 16.0)


@pytest.mark.parametrize("n, expected", [(1, 2.0), (2, 2.0 * math.pi), (3, 4.0 * math.pi)])
def test_sphere_area(n, expected):
    assert le.sphere_area(n) == pytest.approx(expected, rel=1e-14)


def test_singular_data_mass_closed_forms():
    uncapped = _make_data()
    assert le.singular_data_mass(uncapped) == pytest.approx(2.0 * 0.5**0.5 / 0.5, rel=1e-14)
    capped = _make_data(cap=4.0)
    assert le.singular_data_mass(capped) == pytest.approx(2.0 * (0.25 + (0.5**0.5 - 0.25) / 0.5), rel=1e-14)
    planar = _make_data(alpha=1.0, R=1.0, n=2)
    assert le.singular_data_mass(planar) == pytest.approx(2.0 * math.pi, rel=1e-14)


def test_capped_mass_matches_quadrature():
    d = _make_data(cap=4.0)
    z = np.linspace(-0.5, 0.5, 160001)
    numeric = simpson(le.singular_profile(d, z), x=z)
    assert numeric == pytest.approx(le.singular_data_mass(d), rel=1e-6)


@pytest.mark.parametrize("n", [2, 3])
def test_radial_density_is_a_probability_law(n):
    rho = np.linspace(0.0, 2.0, 20001)
    for r in (0.0, 0.3):
        q = le.radial_whole_space_density(n, r, rho, 0.01)
        assert simpson(q * rho ** (n - 1), x=rho) == pytest.approx(1.0, rel=1e-8)


def test_whole_space_evolution_matches_direct_quadrature():
    d = _make_data(cap=4.0)
    x, t = 0.1, 0.01
    value, error = le.evolve_point(None, d, x, t)
    z = np.linspace(-0.5, 0.5, 200001)
    direct = simpson(gaussian_values(1, (x - z) ** 2, t) * le.singular_profile(d, z), x=z)
    assert value == pytest.approx(direct, rel=1e-6)
    assert error < 1e-6 * value


def test_origin_value_scales_like_power_of_time():
    """Uncapped data is scale invariant while the support stays far away."""

    d = _make_data()
    early = le.evolve_point(None, d, 0.0, 1e-6)[0]
    late = le.evolve_point(None, d, 0.0, 1e-4)[0]
    assert early / late == pytest.approx(100.0 ** (d.alpha / 2.0), rel=1e-4)


def test_dirichlet_evolution_lies_below_whole_space():
    d = _make_data()
    dom = Interval(1.0)
    for x in (0.0, 0.3, 0.8):
        for t in (1e-3, 0.05, 0.3):
            dirichlet = le.evolve_point(dom, d, x, t)[0]
            free = le.evolve_point(None, d, x, t)[0]
            assert 0.0 <= dirichlet <= free * (1.0 + 1e-9)


def test_ball_value_is_defect_corrected_lower_estimate():
    d = _make_data(alpha=1.0, R=0.5, n=2)
    dom = Ball(1.0, n=2)
    free = le.evolve_point(None, d, 0.2, 0.05)[0]
    ball = le.evolve_point(dom, d, 0.2, 0.05)[0]
    assert 0.0 <= ball < free


def test_ball_defect_envelope_peaks_at_interior_time():
    clearance, n = 0.5, 2
    peak = clearance * clearance / (2.0 * n)
    assert le.ball_defect_envelope(n, clearance, 10.0) == pytest.approx(le.ball_defect_envelope(n, clearance, peak))
    assert le.ball_defect_envelope(n, clearance, 1e-3) < le.ball_defect_envelope(n, clearance, peak)


def test_domain_checks():
    with pytest.raises(InvalidQueryError):
        le.evolve_point(Interval(0.5), _make_data(R=0.5), 0.0, 0.01)
    with pytest.raises(InvalidQueryError):
        le.evolve_point(Ball(1.0, n=3), _make_data(n=2), 0.0, 0.01)
    with pytest.raises(InvalidQueryError):
        le.evolve_point(None, _make_data(), 0.0, 0.01, panels=7)
    with pytest.raises(InvalidQueryError):
        le.evolve_point(Interval(1.0), _make_data(), 1.5, 0.01)


def test_evolve_singular_default_grid_and_rows():
    profile = le.evolve_singular(Interval(1.0), _make_data(), 0.01, panels=256)
    assert profile.x.size == 41
    assert profile.x[-1] == pytest.approx(1.0)
    assert profile.w[-1] == pytest.approx(0.0, abs=1e-12)
    assert np.all(np.diff(profile.w) <= 1e-12)
    rows = profile.rows()
    assert rows[0] == (0.0, 0.01, profile.w[0])


def test_infimum_m_is_positive_and_uses_clearance_horizon():
    info = le.infimum_M(Interval(1.0), _make_data(), times=8, panels=256)
    assert info.T == pytest.approx(0.25)
    assert info.M > 0
    assert info.M == pytest.approx(info.values.min())
    assert info.times[-1] == pytest.approx(info.T)


def test_largeness_certificate_scaling_exponents():
    d = _make_data()
    dom = Interval(1.0)
    info = le.infimum_M(dom, d, times=8, panels=256)
    messages = []
    cert = le.largeness_certificate(
        dom, d, [8.0, 16.0, 32.0, 64.0, 128.0],
        time_levels=4, iterations=24, panels=256, infimum=info, progress_callback=messages.append,
    )
    assert not cert.empty
    assert len(messages) == 5
    assert cert.sigma > 0
    assert cert.phi_star == pytest.approx(min(info.M, 0.5**-0.5))
    rs = [s.r for s in cert.samples]
    taus = [s.tau for s in cert.samples]
    assert all(b < a for a, b in zip(rs, rs[1:]))
    assert all(b < a for a, b in zip(taus, taus[1:]))
    p_r, p_t = le.fit_scaling_exponents(cert)
    assert p_r == pytest.approx(-1.0 / d.alpha, rel=0.15)
    assert p_t == pytest.approx(-2.0 / d.alpha, rel=0.15)


def test_largeness_thresholds_must_increase():
    with pytest.raises(InvalidQueryError):
        le.largeness_certificate(Interval(1.0), _make_data(), [])
    with pytest.raises(InvalidQueryError):
        le.largeness_certificate(Interval(1.0), _make_data(), [8.0, 4.0])


def test_unattained_threshold_empties_certificate():
    d = _make_data(cap=10.0)
    info = le.InfimumM(M=0.5, T=0.25)
    cert = le.largeness_certificate(Interval(1.0), d, [4.0, 100.0], time_levels=2, iterations=8, panels=64, infimum=info)
    assert cert.empty
    assert cert.unattained == [100.0]
    assert cert.samples == []
    assert cert.to_dict()["unattained"] == [100.0]


def _certificate(phis):
    samples = [le.CertificateSample(phi=p, r=p**-2, tau=p**-4) for p in phis]
    return le.LargenessCertificate(alpha=0.5, R=0.5, n=1, sigma=1.0, phi_star=1.0, M=1.0, samples=samples)


def test_fit_recovers_exact_power_laws():
    p_r, p_t = le.fit_scaling_exponents(_certificate([4.0, 8.0, 16.0, 32.0, 64.0]))
    assert p_r == pytest.approx(-2.0)
    assert p_t == pytest.approx(-4.0)


def test_fit_rejects_small_or_degenerate_samples():
    with pytest.raises(InvalidQueryError):
        le.fit_scaling_exponents(_certificate([4.0, 8.0, 16.0]))
    with pytest.raises(InvalidQueryError):
        le.fit_scaling_exponents(_certificate([4.0, 5.0, 6.0, 7.0]))
    with pytest.raises(NumericalFailure):
        le.fit_scaling_exponents(_certificate([2.0, 2.0, 2.0, 2.0]))


def test_evolution_near_the_wall_with_coarse_panels_completes():
    d = _make_data(cap=4.0)
    profile = le.evolve_singular(Interval(1.0), d, 1e-3, panels=512)
    assert np.all(profile.w >= 0.0)
    assert profile.w[-1] == pytest.approx(0.0, abs=1e-10)
    assert profile.w[0] <= d.cap


@pytest.mark.parametrize("x", [0.1, -0.25, 0.4])
def test_very_short_time_evolution_recovers_the_data(x):
    d = _make_data()
    value = le.evolve_point(Interval(1.0), d, x, 1e-8)[0]
    assert value == pytest.approx(abs(x) ** -d.alpha, rel=1e-3)


def test_certificate_holds_when_rechecked_with_finer_quadrature():
    d = _make_data()
    dom = Interval(1.0)
    cert = le.largeness_certificate(dom, d, [8.0, 16.0, 32.0, 64.0], time_levels=4, iterations=24, panels=256)
    assert not cert.empty
    for sample in cert.samples:
        floor = sample.phi * (1.0 - 1e-6)
        levels = np.geomspace(max(1e-3 * sample.tau, 1e-12), sample.tau, 4)
        for t in levels:
            assert le.evolve_point(dom, d, sample.r, float(t), panels=512)[0] >= floor
        assert le.evolve_point(dom, d, 0.0, sample.tau, panels=512)[0] >= floor
        assert le.evolve_point(dom, d, 0.5 * sample.r, sample.tau, panels=512)[0] >= floor


@pytest.mark.parametrize(
    "alpha, phis",
    [
        (0.4, [3.0, 6.0, 12.0, 24.0, 48.0]),
        (0.5, [4.0, 8.0, 16.0, 32.0, 64.0]),
        (0.75, [16.0, 32.0, 64.0, 128.0, 256.0]),
    ],
)
def test_scaling_exponents_across_singularity_strengths(alpha, phis):
    d = _make_data(alpha=alpha)
    cert = le.largeness_certificate(Interval(1.0), d, phis, time_levels=4, iterations=32, panels=256)
    assert not cert.empty
    p_r, p_t = le.fit_scaling_exponents(cert)
    assert p_r == pytest.approx(-1.0 / alpha, rel=0.10)
    assert p_t == pytest.approx(-2.0 / alpha, rel=0.10)
