"""Fleet sizing arithmetic, session sampling, profiles, calibration."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evcosim.fleet import (
    ArrivalEvent,
    FleetConfig,
    HourRow,
    HourlyParams,
    LoadProfile,
    attack_ev_count,
    build_profile,
    calibrate,
    connected_count,
    default_params,
    evcs_split,
    generate_day,
    largest_remainder,
    sample_arrivals,
    sample_duration,
    scale_fleet,
)
from evcosim.fleet.model import _sample_durations


# -- sizing chain -------------------------------------------------------------


def test_sizing_chain_frozen_integers():
    s = scale_fleet()
    assert s.scaled_vehicles == 266_367
    assert s.ev_count == 133_184
    assert s.evcs_count == 13_318


def test_sizing_chain_rounds_stage_by_stage():
    # the EV count comes from the already-rounded vehicle count
    assert round(266_367 * 0.5) == 133_184
    assert round(5_892_206 * 315.0 / 6_968.0 * 0.5) == 133_183  # not this


def test_attack_ev_count():
    assert attack_ev_count(90.0) == 3_750
    assert attack_ev_count(90.0, 24.0) * 24.0 == 90_000.0
    with pytest.raises(ValueError):
        attack_ev_count(-1.0)


def test_evcs_split_matches_load_shares():
    split = evcs_split()
    assert split == {5: 5_285, 6: 3_805, 8: 4_228}
    assert sum(split.values()) == 13_318


def test_attack_split_by_largest_remainder():
    shares = largest_remainder(3_750, [125.0, 90.0, 100.0])
    assert shares == [1_488, 1_071, 1_191]
    assert sum(shares) == 3_750
    kw = [c * 24 for c in shares]
    assert kw == [35_712, 25_704, 28_584]
    assert sum(kw) == 90_000


def test_largest_remainder_exact_quotas():
    assert largest_remainder(100, [1, 1, 2]) == [25, 25, 50]
    assert largest_remainder(0, [3, 1]) == [0, 0]


@given(total=st.integers(0, 10_000),
       weights=st.lists(st.floats(0.01, 100), min_size=1, max_size=8))
@settings(max_examples=200, deadline=None)
def test_largest_remainder_preserves_total_and_quota_bounds(total, weights):
    shares = largest_remainder(total, weights)
    assert sum(shares) == total
    wsum = sum(weights)
    for share, w in zip(shares, weights):
        quota = total * w / wsum
        assert math.floor(quota) <= share <= math.ceil(quota)


def test_largest_remainder_rejects_bad_weights():
    with pytest.raises(ValueError):
        largest_remainder(10, [])
    with pytest.raises(ValueError):
        largest_remainder(10, [0.0, 0.0])
    with pytest.raises(ValueError):
        largest_remainder(10, [1.0, -1.0])


# -- parameter table -----------------------------------------------------------


def test_default_params_shape_and_invariants():
    params = default_params()
    assert len(params.rows) == 24
    for row in params.rows:
        assert row.lam >= 0
        assert row.sigma_min > 0
        assert 0 < row.dmin_min < row.dmax_min


def test_param_invariants_rejected():
    with pytest.raises(ValueError):
        HourRow(24, 0.1, 60, 10)
    with pytest.raises(ValueError):
        HourRow(0, -0.1, 60, 10)
    with pytest.raises(ValueError):
        HourRow(0, 0.1, 60, 0.0)
    with pytest.raises(ValueError):
        HourRow(0, 0.1, 60, 10, dmin_min=0, dmax_min=480)
    with pytest.raises(ValueError):
        HourRow(0, 0.1, 60, 10, dmin_min=30, dmax_min=20)
    with pytest.raises(ValueError):
        HourlyParams(default_params().rows[:23])


def test_params_csv_round_trip(tmp_path):
    params = default_params()
    path = tmp_path / "params.csv"
    params.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "hour,lambda,mu_min,sigma_min,dmin_min,dmax_min"
    again = HourlyParams.from_csv(path)
    assert again == params


def test_params_csv_rejects_wrong_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("hour,rate\n0,1\n")
    with pytest.raises(ValueError):
        HourlyParams.from_csv(path)


# -- durations -----------------------------------------------------------------


def _flat_params(lam, mu, sigma, dmin=5.0, dmax=480.0):
    return HourlyParams(tuple(
        HourRow(h, lam, mu, sigma, dmin, dmax) for h in range(24)))


def test_durations_respect_truncation_bounds():
    params = _flat_params(0.2, 60.0, 120.0, dmin=30.0, dmax=90.0)
    rng = np.random.default_rng(1)
    draws = [sample_duration(params, h % 24, rng) for h in range(2_000)]
    assert min(draws) >= 30.0
    assert max(draws) <= 90.0


def test_duration_degenerate_sigma_collapses_to_mean():
    params = _flat_params(0.2, 120.0, 1e-6)
    rng = np.random.default_rng(2)
    draws = [sample_duration(params, 8, rng) for _ in range(100)]
    assert max(abs(d - 120.0) for d in draws) < 1e-4


def _truncated_normal_mean(mu, sigma, lo, hi):
    """Analytic mean via the error function, independent of the sampler."""
    def cdf(x):
        return 0.5 * (1.0 + math.erf((x - mu) / (sigma * math.sqrt(2.0))))

    def pdf(x):
        z = (x - mu) / sigma
        return math.exp(-0.5 * z * z) / (sigma * math.sqrt(2.0 * math.pi))

    mass = cdf(hi) - cdf(lo)
    return mu + sigma * sigma * (pdf(lo) - pdf(hi)) / mass


def test_duration_mean_matches_truncated_normal_formula():
    mu, sigma, lo, hi = 90.0, 45.0, 5.0, 120.0  # heavy right truncation
    params = _flat_params(0.2, mu, sigma, lo, hi)
    rng = np.random.default_rng(3)
    draws = _sample_durations(params.row(12), rng, 100_000)
    expected = _truncated_normal_mean(mu, sigma, lo, hi)
    assert expected < mu  # the cut upper tail must pull the mean down
    assert draws.mean() == pytest.approx(expected, rel=0.01)


def test_scalar_and_batch_samplers_share_a_distribution():
    params = _flat_params(0.2, 90.0, 35.0)
    rng1 = np.random.default_rng(7)
    scalar = np.array([sample_duration(params, 9, rng1) for _ in range(20_000)])
    rng2 = np.random.default_rng(8)
    batch = _sample_durations(params.row(9), rng2, 20_000)
    assert scalar.mean() == pytest.approx(batch.mean(), rel=0.01)
    assert scalar.std() == pytest.approx(batch.std(), rel=0.05)


# -- arrivals ------------------------------------------------------------------


def test_zero_rate_yields_no_events():
    params = _flat_params(0.0, 60.0, 15.0)
    sample = sample_arrivals(FleetConfig(), params, seed=0)
    assert sample.events == ()
    assert all(v == 0 for v in sample.offered.values())


def test_same_seed_reproduces_event_list():
    cfg = FleetConfig()
    a = sample_arrivals(cfg, default_params(), seed=42)
    b = sample_arrivals(cfg, default_params(), seed=42)
    assert a.events == b.events
    assert a.blocked == b.blocked
    c = sample_arrivals(cfg, default_params(), seed=43)
    assert c.events != a.events


def test_hourly_counts_have_poisson_moments():
    # 1,000 stations at rate 1/h; short sessions keep blocking at zero
    cfg = FleetConfig(total_evcs=1_000, bus_weights={5: 1.0})
    params = _flat_params(1.0, 10.0, 2.0)
    counts = []
    for seed in range(40):
        sample = sample_arrivals(cfg, params, seed=seed)
        counts.append(sum(1 for e in sample.events if e.t_min < 60.0))
        assert sample.blocked[5] == 0
    counts = np.array(counts, dtype=float)
    # Poisson(1000): mean 1000 +- ~5 sigma/sqrt(40), variance 1000 loosely
    assert counts.mean() == pytest.approx(1_000.0, abs=25.0)
    assert 500.0 < counts.var(ddof=1) < 2_000.0


def test_arrival_instants_lie_inside_their_hour():
    sample = sample_arrivals(FleetConfig(), default_params(), seed=5)
    assert all(0.0 <= e.t_min < 1440.0 for e in sample.events)
    durations = [e.duration_min for e in sample.events]
    assert min(durations) >= 5.0
    assert max(durations) <= 480.0


def test_blocking_counts_and_capacity_cap():
    # two stations, flooded with long sessions: most arrivals bounce
    cfg = FleetConfig(total_evcs=2, bus_weights={5: 1.0})
    params = _flat_params(5.0, 400.0, 50.0)
    sample = sample_arrivals(cfg, params, seed=0)
    assert sample.blocked[5] > 0
    assert sample.offered[5] == len(sample.events) + sample.blocked[5]
    profile = build_profile(sample.events, buses=(5,))
    assert profile.counts.max() <= 2


def test_occupancy_never_exceeds_station_count():
    cfg = FleetConfig()
    capacity = cfg.evcs_per_bus()
    for seed in range(3):
        profile, _ = generate_day(cfg, None, seed)
        for j, bus in enumerate(profile.buses):
            assert profile.counts[:, j].max() <= capacity[bus]


def test_unsaturated_occupancy_matches_offered_load():
    # Little's law sanity: occupancy/station ~= lambda * E[duration] / 60
    lam, mu, sigma = 0.2, 60.0, 15.0
    params = _flat_params(lam, mu, sigma)
    profile, sample = generate_day(FleetConfig(), params, seed=11)
    assert sum(sample.blocked.values()) == 0
    steady = profile.total_counts()[360:].mean() / 13_318
    expected = lam * _truncated_normal_mean(mu, sigma, 5.0, 480.0) / 60.0
    assert steady == pytest.approx(expected, rel=0.03)


# -- profiles ------------------------------------------------------------------


def test_single_event_occupancy_window():
    profile = build_profile([ArrivalEvent(5, 600.0, 30.0)], buses=(5, 6, 8))
    col = profile.buses.index(5)
    assert profile.counts[600:630, col].tolist() == [1] * 30
    assert profile.counts[:600, col].sum() == 0
    assert profile.counts[630:, col].sum() == 0
    assert profile.counts[:, profile.buses.index(6)].sum() == 0


def test_count_minutes_conserve_integer_durations():
    events = [ArrivalEvent(5, 10.0, 25.0), ArrivalEvent(6, 100.0, 60.0),
              ArrivalEvent(8, 1_400.0, 100.0)]  # last one clips at midnight
    profile = build_profile(events)
    clipped_total = 25 + 60 + (1_440 - 1_400)
    assert int(profile.counts.sum()) == clipped_total


def test_count_minutes_approximate_sampled_durations():
    profile, sample = generate_day(FleetConfig(), None, seed=1)
    clipped = sum(min(e.duration_min, 1_440.0 - e.t_min)
                  for e in sample.events)
    assert profile.counts.sum() == pytest.approx(clipped,
                                                 rel=len(sample.events) and 0.01)


def test_event_past_midnight_warns_and_contributes_nothing():
    with pytest.warns(UserWarning, match="beyond the 24 h horizon"):
        profile = build_profile([ArrivalEvent(5, 1_500.0, 30.0)])
    assert profile.counts.sum() == 0


def test_afternoon_peak_exceeds_morning():
    profile, _ = generate_day(FleetConfig(), None, seed=0)
    total = profile.total_p_mw()
    assert total.argmax() >= 720
    assert total.max() > total[:720].max()


def test_connected_count_and_power_consistency():
    profile, _ = generate_day(FleetConfig(), None, seed=0)
    assert connected_count(profile, 5, 840.0) == profile.count_at(5, 840)
    assert profile.p_kw_at(5, 840) == profile.count_at(5, 840) * 24.0
    with pytest.raises(KeyError):
        connected_count(profile, 7, 840.0)
    with pytest.raises(ValueError):
        connected_count(profile, 5, 1_440.0)
    empty = build_profile([])
    assert connected_count(empty, 5, 0.0) == 0


def test_attack_window_has_enough_connected_evs():
    profile, _ = generate_day(FleetConfig(), None, seed=0)
    window = profile.total_counts()[680:]
    assert int(window.min()) >= 3_750  # 90 MW at 24 kW each


def test_profile_csv_round_trip(tmp_path):
    profile, _ = generate_day(FleetConfig(), None, seed=2)
    path = tmp_path / "profile.csv"
    profile.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "minute,bus_id,ev_count,p_kw"
    assert len(lines) == 1 + 1_440 * 3
    again = LoadProfile.from_csv(path)
    assert again.buses == profile.buses
    assert (again.counts == profile.counts).all()
    assert again.rate_kw == profile.rate_kw


def test_profile_csv_rejects_wrong_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("minute,bus,count\n")
    with pytest.raises(ValueError):
        LoadProfile.from_csv(path)


# -- calibration ---------------------------------------------------------------


def test_calibration_report_passes_on_shipped_table():
    report = calibrate(seeds=range(3))
    assert report.passed
    text = report.format()
    assert "PASS" in text and "FAIL" not in text
    assert len(report.targets) == 4


def test_calibration_report_flags_a_bad_table():
    report = calibrate(params=_flat_params(0.05, 30.0, 10.0),
                       seeds=range(2))
    assert not report.passed
    assert any(not t.passed for t in report.targets)
    assert "FAIL" in report.format()
