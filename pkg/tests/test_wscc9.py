"""Case data and base-load profile checks."""

import numpy as np
import pytest

from evcosim.powergrid import (
    LOAD_BUSES,
    NSW_HOURLY_MW,
    build_wscc9,
    build_ybus,
    scale_base_profile,
)


def test_case_loads_total_315_mw():
    model = build_wscc9()
    total_p = sum(ld.p_mw for ld in model.loads)
    total_q = sum(ld.q_mvar for ld in model.loads)
    assert total_p == pytest.approx(315.0, abs=1e-9)
    assert total_q == pytest.approx(115.0, abs=1e-9)
    assert {ld.bus: ld.p_mw for ld in model.loads} == {5: 125.0, 6: 90.0, 8: 100.0}


def test_case_structure():
    model = build_wscc9()
    assert len(model.buses) == 9
    assert len(model.branches) == 9
    assert [m.bus for m in model.machines] == [1, 2, 3]
    assert [m.mva for m in model.machines] == [247.5, 192.0, 128.0]
    assert [m.h_s for m in model.machines] == [23.64, 6.40, 3.01]
    kinds = {b.id: b.kind for b in model.buses}
    assert kinds[1] == "slack" and kinds[2] == "pv" and kinds[3] == "pv"
    assert all(kinds[i] == "pq" for i in (4, 5, 6, 7, 8, 9))
    assert LOAD_BUSES == (5, 6, 8)


def test_ybus_symmetric_and_balanced():
    model = build_wscc9()
    y = build_ybus(model)
    assert np.allclose(y, y.T)
    # Off-diagonal entries are the negated series admittances.
    for br in model.branches:
        i, j = model.bus_index(br.from_bus), model.bus_index(br.to_bus)
        assert y[i, j] == pytest.approx(-1.0 / complex(br.r, br.x))


def test_machine_overrides():
    model = build_wscc9().with_machines(h_s=(2.0, 2.0, 2.0), droop=(0.08,) * 3)
    assert [m.h_s for m in model.machines] == [2.0, 2.0, 2.0]
    assert [m.droop for m in model.machines] == [0.08, 0.08, 0.08]
    # untouched fields survive
    assert [m.mva for m in model.machines] == [247.5, 192.0, 128.0]
    with pytest.raises(ValueError):
        build_wscc9().with_machines(h_s=(1.0, 2.0))


def test_nsw_profile_statistics():
    series = np.array(NSW_HOURLY_MW)
    assert series.size == 24
    assert series.min() == 5897.0
    assert series.max() == 8214.0
    assert series.mean() == pytest.approx(6968.0, abs=1e-9)
    # trough overnight, peak in the evening
    assert int(series.argmin()) == 4
    assert int(series.argmax()) == 18


def test_scale_base_profile_to_case_average():
    k, per_bus = scale_base_profile(NSW_HOURLY_MW, 315.0)
    assert k == pytest.approx(315.0 / 6968.0, rel=1e-12)
    total = sum(per_bus.values())
    assert total.mean() == pytest.approx(315.0, abs=1e-9)
    assert total.min() == pytest.approx(5897.0 * k, abs=1e-9)
    assert total.max() == pytest.approx(8214.0 * k, abs=1e-9)
    # scaled extremes to 0.1 MW: 5897 k = 266.58, 8214 k = 371.33
    assert round(total.min(), 1) == 266.6
    assert round(total.max(), 1) == 371.3
    # split follows the case loads 125:90:100
    assert per_bus[5].mean() == pytest.approx(315.0 * 125 / 315, abs=1e-9)
    assert per_bus[6].mean() == pytest.approx(315.0 * 90 / 315, abs=1e-9)
    assert per_bus[8].mean() == pytest.approx(315.0 * 100 / 315, abs=1e-9)


def test_scale_base_profile_identity():
    k, per_bus = scale_base_profile(NSW_HOURLY_MW, 6968.0)
    assert k == pytest.approx(1.0, rel=1e-12)
    total = sum(per_bus.values())
    assert np.allclose(total, NSW_HOURLY_MW)


def test_scale_base_profile_rejects_bad_input():
    with pytest.raises(ValueError):
        scale_base_profile([], 315.0)
    with pytest.raises(ValueError):
        scale_base_profile([100.0, -5.0], 315.0)
    with pytest.raises(ValueError):
        scale_base_profile(NSW_HOURLY_MW, 0.0)
