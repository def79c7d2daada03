import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsb.errors import ConfigError, ContractError
from tsb.model import hard_decision
from tsb.specgen import (
    InterferenceMode,
    ScenarioConfig,
    combine_powers_dbm,
    config_hash,
    generate_frame,
    interference_schedule,
    noise_power_mw,
    read_dataset,
    write_dataset,
)


def sweep_oracle(start, step, channels, slots, period):
    mask = [[False] * slots for _ in range(channels)]
    for t in range(slots):
        ch = int(math.floor(start + step * (t % period))) % channels
        mask[ch][t] = True
    return np.array(mask)


def test_combine_examples():
    assert combine_powers_dbm([-50.0, -50.0]) == pytest.approx(10 * math.log10(2e-5), abs=1e-10)
    assert combine_powers_dbm([-50.0, -50.0]) == pytest.approx(-46.9897, abs=1e-4)
    assert combine_powers_dbm([-63.25]) == -63.25
    assert combine_powers_dbm([-30.0, -90.0]) == pytest.approx(-30.0, abs=1e-4)


def test_combine_errors():
    with pytest.raises(ContractError):
        combine_powers_dbm([])
    with pytest.raises(ContractError):
        combine_powers_dbm([-50.0, np.nan])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-120, 10), min_size=1, max_size=5), st.floats(-120, 10))
def test_combine_is_monotone_and_matches_linear_sum(values, extra):
    base = float(combine_powers_dbm(values))
    assert float(combine_powers_dbm(values + [extra])) >= base - 1e-12
    linear = 10 * math.log10(math.fsum(10 ** (v / 10) for v in values))
    assert base == pytest.approx(linear, abs=1e-9)


def test_sweep_schedule_matches_oracle():
    for start, step in [(0, 1), (5, 1), (0, 1.5), (3, 0.5)]:
        mode = InterferenceMode("sweep", start=start, step=step)
        got = interference_schedule(mode, 32, 130, 20)
        np.testing.assert_array_equal(got, sweep_oracle(start, step, 32, 130, 20))


def test_sweep_diagonal():
    mask = interference_schedule(InterferenceMode("sweep"), 24, 100, 20)
    t = np.arange(100)
    assert mask[t % 20, t].all()
    assert mask.sum() == 100


def test_fixed_hopping_comb():
    fixed = interference_schedule(InterferenceMode("fixed", channels=(3,)), 8, 50, 20)
    assert fixed[3].all() and fixed.sum() == 50
    hop = interference_schedule(InterferenceMode("hopping"), 8, 100, 20, seed=4)
    assert (hop.sum(axis=0) == 1).all()
    for p in range(5):
        block = hop[:, p * 20 : (p + 1) * 20]
        assert (block == block[:, :1]).all()
    comb = interference_schedule(InterferenceMode("comb", start=1, spacing=3), 10, 5, 20)
    np.testing.assert_array_equal(comb.any(axis=1), [i % 3 == 1 for i in range(10)])
    assert comb.all(axis=1).sum() == 3


def test_mode_validation():
    with pytest.raises(ConfigError):
        InterferenceMode("chirp")
    with pytest.raises(ConfigError):
        ScenarioConfig(channels=4, mode=InterferenceMode("fixed", channels=(4,)))
    with pytest.raises(ConfigError):
        ScenarioConfig(mu_power_dbm=(-60.0, -30.0))
    with pytest.raises(ConfigError):
        ScenarioConfig(hu_power_dbm=(-40.0, -48.0))


def small(**kw):
    base = dict(channels=16, slots=400, seed=3)
    base.update(kw)
    return ScenarioConfig(**base)


def test_frame_labels_and_jammer_power():
    frame = generate_frame(small())
    assert frame.power.shape == (16, 400)
    assert np.isfinite(frame.power).all()
    np.testing.assert_array_equal(frame.occupancy, hard_decision(frame.power, -50.0))
    assert (frame.power[frame.mu_active] >= -50.0).all()
    assert (frame.power[frame.hu_active] >= -48.0).all()


def test_noise_only_cells_sit_near_the_floor():
    cfg = small(hu_count=0, slots=4000)
    frame = generate_frame(cfg)
    quiet = frame.power[~frame.mu_active]
    # dB spread of a gamma(k) mean of exponentials
    sigma_db = 10 / math.log(10) / math.sqrt(cfg.noise_looks)
    inside = np.abs(quiet - cfg.noise_floor_dbm) <= 3 * sigma_db
    assert inside.mean() > 0.99
    assert (frame.occupancy[~frame.mu_active] == 0).all()
    mw = noise_power_mw(cfg, 0)
    assert mw.mean() == pytest.approx(1e-9, rel=0.02)


def test_sweep_occupancy_rate():
    frame = generate_frame(small(channels=32, slots=4000, hu_count=0))
    rates = frame.mu_active[:20].mean(axis=1)
    np.testing.assert_allclose(rates, 1 / 20, atol=1e-12)
    assert not frame.mu_active[20:].any()


def test_generation_is_reproducible():
    a, b = generate_frame(small()), generate_frame(small())
    assert a.power.tobytes() == b.power.tobytes()
    c = generate_frame(small(seed=4))
    assert not np.array_equal(a.power, c.power)


def test_noise_streams_are_per_channel():
    # channel 5's noise does not depend on how many channels exist
    a = noise_power_mw(small(channels=8), 5)
    b = noise_power_mw(small(channels=16), 5)
    np.testing.assert_array_equal(a, b)


def test_config_dict_round_trip_and_hash():
    cfg = small(mode=InterferenceMode("fixed", channels=(1, 2)))
    d = cfg.to_dict()
    json.dumps(d)
    assert ScenarioConfig.from_dict(json.loads(json.dumps(d))) == cfg
    assert config_hash(d) == config_hash(json.loads(json.dumps(d)))
    assert len(config_hash(d)) == 16
    assert config_hash(d) != config_hash(small().to_dict())


def test_dataset_round_trip(tmp_path):
    frame = generate_frame(small(slots=50))
    csv_path, meta_path = write_dataset(frame, tmp_path / "d.csv", run_hash="feed")
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "# config_hash=feed"
    assert lines[1].split(",")[:3] == ["slot", "ch0", "ch1"]
    assert len(lines[2].split(",")[1].split(".")[1]) == 6
    assert json.loads(meta_path.read_text())["channels"] == 16
    back = read_dataset(csv_path)
    np.testing.assert_allclose(back.power, frame.power, atol=5e-7)
    np.testing.assert_array_equal(back.mu_active, frame.mu_active)


def test_dataset_column_check(tmp_path):
    frame = generate_frame(small(slots=20))
    csv_path, meta_path = write_dataset(frame, tmp_path / "d.csv")
    meta = json.loads(meta_path.read_text())
    meta["channels"] = 15
    meta_path.write_text(json.dumps(meta))
    with pytest.raises(ContractError):
        read_dataset(csv_path)
    with pytest.raises(FileNotFoundError):
        read_dataset(tmp_path / "nope.csv")
