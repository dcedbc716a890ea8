import numpy as np
import pytest

from trajrisk.dataset import AgentClass, Scene, SceneDataset
from trajrisk.errors import DomainError
from trajrisk.riskmap import (
    QUARTER_BOUNDS,
    RiskHeatmap,
    RiskStratum,
    assign_risk_stratum,
    bin_index,
    build_heatmap,
    build_risk_histogram,
    closest_pair_midpoint,
    lookup_weight,
    normalize_to_weights,
)

from conftest import straight_track, tiny_map


EXT = (0.0, 0.0, 100.0, 100.0)


# ---------------------------------------------------------------------------
# Binning
# ---------------------------------------------------------------------------

def test_bin_index_floor_convention():
    assert bin_index((0.0, 0.0), EXT, 100) == (0, 0)
    assert bin_index((0.999, 0.0), EXT, 100) == (0, 0)
    assert bin_index((1.0, 0.0), EXT, 100) == (1, 0)
    assert bin_index((50.0, 73.2), EXT, 100) == (50, 73)


def test_bin_index_clamps_edges():
    # the max corner belongs to the last bin, not an out-of-range one
    assert bin_index((100.0, 100.0), EXT, 100) == (99, 99)
    assert bin_index((-5.0, 120.0), EXT, 100) == (0, 99)


def test_bin_index_nonsquare_extents():
    ext = (10.0, 0.0, 30.0, 40.0)
    assert bin_index((10.0, 0.0), ext, 4) == (0, 0)
    assert bin_index((19.9, 39.0), ext, 4) == (1, 3)


# ---------------------------------------------------------------------------
# Closest pair
# ---------------------------------------------------------------------------

def test_closest_pair_midpoint_basic():
    vehicles = [("v0", np.array([0.0, 0.0])), ("v1", np.array([10.0, 0.0]))]
    vrus = [("p0", np.array([12.0, 0.0]))]
    mid = closest_pair_midpoint(vehicles, vrus)
    np.testing.assert_allclose(mid, [11.0, 0.0])


def test_closest_pair_empty_side_gives_none():
    assert closest_pair_midpoint([], [("p", np.zeros(2))]) is None
    assert closest_pair_midpoint([("v", np.zeros(2))], []) is None


def test_closest_pair_tie_breaks_on_ids():
    # two pairs at identical distance; lowest (vehicle_id, vru_id) wins
    vehicles = [("vB", np.array([0.0, 0.0])), ("vA", np.array([10.0, 0.0]))]
    vrus = [("p0", np.array([2.0, 0.0])), ("p1", np.array([8.0, 0.0]))]
    mid = closest_pair_midpoint(vehicles, vrus)
    np.testing.assert_allclose(mid, [9.0, 0.0])  # (vA, p1)


# ---------------------------------------------------------------------------
# Histogram
# ---------------------------------------------------------------------------

def test_histogram_counts_one_per_frame(small_dataset):
    ds = small_dataset
    counts = build_risk_histogram(ds, ds.maps[0], grid_n=100)
    # scene s0 has a VRU for 15 frames; scene s1 has none
    assert counts.sum() == 15
    assert counts.min() == 0


def test_histogram_skips_stationary_vehicles(mapspec):
    # only vehicle is stationary -> no pair -> empty histogram
    stat = straight_track("v0", AgentClass.VEHICLE, (50.0, 45.0), (0, 0), 10)
    stat.is_stationary_track = True
    ped = straight_track("p0", AgentClass.PEDESTRIAN, (50.0, 41.0), (0, 0.5), 10)
    ds = SceneDataset(scenes=[Scene("s0", "m0", [stat, ped])],
                      maps=[mapspec], frame_rate_hz=2.0)
    counts = build_risk_histogram(ds, mapspec, grid_n=100)
    assert counts.sum() == 0


def test_histogram_requires_both_classes(mapspec):
    ds = SceneDataset(scenes=[Scene("s0", "m0", [
        straight_track("v0", AgentClass.VEHICLE, (10, 45), (1, 0), 10)])],
        maps=[mapspec], frame_rate_hz=2.0)
    counts = build_risk_histogram(ds, mapspec, grid_n=100)
    assert counts.sum() == 0


def test_histogram_cyclists_count_as_vrus(mapspec):
    ds = SceneDataset(scenes=[Scene("s0", "m0", [
        straight_track("v0", AgentClass.VEHICLE, (10, 45), (1, 0), 5),
        straight_track("c0", AgentClass.CYCLIST, (20, 45), (0, 0.5), 5)])],
        maps=[mapspec], frame_rate_hz=2.0)
    counts = build_risk_histogram(ds, mapspec, grid_n=100)
    assert counts.sum() == 5


def test_histogram_respects_track_lifetimes(mapspec):
    # pedestrian present only frames 6..9 -> 4 countable frames
    ds = SceneDataset(scenes=[Scene("s0", "m0", [
        straight_track("v0", AgentClass.VEHICLE, (10, 45), (1, 0), 10),
        straight_track("p0", AgentClass.PEDESTRIAN, (50, 41), (0, 0.5), 4,
                       first_frame=6)])],
        maps=[mapspec], frame_rate_hz=2.0)
    counts = build_risk_histogram(ds, mapspec, grid_n=100)
    assert counts.sum() == 4


def test_histogram_midpoint_lands_in_expected_bin(mapspec):
    # static pair: vehicle at (40, 50), ped at (44, 50) -> midpoint (42, 50)
    ds = SceneDataset(scenes=[Scene("s0", "m0", [
        straight_track("v0", AgentClass.VEHICLE, (40.0, 50.0), (0, 0), 3),
        straight_track("p0", AgentClass.PEDESTRIAN, (44.0, 50.0), (0, 0), 3)])],
        maps=[mapspec], frame_rate_hz=2.0)
    counts = build_risk_histogram(ds, mapspec, grid_n=100)
    assert counts[42, 50] == 3
    assert counts.sum() == 3


def test_histogram_ignores_other_maps(small_dataset):
    other = tiny_map(map_id="elsewhere")
    counts = build_risk_histogram(small_dataset, other, grid_n=100)
    assert counts.sum() == 0


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

def test_normalize_endpoints():
    counts = np.array([[0, 5], [10, 2]], dtype=np.int64)
    w = normalize_to_weights(counts)
    assert w.min() == 1.0
    assert w.max() == 10.0
    assert w[0, 1] == pytest.approx(1 + 9 * 0.5)


def test_normalize_constant_grid_is_all_ones():
    for fill in (0, 7):
        w = normalize_to_weights(np.full((4, 4), fill, dtype=np.int64))
        np.testing.assert_array_equal(w, np.ones((4, 4)))


def test_normalize_rejects_negative():
    with pytest.raises(DomainError):
        normalize_to_weights(np.array([[-1, 3]]))


def test_normalize_property_random_grids():
    # acceptance-style sweep, kept small here; the full 1000-grid run
    # lives in the acceptance suite
    rng = np.random.default_rng(7)
    for _ in range(100):
        counts = rng.integers(0, 50, size=(8, 8))
        w = normalize_to_weights(counts)
        if counts.min() == counts.max():
            np.testing.assert_array_equal(w, np.ones((8, 8)))
        else:
            assert abs(w.min() - 1.0) < 1e-9
            assert abs(w.max() - 10.0) < 1e-9


# ---------------------------------------------------------------------------
# Heatmap object
# ---------------------------------------------------------------------------

def test_build_heatmap_and_lookup(small_dataset):
    hm = build_heatmap(small_dataset, small_dataset.maps[0], grid_n=100)
    assert hm.grid_n == 100
    assert hm.weights.max() == 10.0
    # the hottest bin is where the histogram peaked
    ix, iy = np.unravel_index(hm.grid.argmax(), hm.grid.shape)
    x = hm.extents[0] + (ix + 0.5) * (hm.extents[2] - hm.extents[0]) / 100
    y = hm.extents[1] + (iy + 0.5) * (hm.extents[3] - hm.extents[1]) / 100
    assert lookup_weight(hm, (x, y)) == 10.0


def test_heatmap_json_round_trip(tmp_path, small_dataset):
    hm = build_heatmap(small_dataset, small_dataset.maps[0], grid_n=50)
    p = tmp_path / "hm.json"
    hm.save(p)
    hm2 = RiskHeatmap.load(p)
    assert hm2.map_id == hm.map_id
    assert hm2.extents == hm.extents
    np.testing.assert_array_equal(hm2.grid, hm.grid)
    np.testing.assert_array_equal(hm2.weights, hm.weights)


def test_heatmap_save_is_deterministic(tmp_path, small_dataset):
    hm = build_heatmap(small_dataset, small_dataset.maps[0], grid_n=50)
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    hm.save(p1)
    hm.save(p2)
    assert p1.read_bytes() == p2.read_bytes()


# ---------------------------------------------------------------------------
# Strata
# ---------------------------------------------------------------------------

def test_quarter_bounds():
    assert QUARTER_BOUNDS == (3.25, 5.5, 7.75)


@pytest.mark.parametrize("w,expected", [
    (1.0, RiskStratum.LOW),
    (3.2499, RiskStratum.LOW),
    (3.25, RiskStratum.MEDIUM),
    (5.4999, RiskStratum.MEDIUM),
    (5.5, RiskStratum.HIGH),
    (10.0, RiskStratum.HIGH),
])
def test_vehicle_strata(w, expected):
    assert assign_risk_stratum(w, AgentClass.VEHICLE) is expected


@pytest.mark.parametrize("w,expected", [
    (1.0, RiskStratum.LOW),
    (3.2499, RiskStratum.LOW),
    (3.25, RiskStratum.HIGH),
    (10.0, RiskStratum.HIGH),
])
def test_pedestrian_strata(w, expected):
    assert assign_risk_stratum(w, AgentClass.PEDESTRIAN) is expected
    assert assign_risk_stratum(w, AgentClass.CYCLIST) is expected


def test_stratum_rejects_out_of_range():
    with pytest.raises(DomainError):
        assign_risk_stratum(0.5, AgentClass.VEHICLE)
    with pytest.raises(DomainError):
        assign_risk_stratum(10.5, AgentClass.PEDESTRIAN)
