import numpy as np
import pytest

from grazelab.census import census, default_grid, scan_1d
from grazelab.model import ForcingParams, published_params
from grazelab.strobo import StroboMap


class TestCensusBasics:
    def test_drive_off_single_fixed_point(self, params, forcing_off):
        rep = census(params, forcing_off, n_grid=(16, 16))
        assert not rep.failed
        assert len(rep.orbits) == 1
        orb = rep.orbits[0]
        assert orb.period == 1
        assert str(orb.itinerary) == "0"
        eq = params.equilibrium().as_array()
        assert np.abs(orb.points[0] - eq).max() < 1e-9

    def test_permutation_property(self, params):
        f = ForcingParams(A=2.5, T=0.5, d=0.5)
        rep = census(params, f, n_grid=(24, 24))
        assert not rep.failed
        n = len(rep.points)
        assert sorted(rep.nu.tolist()) == list(range(n))

    def test_period_adding_window_known_orbit(self, params):
        # inside the located 1/8 window the stable orbit spikes once in eight
        f = ForcingParams(A=1.94, T=0.5, d=0.5)
        rep = census(params, f, n_grid=(32, 32))
        assert not rep.failed
        cycles = [o for o in rep.orbits if o.period > 1]
        assert len(cycles) == 1
        orb = cycles[0]
        assert orb.period == 8
        assert orb.itinerary.canonical() == (0, 0, 0, 0, 0, 0, 0, 1)
        assert orb.maximin is True
        assert str(orb.rotation) == "1/8"

    def test_orbit_verification_residuals(self, params):
        f = ForcingParams(A=2.5, T=0.5, d=0.5)
        rep = census(params, f, n_grid=(24, 24))
        for orb in rep.orbits:
            assert orb.residual <= 10 * 1e-8

    def test_grid_refinement_stability(self, params):
        f = ForcingParams(A=2.5, T=0.5, d=0.5)
        coarse = census(params, f, n_grid=(16, 16))
        fine = census(params, f, n_grid=(32, 32))
        sig = lambda rep: sorted((o.period, o.itinerary.canonical() if o.itinerary
                                  else o.spikes) for o in rep.orbits)
        assert sig(coarse) == sig(fine)

    def test_default_grid_inside_domain(self, params, forcing_fast):
        Z = default_grid(params, forcing_fast, (16, 16))
        assert params.is_subthreshold(Z).all()

    def test_no_spike_filter(self, params):
        # a grid placed entirely in the spiking region is rejected
        f = ForcingParams(A=3.0, T=0.5, d=0.5)
        sm = StroboMap(params, f)
        Z = np.array([[1.05, 1.1], [1.0, 1.05]])
        assert (sm.classify(Z) >= 1).all()
        rep = census(params, f, grid=Z)
        assert rep.failed
        assert "no grid points" in rep.messages[0]


class TestScans:
    def test_scan_records_failures_and_continues(self, params):
        res = scan_1d(params, ForcingParams(A=1.0, T=0.5, d=0.5),
                      [0.0, 1.94], n_grid=(20, 20))
        assert len(res) == 2
        assert not res[0]["failed"]
        assert res[0]["n_orbits"] == 1
        assert res[1]["orbits"][0]["period"] in (1, 8)

    def test_coexistence_flag(self):
        p = published_params(b=0.55)
        res = scan_1d(p, ForcingParams(A=1.0, T=0.5, d=0.5), [7.131],
                      n_grid=(40, 40))
        assert res[0]["n_orbits"] >= 2
        assert res[0]["coexistence"]
