"""
Unit tests for the lattice core service
"""

import numpy as np
import pytest

from hydrolimit.core import CapacityError, DomainError
from hydrolimit.services.lattice_core import (
    TorusGeometry, LocalWindow, Configuration, exchange, flip, translate,
    read_window, window_patterns, pattern_bits,
)


def config_1d(*occ):
    return Configuration(TorusGeometry(1, len(occ)), occ)


class TestTorusGeometry:
    """Test TorusGeometry class"""

    def test_rejects_degenerate_torus(self):
        with pytest.raises(DomainError):
            TorusGeometry(0, 4)
        with pytest.raises(DomainError):
            TorusGeometry(1, 1)

    def test_row_major_indexing_wraps(self):
        geometry = TorusGeometry(2, 3)
        assert geometry.index((1, 2)) == 5
        assert geometry.index((-1, 0)) == 6
        assert geometry.coords(5) == (1, 2)

    def test_neighbors_wrap_around(self):
        geometry = TorusGeometry(1, 4)
        assert sorted(geometry.neighbors(0).tolist()) == [1, 3]
        assert geometry.is_neighbor(0, 3)
        assert not geometry.is_neighbor(0, 2)
        assert not geometry.is_neighbor(1, 1)

    def test_each_unordered_pair_once(self):
        geometry = TorusGeometry(2, 4)
        bonds = geometry.bond_table
        assert bonds.shape == (2 * 16, 2)
        assert len({frozenset(b) for b in bonds.tolist()}) == 32

    def test_offset_table_matches_shift(self):
        geometry = TorusGeometry(2, 3)
        window = LocalWindow(1, 2)
        table = geometry.offset_table(window.offsets)
        for site in range(geometry.n_sites):
            expected = [geometry.shift(site, off) for off in window.offsets]
            assert table[site].tolist() == expected


class TestLocalWindow:
    """Test LocalWindow class"""

    def test_offsets_sorted_lexicographically(self):
        window = LocalWindow(1, 1)
        assert window.offsets.ravel().tolist() == [-1, 0, 1]
        assert window.origin_bit == 1
        assert window.n_patterns == 8

    def test_bit_of(self):
        window = LocalWindow(1, 2)
        assert window.bit_of((0, 0)) == 4
        with pytest.raises(DomainError):
            window.bit_of((2, 0))

    def test_enumeration_limit(self):
        LocalWindow(2, 1).require_enumerable()
        with pytest.raises(CapacityError):
            LocalWindow(2, 2).require_enumerable()


class TestConfiguration:
    """Test Configuration class"""

    def test_rejects_non_binary_values(self):
        with pytest.raises(DomainError):
            config_1d(0, 2, 1, 0)

    def test_wrong_length(self):
        with pytest.raises(DomainError):
            Configuration(TorusGeometry(1, 4), [1, 0])

    def test_occupancy_is_read_only(self):
        eta = config_1d(1, 0, 0, 0)
        with pytest.raises(ValueError):
            eta.occupancy[0] = 0

    def test_state_index(self):
        geometry = TorusGeometry(1, 4)
        eta = Configuration(geometry, [1, 0, 1, 1])
        assert eta.state_index() == 13
        assert Configuration.from_state_index(geometry, 13) == eta

    def test_snapshot_bytes(self):
        eta = Configuration(TorusGeometry(2, 5), np.arange(25) % 3 == 0)
        payload = eta.to_bytes()
        assert payload[:4] == b"GKCF"
        assert Configuration.from_bytes(payload) == eta

    def test_bad_snapshot_magic(self):
        payload = b"XXXX" + config_1d(1, 0).to_bytes()[4:]
        with pytest.raises(DomainError):
            Configuration.from_bytes(payload)


class TestMoves:
    """Test exchange, flip and translate"""

    def test_exchange_1d(self):
        assert exchange(config_1d(1, 0, 0, 0), 0, 1) == config_1d(0, 1, 0, 0)

    def test_exchange_across_the_wrap_in_2d(self):
        geometry = TorusGeometry(2, 3)
        eta = Configuration(geometry, [1, 0, 0, 0, 0, 0, 0, 0, 0])
        moved = exchange(eta, (0, 0), (0, 2))
        assert moved[(0, 2)] == 1
        assert moved[(0, 0)] == 0

    def test_exchange_is_an_involution(self):
        eta = config_1d(1, 1, 0, 1, 0)
        assert exchange(exchange(eta, 2, 3), 2, 3) == eta

    def test_exchange_conserves_particles(self):
        eta = config_1d(1, 1, 0, 1, 0)
        assert exchange(eta, 4, 0).particle_count == eta.particle_count

    def test_exchange_of_non_neighbors(self):
        with pytest.raises(DomainError):
            exchange(config_1d(1, 0, 0, 0), 0, 2)

    def test_flip(self):
        assert flip(config_1d(0, 0, 0, 0), 2) == config_1d(0, 0, 1, 0)
        assert flip(flip(config_1d(0, 1, 0, 0), 1), 1) == config_1d(0, 1, 0, 0)

    def test_translate(self):
        assert translate(config_1d(1, 0, 0, 0), 1) == config_1d(0, 0, 0, 1)

    def test_translate_2d(self):
        geometry = TorusGeometry(2, 3)
        eta = Configuration.empty(geometry)
        eta = flip(eta, (1, 2))
        shifted = translate(eta, (1, 1))
        assert shifted[(0, 1)] == 1
        assert shifted.particle_count == 1


class TestWindows:
    """Test window reading"""

    def test_read_window(self):
        assert read_window(config_1d(1, 0, 1, 0), 0, LocalWindow(1, 1)) == 0b010

    def test_read_window_dimension_mismatch(self):
        with pytest.raises(DomainError):
            read_window(config_1d(1, 0, 1, 0), 0, LocalWindow(1, 2))

    def test_vectorised_patterns_agree(self):
        eta = Configuration(TorusGeometry(2, 4), (np.arange(16) * 7) % 3 == 1)
        window = LocalWindow(1, 2)
        patterns = window_patterns(eta.occupancy, eta.geometry.offset_table(window.offsets))
        assert patterns.tolist() == [read_window(eta, x, window) for x in range(16)]

    def test_pattern_bits(self):
        assert pattern_bits(0b010, LocalWindow(1, 1)).tolist() == [0, 1, 0]
