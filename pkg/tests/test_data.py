"""Tests for synthetic domain generation and the TSD1 container."""

from __future__ import annotations

import struct

import numpy as np
import pytest
from pydantic import ValidationError

from mapu_lab.data import (
    DATASET_MAGIC,
    HEADER,
    ClassArchetype,
    Dataset,
    DomainSpec,
    ShiftParams,
    dataset_bytes,
    default_archetypes,
    domain_seed,
    generate_domain,
    load,
    save,
    split,
)
from mapu_lab.errors import DataFormatError, DomainError, ShapeError


def _tiny() -> Dataset:
    samples = np.arange(2 * 1 * 3, dtype=np.float32).reshape(2, 1, 3)
    return Dataset(samples, np.array([1, 0]), 2)


class TestShift:
    """The shift knob and its interpolation."""

    def test_knob_zero_matches_defaults_except_noise(self):
        shift = ShiftParams.from_knob(0.0)
        assert shift.amplitude_scale == 1.0
        assert shift.time_warp == 1.0
        assert shift.mixing_angle == 0.0
        assert shift.noise_sigma == pytest.approx(0.1)

    def test_knob_one(self):
        shift = ShiftParams.from_knob(1.0)
        assert shift.noise_sigma == pytest.approx(0.4)
        assert shift.amplitude_scale == pytest.approx(1.6)
        assert shift.time_warp == pytest.approx(1.4)
        assert shift.mixing_angle == pytest.approx(np.pi / 4)

    def test_knob_range(self):
        with pytest.raises(DomainError):
            ShiftParams.from_knob(1.5)

    def test_time_warp_bounds(self):
        with pytest.raises(ValidationError):
            ShiftParams(time_warp=3.0)

    def test_default_archetypes(self):
        archetypes = default_archetypes()
        assert len(archetypes) == 6
        assert {a.waveform for a in archetypes} == {"sine", "square", "chirp"}


class TestGenerateDomain:
    """Balanced, seeded, bounded synthetic domains."""

    def test_balanced_labels_and_dtype(self):
        ds = generate_domain(DomainSpec(seed=1), 50, 3, 64, 5)
        assert ds.samples.dtype == np.float32
        assert ds.samples.shape == (50, 3, 64)
        assert np.bincount(ds.labels).tolist() == [10, 10, 10, 10, 10]

    def test_same_seed_same_data(self):
        spec = DomainSpec(seed=4, shift=ShiftParams.from_knob(0.6))
        a = generate_domain(spec, 20, 2, 64, 4)
        b = generate_domain(spec, 20, 2, 64, 4)
        assert dataset_bytes(a) == dataset_bytes(b)

    def test_noise_is_clipped(self):
        """|x| never exceeds amplitude * scale + 6 sigma."""
        shift = ShiftParams(noise_sigma=0.5, amplitude_scale=1.0)
        ds = generate_domain(DomainSpec(seed=2, shift=shift), 200, 2, 64, 5)
        peak = max(a.amplitude for a in default_archetypes()[:5])
        assert np.abs(ds.samples).max() <= peak + 6 * 0.5 + 1e-5

    def test_noise_free_signal_is_bounded_by_amplitude(self):
        shift = ShiftParams(noise_sigma=0.0, mixing_angle=0.3)
        ds = generate_domain(DomainSpec(seed=2, shift=shift), 30, 3, 64, 3)
        assert np.abs(ds.samples).max() <= 1.0 + 1e-6

    def test_shift_changes_the_signal(self):
        a = generate_domain(DomainSpec(seed=3), 10, 2, 64, 2)
        b = generate_domain(DomainSpec(seed=3, shift=ShiftParams.from_knob(1.0)), 10, 2, 64, 2)
        assert not np.allclose(a.samples, b.samples)

    def test_nyquist_guard(self):
        fast = [ClassArchetype(frequency=20.0), ClassArchetype(frequency=2.0)]
        with pytest.raises(DomainError, match="Nyquist"):
            generate_domain(DomainSpec(archetypes=fast), 10, 1, 32, 2)

    def test_too_many_classes(self):
        with pytest.raises(DomainError, match="archetypes"):
            generate_domain(DomainSpec(), 10, 1, 64, 7)

    def test_domain_seed_is_stable_and_role_specific(self):
        assert domain_seed(1, 0) == domain_seed(1, 0)
        assert domain_seed(1, 0) != domain_seed(1, 1)


class TestSplit:
    def test_stratified_counts(self):
        ds = generate_domain(DomainSpec(seed=5), 40, 1, 32, 4)
        train, test = split(ds, 0.7, seed=1)
        assert np.bincount(train.labels).tolist() == [7, 7, 7, 7]
        assert np.bincount(test.labels).tolist() == [3, 3, 3, 3]

    def test_parts_are_disjoint_and_complete(self):
        ds = generate_domain(DomainSpec(seed=5), 40, 1, 32, 4)
        train, test = split(ds, 0.5, seed=2)
        rows = {r.tobytes() for r in np.concatenate([train.samples, test.samples])}
        assert len(rows) == ds.n

    def test_empty_part_rejected(self):
        with pytest.raises(DomainError):
            split(_tiny(), 0.9, seed=0)


class TestDatasetFile:
    """TSD1 layout, round trip and corruption."""

    def test_header_fixture(self):
        """The 28-byte header against a hand-written byte string."""
        raw = dataset_bytes(_tiny())
        expected = (
            b"TSD1"
            + b"\x01\x00\x00\x00"  # version
            + b"\x02\x00\x00\x00\x00\x00\x00\x00"  # n
            + b"\x01\x00\x00\x00"  # channels
            + b"\x03\x00\x00\x00"  # length
            + b"\x02\x00\x00\x00"  # classes
        )
        assert HEADER.size == 28
        assert raw[:28] == expected
        assert raw[28:36] == struct.pack("<II", 1, 0)
        assert raw[36:40] == struct.pack("<f", 0.0)
        assert len(raw) == 28 + 2 * 4 + 6 * 4

    def test_round_trip_is_bit_exact(self, tmp_path):
        ds = generate_domain(DomainSpec(seed=7, shift=ShiftParams.from_knob(0.6)), 30, 3, 64, 5)
        path = tmp_path / "d.tsd"
        save(ds, path)
        assert path.read_bytes() == dataset_bytes(ds)
        back = load(path)
        assert np.array_equal(back.samples, ds.samples)
        assert np.array_equal(back.labels, ds.labels)
        assert back.num_classes == 5

    def test_save_creates_parent_and_leaves_no_temp(self, tmp_path):
        path = tmp_path / "nested" / "d.tsd"
        save(_tiny(), path)
        assert [p.name for p in path.parent.iterdir()] == ["d.tsd"]

    @pytest.mark.parametrize(
        ("mutate", "match"),
        [
            (lambda raw: raw[:10], "truncated header"),
            (lambda raw: b"XXXX" + raw[4:], "magic"),
            (lambda raw: raw[:4] + b"\x02\x00\x00\x00" + raw[8:], "version"),
            (lambda raw: raw[:-1], "truncated"),
            (lambda raw: raw + b"\x00", "trailing"),
        ],
    )
    def test_corruption(self, tmp_path, mutate, match):
        path = tmp_path / "bad.tsd"
        path.write_bytes(mutate(dataset_bytes(_tiny())))
        with pytest.raises(DataFormatError, match=match):
            load(path)

    def test_label_out_of_range_in_file(self, tmp_path):
        raw = bytearray(dataset_bytes(_tiny()))
        raw[28:32] = struct.pack("<I", 9)
        path = tmp_path / "bad.tsd"
        path.write_bytes(bytes(raw))
        with pytest.raises(DataFormatError):
            load(path)

    def test_magic_constant(self):
        assert DATASET_MAGIC == b"TSD1"


class TestDataset:
    def test_label_shape_mismatch(self):
        with pytest.raises(ShapeError):
            Dataset(np.zeros((2, 1, 3), dtype=np.float32), np.array([0]), 2)

    def test_batch_widens_to_float64(self):
        assert _tiny().batch(np.array([1])).dtype == np.float64
