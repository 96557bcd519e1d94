"""Dataset folder naming, raw-file round trips, sweep scanning, simulator output."""

import numpy as np
import pytest

from nrpos.chanest import detect_toa, impulse_response
from nrpos.dataset import (
    MAX_TX_GAIN_DB,
    RAW_FILE_NAMES,
    DatasetError,
    DatasetRecord,
    DatasetWarning,
    folder_name,
    parse_folder_name,
    read_record,
    record_from_simulation,
    scan_dataset,
    write_record,
)
from nrpos.fixedpoint import IqBufferQ15
from nrpos.metrics import estimate_snr, power_per_re
from nrpos.ofdm import default_numerology
from nrpos.refsig import default_srs_config
from nrpos.simchan import RttScenario

CFG = default_numerology()
K = CFG.fft_size


def make_buffer(rng, num_samples):
    return IqBufferQ15(rng.integers(-32768, 32768, size=2 * num_samples, dtype=np.int16))


def make_record(rng, distance=10.0, gain=MAX_TX_GAIN_DB, snapshots=1, meta=None):
    return DatasetRecord(
        distance_m=distance,
        tx_gain_db=gain,
        srs_chF=make_buffer(rng, 624 * snapshots),
        srs_chF_lin_interp=make_buffer(rng, 1247 * snapshots),
        srs_chT=make_buffer(rng, K * snapshots),
        noise=make_buffer(rng, 624 * snapshots),
        meta=meta or {},
    )


class TestFolderNames:
    def test_zero_attenuation_is_max_gain(self):
        assert parse_folder_name("10m_ue_att_0") == (10.0, 89.5)

    def test_fifty_db_attenuation(self):
        assert parse_folder_name("7m_ue_att_50") == (7.0, 39.5)

    def test_nonmatching_name_rejected(self):
        with pytest.raises(DatasetError):
            parse_folder_name("xyz")

    def test_round_trip_with_folder_name(self):
        for d in (7.0, 8.0, 9.0, 10.0, 11.0):
            for att in (0.0, 10.0, 20.0, 30.0, 40.0, 50.0):
                name = folder_name(d, MAX_TX_GAIN_DB - att)
                assert parse_folder_name(name) == (d, MAX_TX_GAIN_DB - att)

    def test_integer_formatting(self):
        assert folder_name(10.0, 89.5) == "10m_ue_att_0"
        assert folder_name(7.0, 39.5) == "7m_ue_att_50"

    def test_fractional_values_survive(self):
        name = folder_name(7.5, 89.5 - 12.5)
        assert name == "7.5m_ue_att_12.5"
        assert parse_folder_name(name) == (7.5, 77.0)

    def test_permissive_fallback_tokens(self):
        assert parse_folder_name("run3_10m_ue_att_20_retry") == (10.0, 69.5)

    def test_distance_token_requires_m_suffix(self):
        with pytest.raises(DatasetError):
            parse_folder_name("10_ue_att_0x")

    def test_gain_above_max_rejected(self):
        with pytest.raises(DatasetError):
            folder_name(10.0, 95.0)


class TestRecordValidation:
    def test_interp_must_cover_comb(self):
        rng = np.random.default_rng(0)
        with pytest.raises(DatasetError):
            DatasetRecord(
                distance_m=1.0,
                tx_gain_db=89.5,
                srs_chF=make_buffer(rng, 624),
                srs_chF_lin_interp=make_buffer(rng, 100),
                srs_chT=make_buffer(rng, K),
                noise=make_buffer(rng, 624),
            )

    def test_negative_distance_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(DatasetError):
            make_record(rng, distance=-1.0)

    def test_snapshot_count_from_impulse_blocks(self):
        rng = np.random.default_rng(1)
        assert make_record(rng, snapshots=3).num_snapshots(K) == 3

    def test_partial_block_rejected(self):
        rng = np.random.default_rng(2)
        rec = make_record(rng)
        object.__setattr__(rec, "srs_chT", make_buffer(rng, K + 7))
        with pytest.raises(DatasetError):
            rec.num_snapshots(K)


class TestRoundTrip:
    def test_bit_exact_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        rec = make_record(rng, snapshots=2, meta={"seed": "7", "snr_db": "25.0"})
        folder = write_record(rec, tmp_path)
        assert folder.name == "10m_ue_att_0"
        back = read_record(folder)
        for name in ("srs_chF", "srs_chF_lin_interp", "srs_chT", "noise"):
            assert np.array_equal(getattr(back, name).data, getattr(rec, name).data)
        assert back.distance_m == rec.distance_m
        assert back.tx_gain_db == rec.tx_gain_db
        assert dict(back.meta) == dict(rec.meta)

    def test_impulse_file_size_one_snapshot(self, tmp_path):
        rng = np.random.default_rng(4)
        folder = write_record(make_record(rng), tmp_path)
        assert (folder / "srs_chT.raw").stat().st_size == 1536 * 4

    def test_missing_file_named_in_error(self, tmp_path):
        rng = np.random.default_rng(5)
        folder = write_record(make_record(rng), tmp_path)
        (folder / "noise.raw").unlink()
        with pytest.raises(DatasetError, match="noise.raw"):
            read_record(folder)

    def test_truncated_file_rejected(self, tmp_path):
        rng = np.random.default_rng(6)
        folder = write_record(make_record(rng), tmp_path)
        raw = (folder / "srs_chF.raw").read_bytes()
        (folder / "srs_chF.raw").write_bytes(raw[:-3])
        with pytest.raises(DatasetError, match="truncated"):
            read_record(folder)

    def test_empty_noise_warns_but_reads(self, tmp_path):
        rng = np.random.default_rng(7)
        rec = make_record(rng)
        folder = write_record(rec, tmp_path)
        (folder / "noise.raw").write_bytes(b"")
        with pytest.warns(DatasetWarning, match="noise.raw is empty"):
            back = read_record(folder)
        assert len(back.noise) == 0

    def test_meta_absent_is_fine(self, tmp_path):
        rng = np.random.default_rng(8)
        folder = write_record(make_record(rng), tmp_path)
        assert read_record(folder).meta == {}

    def test_meta_written_sorted(self, tmp_path):
        rng = np.random.default_rng(9)
        rec = make_record(rng, meta={"zeta": "1", "alpha": "2"})
        folder = write_record(rec, tmp_path)
        assert (folder / "meta.txt").read_text() == "alpha=2\nzeta=1\n"


class TestScan:
    def test_five_by_six_sweep_yields_thirty_records(self, tmp_path):
        rng = np.random.default_rng(10)
        for d in (7, 8, 9, 10, 11):
            for att in (0, 10, 20, 30, 40, 50):
                write_record(
                    make_record(rng, distance=float(d), gain=MAX_TX_GAIN_DB - att),
                    tmp_path,
                )
        records = scan_dataset(tmp_path)
        assert len(records) == 30
        grid = {(r.distance_m, r.attenuation_db) for r in records}
        assert len(grid) == 30
        assert records[0].distance_m == 7.0 and records[0].attenuation_db == 0.0
        assert records[-1].distance_m == 11.0 and records[-1].attenuation_db == 50.0

    def test_unrecognized_folder_with_raw_files_warns(self, tmp_path):
        rng = np.random.default_rng(11)
        write_record(make_record(rng), tmp_path)
        stray = tmp_path / "calibration_run"
        stray.mkdir()
        (stray / RAW_FILE_NAMES[0]).write_bytes(b"\x00" * 8)
        with pytest.warns(DatasetWarning, match="unrecognized folder name"):
            records = scan_dataset(tmp_path)
        assert len(records) == 1

    def test_intermediate_grouping_dirs_are_silent(self, tmp_path):
        rng = np.random.default_rng(12)
        nested = tmp_path / "day1"
        write_record(make_record(rng), nested)
        import warnings as _warnings

        with _warnings.catch_warnings():
            _warnings.simplefilter("error")
            records = scan_dataset(tmp_path)
        assert len(records) == 1

    def test_broken_record_skipped_with_warning(self, tmp_path):
        rng = np.random.default_rng(13)
        write_record(make_record(rng, distance=7.0), tmp_path)
        folder = write_record(make_record(rng, distance=8.0), tmp_path)
        (folder / "srs_chT.raw").unlink()
        with pytest.warns(DatasetWarning, match="skipping"):
            records = scan_dataset(tmp_path)
        assert [r.distance_m for r in records] == [7.0]

    def test_empty_root(self, tmp_path):
        assert scan_dataset(tmp_path) == []


@pytest.fixture(scope="module")
def sim_record():
    scenario = RttScenario(
        distance_m=10.0,
        numerology=CFG,
        srs=default_srs_config(),
        snr_db=20.0,
        num_snapshots=4,
        seed=99,
    )
    return scenario, record_from_simulation(scenario, tx_gain_db=MAX_TX_GAIN_DB - 5.0)


class TestSimulatorRecords:
    def test_shapes_and_blocks(self, sim_record):
        scenario, rec = sim_record
        assert rec.num_snapshots(K) == 4
        assert len(rec.srs_chF) == 624 * 4
        assert len(rec.srs_chF_lin_interp) == 1247 * 4
        assert len(rec.noise) == 624 * 4
        assert rec.tx_gain_db == pytest.approx(84.5)

    def test_meta_carries_scenario(self, sim_record):
        scenario, rec = sim_record
        assert float(rec.meta["distance_m"]) == 10.0
        assert int(rec.meta["seed"]) == 99
        assert float(rec.meta["rtt_samples"]) == pytest.approx(scenario.rtt_samples)

    def test_snr_from_files_matches_scenario(self, sim_record):
        _, rec = sim_record
        p_signal = power_per_re(rec.srs_chF)
        p_noise = power_per_re(rec.noise)
        snr = estimate_snr(p_signal, p_noise)
        assert snr.db == pytest.approx(20.0, abs=0.5)

    def test_impulse_file_peak_at_ground_truth(self, sim_record):
        scenario, rec = sim_record
        block = rec.srs_chT.to_complex()[:K]
        result = detect_toa(block, CFG)
        assert result.reliable
        gt = scenario.rtt_samples
        assert result.peak_index + result.frac_offset == pytest.approx(gt, abs=0.5)

    def test_round_trip_through_disk(self, sim_record, tmp_path):
        _, rec = sim_record
        folder = write_record(rec, tmp_path)
        back = read_record(folder)
        assert np.array_equal(back.srs_chT.data, rec.srs_chT.data)
        assert dict(back.meta) == dict(rec.meta)
