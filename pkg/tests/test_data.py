"""WAV byte-format fixtures, SNR mixing oracle, corpus determinism."""

import hashlib
import struct

import numpy as np
import pytest

from dpcse.data import (
    SAMPLE_RATE,
    TEST_SNRS_DB,
    TRAIN_SNRS_DB,
    Manifest,
    Record,
    Segment,
    WavFormatError,
    crop_seed,
    load_pair,
    load_wav,
    mix_at_snr,
    save_wav,
    slice_segments,
    synth_corpus,
    synth_noise,
    synth_speech,
)
from dpcse.stft import Waveform


def wav_bytes(pcm_values, rate=16000, channels=1, bits=16, codec=1):
    """Assemble a RIFF/WAVE file from scratch, field by field."""
    data = b"".join(struct.pack("<h", v) for v in pcm_values)
    block = channels * bits // 8
    fmt = struct.pack("<IHHIIHH", 16, codec, channels, rate,
                      rate * block, block, bits)
    body = b"WAVE" + b"fmt " + fmt + b"data" + struct.pack("<I", len(data)) + data
    return b"RIFF" + struct.pack("<I", len(body)) + body


class TestWavIO:
    def test_crafted_bytes_decode(self, tmp_path):
        p = tmp_path / "four.wav"
        p.write_bytes(wav_bytes([0, 16384, -32768, 32767]))
        wave = load_wav(p)
        np.testing.assert_allclose(
            wave.samples, [0.0, 0.5, -1.0, 32767 / 32768], atol=0)
        assert wave.sample_rate == 16000

    def test_round_trip_quantization_bound(self, tmp_path):
        rng = np.random.default_rng(0)
        x = rng.uniform(-1.0, 1.0, 1000)
        p = tmp_path / "rt.wav"
        save_wav(p, Waveform(x, SAMPLE_RATE))
        back = load_wav(p).samples
        assert np.abs(x - back).max() <= 1.0 / 32768

    def test_grid_values_survive_exactly(self, tmp_path):
        x = np.array([-12345, 0, 1, 32767, -32768], dtype=np.int64) / 32768.0
        p = tmp_path / "grid.wav"
        save_wav(p, Waveform(x, SAMPLE_RATE))
        np.testing.assert_array_equal(load_wav(p).samples, x)

    def test_save_bytes_deterministic(self, tmp_path):
        x = np.random.default_rng(1).uniform(-0.5, 0.5, 64)
        p1, p2 = tmp_path / "a.wav", tmp_path / "b.wav"
        save_wav(p1, Waveform(x, SAMPLE_RATE))
        save_wav(p2, Waveform(x, SAMPLE_RATE))
        assert p1.read_bytes() == p2.read_bytes()

    @pytest.mark.parametrize("mutate, message", [
        (dict(rate=44100), "sample_rate 44100"),
        (dict(channels=2), "channels 2"),
        (dict(bits=8), "bit depth 8"),
        (dict(codec=3), "codec 3"),
    ])
    def test_rejects_wrong_format(self, tmp_path, mutate, message):
        p = tmp_path / "bad.wav"
        p.write_bytes(wav_bytes([0, 0], **mutate))
        with pytest.raises(WavFormatError, match=message):
            load_wav(p)

    def test_rejects_not_riff(self, tmp_path):
        p = tmp_path / "bad.wav"
        p.write_bytes(b"OggS" + b"\x00" * 64)
        with pytest.raises(WavFormatError, match="not a RIFF/WAVE"):
            load_wav(p)

    def test_rejects_empty_file(self, tmp_path):
        p = tmp_path / "empty.wav"
        p.write_bytes(b"")
        with pytest.raises(WavFormatError, match="not a RIFF/WAVE"):
            load_wav(p)

    def test_rejects_missing_data_chunk(self, tmp_path):
        fmt = struct.pack("<IHHIIHH", 16, 1, 1, 16000, 32000, 2, 16)
        body = b"WAVE" + b"fmt " + fmt
        p = tmp_path / "nodata.wav"
        p.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
        with pytest.raises(WavFormatError, match='missing "data"'):
            load_wav(p)

    def test_rejects_save_at_wrong_rate(self, tmp_path):
        with pytest.raises(WavFormatError, match="sample_rate 8000"):
            save_wav(tmp_path / "x.wav", Waveform(np.zeros(4), 8000))


class TestMixAtSnr:
    def test_realized_snr_is_exact(self):
        rng = np.random.default_rng(0)
        clean = Waveform(rng.standard_normal(4000) * 0.1, SAMPLE_RATE)
        noise = Waveform(rng.standard_normal(4000) * 0.3, SAMPLE_RATE)
        for target in (15.0, 5.0, 0.0, -5.0):
            mixture, scaled = mix_at_snr(clean, noise, target)
            measured = 10 * np.log10(np.sum(clean.samples ** 2)
                                     / np.sum(scaled.samples ** 2))
            assert measured == pytest.approx(target, abs=1e-9)
            np.testing.assert_allclose(
                mixture.samples, clean.samples + scaled.samples, atol=0)

    def test_longer_noise_crop_is_seeded(self):
        rng = np.random.default_rng(1)
        clean = Waveform(rng.standard_normal(1000), SAMPLE_RATE)
        noise = Waveform(rng.standard_normal(5000), SAMPLE_RATE)
        m1, _ = mix_at_snr(clean, noise, 5.0, seed=11)
        m2, _ = mix_at_snr(clean, noise, 5.0, seed=11)
        m3, _ = mix_at_snr(clean, noise, 5.0, seed=12)
        np.testing.assert_array_equal(m1.samples, m2.samples)
        assert not np.array_equal(m1.samples, m3.samples)

    def test_noise_shorter_rejected(self):
        clean = Waveform(np.ones(100), SAMPLE_RATE)
        noise = Waveform(np.ones(99), SAMPLE_RATE)
        with pytest.raises(ValueError, match="shorter than clean"):
            mix_at_snr(clean, noise, 0.0)

    def test_silent_clean_rejected(self):
        with pytest.raises(ValueError, match="clean signal is silent"):
            mix_at_snr(Waveform(np.zeros(10), SAMPLE_RATE),
                       Waveform(np.ones(10), SAMPLE_RATE), 0.0)

    def test_silent_noise_rejected(self):
        with pytest.raises(ValueError, match="noise crop is silent"):
            mix_at_snr(Waveform(np.ones(10), SAMPLE_RATE),
                       Waveform(np.zeros(10), SAMPLE_RATE), 0.0)


class TestSliceSegments:
    def test_ten_seconds_at_four(self):
        x = np.random.default_rng(0).standard_normal(10 * SAMPLE_RATE)
        segs = slice_segments(x, 4.0, seed=3)
        assert len(segs) == 2
        for s in segs:
            assert len(s.samples) == 4 * SAMPLE_RATE
            assert s.valid_len == 4 * SAMPLE_RATE
            np.testing.assert_array_equal(
                s.samples, x[s.start:s.start + len(s.samples)])

    def test_short_input_zero_padded(self):
        x = np.arange(100, dtype=np.float64)
        (seg,) = slice_segments(x, 1.0, seed=0)
        assert len(seg.samples) == SAMPLE_RATE
        assert seg.valid_len == 100
        np.testing.assert_array_equal(seg.samples[:100], x)
        assert not seg.samples[100:].any()

    def test_deterministic(self):
        x = np.random.default_rng(5).standard_normal(3 * SAMPLE_RATE)
        a = slice_segments(x, 1.0, seed=9)
        b = slice_segments(x, 1.0, seed=9)
        assert [s.start for s in a] == [s.start for s in b]

    def test_bad_length_rejected(self):
        with pytest.raises(ValueError, match="not positive"):
            slice_segments(np.ones(10), 0.0, seed=0)


class TestManifest:
    def make_corpus(self, tmp_path, n=4):
        return Manifest.load(synth_corpus(n, seed=7, out_dir=tmp_path))

    def test_round_trip(self, tmp_path):
        man = self.make_corpus(tmp_path)
        assert len(man) == 4
        man.save(tmp_path / "again.jsonl")
        back = Manifest.load(tmp_path / "again.jsonl")
        assert back.records == man.records

    def test_duplicate_id_rejected(self, tmp_path):
        man = self.make_corpus(tmp_path, n=2)
        man.records.append(man.records[0])
        man.save(tmp_path / "dup.jsonl")
        with pytest.raises(ValueError, match="duplicate utterance id"):
            Manifest.load(tmp_path / "dup.jsonl")

    def test_missing_file_rejected(self, tmp_path):
        man = self.make_corpus(tmp_path, n=2)
        man.records[1].clean = "wav/ghost.wav"
        man.save(tmp_path / "ghost.jsonl")
        with pytest.raises(FileNotFoundError, match="ghost.wav"):
            Manifest.load(tmp_path / "ghost.jsonl")

    def test_missing_key_rejected(self, tmp_path):
        (tmp_path / "bad.jsonl").write_text('{"id": "a", "split": "train"}\n')
        with pytest.raises(ValueError, match="missing 'clean'"):
            Manifest.load(tmp_path / "bad.jsonl")

    def test_triple_needs_snr(self, tmp_path):
        (tmp_path / "c.wav").write_bytes(wav_bytes([0]))
        (tmp_path / "bad.jsonl").write_text(
            '{"id": "a", "split": "train", "clean": "c.wav", "noise": "c.wav"}\n')
        with pytest.raises(ValueError, match="'noise'\\+'snr_db'"):
            Manifest.load(tmp_path / "bad.jsonl")


class TestLoadPair:
    def test_realized_snr_matches_manifest(self, tmp_path):
        man = Manifest.load(synth_corpus(4, seed=3, out_dir=tmp_path))
        for rec in man.records:
            mixture, clean, noise = load_pair(man, rec)
            measured = 10 * np.log10(np.sum(clean.samples ** 2)
                                     / np.sum(noise.samples ** 2))
            assert measured == pytest.approx(rec.snr_db, abs=1e-6)
            np.testing.assert_allclose(
                mixture.samples, clean.samples + noise.samples, atol=0)

    def test_premixed_record(self, tmp_path):
        rng = np.random.default_rng(0)
        clean = Waveform(rng.standard_normal(2000) * 0.2, SAMPLE_RATE)
        noise = Waveform(rng.standard_normal(2000) * 0.1, SAMPLE_RATE)
        save_wav(tmp_path / "c.wav", clean)
        save_wav(tmp_path / "n.wav",
                 Waveform(clean.samples + noise.samples, SAMPLE_RATE))
        rec = Record(id="u0", split="test", clean="c.wav", noisy="n.wav")
        man = Manifest(base_dir=tmp_path, records=[rec])
        mixture, c2, n2 = load_pair(man, rec)
        np.testing.assert_array_equal(
            n2.samples, mixture.samples - c2.samples)

    def test_epoch_changes_crop_when_noise_longer(self, tmp_path):
        rng = np.random.default_rng(4)
        clean = Waveform(rng.standard_normal(1000) * 0.2, SAMPLE_RATE)
        noise = Waveform(rng.standard_normal(8000) * 0.2, SAMPLE_RATE)
        save_wav(tmp_path / "c.wav", clean)
        save_wav(tmp_path / "n.wav", noise)
        rec = Record(id="u0", split="train", clean="c.wav", noise="n.wav",
                     snr_db=5.0)
        man = Manifest(base_dir=tmp_path, records=[rec])
        m0a, _, _ = load_pair(man, rec, epoch=0)
        m0b, _, _ = load_pair(man, rec, epoch=0)
        m1, _, _ = load_pair(man, rec, epoch=1)
        np.testing.assert_array_equal(m0a.samples, m0b.samples)
        assert not np.array_equal(m0a.samples, m1.samples)

    def test_crop_seed_distinct(self):
        seeds = {crop_seed("u0", 0), crop_seed("u0", 1), crop_seed("u1", 0)}
        assert len(seeds) == 3


class TestSynthCorpus:
    def test_snr_grid_cycles(self, tmp_path):
        man = Manifest.load(synth_corpus(6, seed=1, out_dir=tmp_path / "tr"))
        assert [r.snr_db for r in man.records] == [15.0, 10.0, 5.0, 0.0, 15.0, 10.0]
        man_te = Manifest.load(
            synth_corpus(4, seed=2, out_dir=tmp_path / "te", split="test"))
        assert [r.snr_db for r in man_te.records] == list(TEST_SNRS_DB)
        assert all(r.split == "test" for r in man_te.records)

    def test_noise_kinds_cycle(self, tmp_path):
        man = Manifest.load(synth_corpus(3, seed=1, out_dir=tmp_path))
        kinds = [r.noise.rsplit("_", 1)[1].removesuffix(".wav")
                 for r in man.records]
        assert kinds == ["white", "pink", "babble"]

    def test_bit_reproducible(self, tmp_path):
        def digest(root):
            h = hashlib.sha256()
            for p in sorted(root.rglob("*")):
                if p.is_file():
                    h.update(p.name.encode() + p.read_bytes())
            return h.hexdigest()

        synth_corpus(5, seed=9, out_dir=tmp_path / "one")
        synth_corpus(5, seed=9, out_dir=tmp_path / "two")
        assert digest(tmp_path / "one") == digest(tmp_path / "two")

    def test_different_seed_differs(self, tmp_path):
        p1 = synth_corpus(2, seed=1, out_dir=tmp_path / "a")
        p2 = synth_corpus(2, seed=2, out_dir=tmp_path / "b")
        w1 = load_wav(Manifest.load(p1).resolve(Manifest.load(p1).records[0].clean))
        w2 = load_wav(Manifest.load(p2).resolve(Manifest.load(p2).records[0].clean))
        if len(w1.samples) == len(w2.samples):
            assert not np.array_equal(w1.samples, w2.samples)

    def test_bad_split_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="split must be"):
            synth_corpus(1, seed=0, out_dir=tmp_path, split="dev")


class TestGenerators:
    def test_speech_peak_in_range(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            x = synth_speech(rng, 16000)
            assert 0.4 - 1e-9 <= np.abs(x).max() <= 0.7 + 1e-9

    @pytest.mark.parametrize("kind", ["white", "pink", "babble"])
    def test_noise_rms(self, kind):
        x = synth_noise(np.random.default_rng(1), 16000, kind)
        assert np.sqrt(np.mean(x ** 2)) == pytest.approx(0.1, rel=1e-9)

    def test_pink_tilts_low(self):
        x = synth_noise(np.random.default_rng(2), 65536, "pink")
        spec = np.abs(np.fft.rfft(x)) ** 2
        low = spec[1:1000].sum()
        high = spec[-1000:].sum()
        assert low > 10 * high

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown noise kind"):
            synth_noise(np.random.default_rng(0), 100, "brown")
