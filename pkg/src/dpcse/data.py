"""Audio file I/O, noise mixing, segmentation, and the synthetic corpus.

File format: RIFF/WAVE, 16-bit PCM, mono, 16 kHz.  The reader walks the
chunk list itself so that format violations produce errors naming the
offending field instead of whatever a generic loader would say.

A corpus is a JSONL manifest plus the WAV files it points to.  Each line
describes one utterance either as a (clean, noise, snr_db) triple — the
mixture is synthesized at load time, so the realised SNR is exact — or as
a pre-mixed (noisy, clean) pair.  Paths are stored relative to the
manifest's directory.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .stft import Waveform

SAMPLE_RATE = 16000
PCM_SCALE = 32768.0

TRAIN_SNRS_DB = (15.0, 10.0, 5.0, 0.0)
TEST_SNRS_DB = (17.5, 12.5, 7.5, 2.5)
NOISE_KINDS = ("white", "pink", "babble")


class WavFormatError(ValueError):
    """A WAV file violates the PCM-16/mono/16 kHz contract."""


# -- WAV I/O -------------------------------------------------------------------

def load_wav(path) -> Waveform:
    """Read a 16-bit PCM mono 16 kHz RIFF/WAVE file into [-1, 1) floats."""
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")
    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos:pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise WavFormatError(f"{path}: truncated {cid!r} chunk")
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned
    if fmt is None:
        raise WavFormatError(f'{path}: missing "fmt " chunk')
    if data is None:
        raise WavFormatError(f'{path}: missing "data" chunk')
    if len(fmt) < 16:
        raise WavFormatError(f'{path}: "fmt " chunk too short')
    codec, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if codec != 1:
        raise WavFormatError(f"{path}: codec {codec} is not PCM (1)")
    if channels != 1:
        raise WavFormatError(f"{path}: channels {channels}, expected mono")
    if rate != SAMPLE_RATE:
        raise WavFormatError(f"{path}: sample_rate {rate}, expected {SAMPLE_RATE}")
    if bits != 16:
        raise WavFormatError(f"{path}: bit depth {bits}, expected 16")
    if len(data) % 2:
        raise WavFormatError(f"{path}: odd data chunk size {len(data)}")
    pcm = np.frombuffer(data, dtype="<i2")
    return Waveform(pcm.astype(np.float64) / PCM_SCALE, SAMPLE_RATE)


def save_wav(path, wave: Waveform) -> None:
    """Write a waveform as 16-bit PCM mono, rounding and clamping samples."""
    if wave.sample_rate != SAMPLE_RATE:
        raise WavFormatError(
            f"{path}: sample_rate {wave.sample_rate}, expected {SAMPLE_RATE}")
    ints = np.clip(np.round(wave.samples * PCM_SCALE), -32768, 32767)
    data = ints.astype("<i2").tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, SAMPLE_RATE,
                                    SAMPLE_RATE * 2, 2, 16)
    header += b"data" + struct.pack("<I", len(data))
    Path(path).write_bytes(header + data)


# -- mixing --------------------------------------------------------------------

def mix_at_snr(clean: Waveform, noise: Waveform, snr_db: float,
               seed: int = 0) -> tuple[Waveform, Waveform]:
    """Scale a random crop of ``noise`` so clean/noise energy hits ``snr_db``.

    Returns ``(mixture, scaled_noise)``.  The noise must be at least as
    long as the clean signal; when longer, the crop offset is drawn from
    ``seed`` so repeated calls are reproducible.
    """
    if noise.sample_rate != clean.sample_rate:
        raise ValueError("sample rate mismatch between clean and noise")
    n = len(clean.samples)
    if len(noise.samples) < n:
        raise ValueError(
            f"noise ({len(noise.samples)}) shorter than clean ({n})")
    slack = len(noise.samples) - n
    offset = 0
    if slack:
        offset = int(np.random.default_rng(seed).integers(0, slack + 1))
    crop = noise.samples[offset:offset + n]
    e_clean = float(np.sum(clean.samples ** 2))
    e_noise = float(np.sum(crop ** 2))
    if e_clean == 0.0:
        raise ValueError("clean signal is silent; SNR is undefined")
    if e_noise == 0.0:
        raise ValueError("noise crop is silent; SNR is undefined")
    gain = np.sqrt(e_clean / (e_noise * 10.0 ** (snr_db / 10.0)))
    scaled = crop * gain
    return (Waveform(clean.samples + scaled, clean.sample_rate),
            Waveform(scaled, clean.sample_rate))


# -- segmentation --------------------------------------------------------------

@dataclass
class Segment:
    """A fixed-length training excerpt; ``valid_len`` < len marks zero padding."""
    start: int
    valid_len: int
    samples: np.ndarray


def segment_offsets(n_samples: int, seg_len: int, seed: int) -> list[int]:
    """Starting offsets for ``n_samples // seg_len`` random crops."""
    count = n_samples // seg_len
    if count == 0:
        return [0]
    rng = np.random.default_rng(seed)
    return sorted(int(o) for o in rng.integers(0, n_samples - seg_len + 1,
                                               size=count))


def slice_segments(samples: np.ndarray, seconds: float, seed: int,
                   sample_rate: int = SAMPLE_RATE) -> list[Segment]:
    """Cut ``samples`` into seeded random crops of exactly ``seconds``.

    A signal shorter than one segment yields a single zero-padded segment
    whose ``valid_len`` records the real extent.
    """
    seg_len = int(round(seconds * sample_rate))
    if seg_len <= 0:
        raise ValueError(f"segment length {seconds} s is not positive")
    n = len(samples)
    if n < seg_len:
        padded = np.zeros(seg_len, dtype=samples.dtype)
        padded[:n] = samples
        return [Segment(0, n, padded)]
    return [Segment(off, seg_len, samples[off:off + seg_len].copy())
            for off in segment_offsets(n, seg_len, seed)]


# -- manifest ------------------------------------------------------------------

@dataclass
class Record:
    """One utterance: either clean+noise+snr_db, or noisy+clean."""
    id: str
    split: str
    clean: str
    noise: str | None = None
    snr_db: float | None = None
    noisy: str | None = None

    def to_json(self) -> dict:
        out = {"id": self.id, "split": self.split, "clean": self.clean}
        if self.noisy is not None:
            out["noisy"] = self.noisy
        else:
            out["noise"] = self.noise
            out["snr_db"] = self.snr_db
        return out


@dataclass
class Manifest:
    """An ordered list of utterance records anchored at a base directory."""
    base_dir: Path
    records: list[Record] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def resolve(self, rel_path: str) -> Path:
        return self.base_dir / rel_path

    def save(self, path) -> None:
        path = Path(path)
        lines = [json.dumps(r.to_json(), sort_keys=True) for r in self.records]
        path.write_text("".join(line + "\n" for line in lines))

    @classmethod
    def load(cls, path) -> "Manifest":
        path = Path(path)
        base = path.parent
        records = []
        seen = set()
        for ln, line in enumerate(path.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            row = json.loads(line)
            for key in ("id", "split", "clean"):
                if key not in row:
                    raise ValueError(f"{path}:{ln}: record missing {key!r}")
            if "noisy" not in row and ("noise" not in row or "snr_db" not in row):
                raise ValueError(
                    f"{path}:{ln}: record needs either 'noisy' or 'noise'+'snr_db'")
            rec = Record(id=row["id"], split=row["split"], clean=row["clean"],
                         noise=row.get("noise"),
                         snr_db=row.get("snr_db"), noisy=row.get("noisy"))
            if rec.id in seen:
                raise ValueError(f"{path}:{ln}: duplicate utterance id {rec.id!r}")
            seen.add(rec.id)
            for rel in filter(None, (rec.clean, rec.noise, rec.noisy)):
                if not (base / rel).exists():
                    raise FileNotFoundError(f"{path}:{ln}: missing file {base / rel}")
            records.append(rec)
        return cls(base_dir=base, records=records)


def crop_seed(utterance_id: str, epoch: int) -> int:
    """Deterministic seed for the noise crop of one utterance in one epoch."""
    return zlib.crc32(f"{utterance_id}:{epoch}".encode()) & 0x7FFFFFFF


def load_pair(manifest: Manifest, record: Record,
              epoch: int = 0) -> tuple[Waveform, Waveform, Waveform]:
    """Materialize (mixture, clean, noise) for one record.

    Triple records mix clean+noise at the stated SNR with an epoch-keyed
    noise crop; pre-mixed records recover the noise as mixture - clean.
    """
    clean = load_wav(manifest.resolve(record.clean))
    if record.noisy is not None:
        mixture = load_wav(manifest.resolve(record.noisy))
        if len(mixture.samples) != len(clean.samples):
            raise ValueError(f"{record.id}: noisy/clean length mismatch")
        noise = Waveform(mixture.samples - clean.samples, clean.sample_rate)
        return mixture, clean, noise
    noise_src = load_wav(manifest.resolve(record.noise))
    mixture, noise = mix_at_snr(clean, noise_src, record.snr_db,
                                seed=crop_seed(record.id, epoch))
    return mixture, clean, noise


# -- synthetic corpus ----------------------------------------------------------

def synth_speech(rng: np.random.Generator, n_samples: int,
                 sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Enveloped harmonic tone with pauses — a stand-in for voiced speech."""
    t = np.arange(n_samples) / sample_rate
    f0 = rng.uniform(90.0, 250.0)
    n_harmonics = int(rng.integers(3, 7))
    x = np.zeros(n_samples)
    for h in range(1, n_harmonics + 1):
        amp = rng.uniform(0.4, 1.0) / h
        phase = rng.uniform(0.0, 2.0 * np.pi)
        x += amp * np.sin(2.0 * np.pi * f0 * h * t + phase)
    # slow amplitude envelope with occasional dips to zero (pauses)
    duration = n_samples / sample_rate
    n_ctrl = max(4, int(duration * 5))
    ctrl = rng.uniform(0.25, 1.0, size=n_ctrl)
    ctrl[rng.random(n_ctrl) < 0.2] = 0.0
    ctrl_t = np.linspace(0.0, duration, n_ctrl)
    env = np.interp(t, ctrl_t, ctrl)
    x *= env
    peak = np.abs(x).max()
    if peak == 0.0:  # every control point happened to be a pause
        return synth_speech(rng, n_samples, sample_rate)
    return x * (rng.uniform(0.4, 0.7) / peak)


def synth_noise(rng: np.random.Generator, n_samples: int, kind: str,
                sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """White, pink (1/f), or babble (overlapping voices) noise at RMS 0.1."""
    if kind == "white":
        x = rng.standard_normal(n_samples)
    elif kind == "pink":
        w = rng.standard_normal(n_samples)
        spec = np.fft.rfft(w)
        freqs = np.fft.rfftfreq(n_samples, d=1.0 / sample_rate)
        scale = np.zeros_like(freqs)
        scale[1:] = 1.0 / np.sqrt(freqs[1:])
        x = np.fft.irfft(spec * scale, n=n_samples)
    elif kind == "babble":
        x = np.zeros(n_samples)
        for _ in range(int(rng.integers(4, 8))):
            x += synth_speech(rng, n_samples, sample_rate)
    else:
        raise ValueError(f"unknown noise kind {kind!r}")
    rms = np.sqrt(np.mean(x ** 2))
    return x * (0.1 / rms)


def synth_corpus(n_utterances: int, seed: int, out_dir, split: str = "train",
                 seconds: float = 2.0) -> Path:
    """Generate a corpus of clean/noise WAV pairs plus a JSONL manifest.

    SNRs cycle through the split's grid; noise kinds cycle white/pink/babble;
    per-utterance randomness comes from child seeds of ``seed`` so the output
    is bit-reproducible.  Returns the manifest path.
    """
    if split not in ("train", "test"):
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    out_dir = Path(out_dir)
    wav_dir = out_dir / "wav"
    wav_dir.mkdir(parents=True, exist_ok=True)
    snr_grid = TRAIN_SNRS_DB if split == "train" else TEST_SNRS_DB
    records = []
    for i in range(n_utterances):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        n = int(round(seconds * SAMPLE_RATE * rng.uniform(0.85, 1.15)))
        speech = synth_speech(rng, n)
        kind = NOISE_KINDS[i % len(NOISE_KINDS)]
        noise = synth_noise(rng, n, kind)
        uid = f"{split}_{i:04d}"
        clean_rel = f"wav/{uid}_clean.wav"
        noise_rel = f"wav/{uid}_{kind}.wav"
        save_wav(out_dir / clean_rel, Waveform(speech, SAMPLE_RATE))
        save_wav(out_dir / noise_rel, Waveform(noise, SAMPLE_RATE))
        records.append(Record(id=uid, split=split, clean=clean_rel,
                              noise=noise_rel,
                              snr_db=snr_grid[i % len(snr_grid)]))
    manifest_path = out_dir / f"{split}_manifest.jsonl"
    Manifest(base_dir=out_dir, records=records).save(manifest_path)
    return manifest_path
