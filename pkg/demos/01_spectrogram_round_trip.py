"""Spectrogram analysis/synthesis round trip.

The enhancer operates on complex short-time spectra, so the first thing the
package has to get right is the transform pair: windowed framing with
overlap-add synthesis that reconstructs the waveform essentially exactly.
This demo builds a few second-long test signals, pushes them through
``stft`` -> ``istft`` at each preset geometry, and prints the worst-case
reconstruction error away from the signal edges.
"""

import numpy as np

from dpcse.stft import StftConfig, Waveform, istft, spec_to_featuremap, stft

RATE = 16000

GEOMETRIES = {
    "full  (400/100/512)": StftConfig(win_len=400, hop=100, fft_len=512),
    "desk  (256/128/256)": StftConfig(win_len=256, hop=128, fft_len=256),
    "micro (128/ 64/128)": StftConfig(win_len=128, hop=64, fft_len=128),
}


def test_signals(rng):
    t = np.arange(RATE) / RATE
    return {
        "pure tone 440 Hz": np.sin(2 * np.pi * 440 * t),
        "chirp 100->4k Hz": np.sin(2 * np.pi * (100 + 1950 * t) * t),
        "white noise": rng.standard_normal(RATE) * 0.3,
        "impulse train": (np.arange(RATE) % 1600 == 0).astype(float),
    }


def main():
    rng = np.random.default_rng(0)
    signals = test_signals(rng)

    for label, cfg in GEOMETRIES.items():
        print(f"\n== {label} ==")
        print(f"   {cfg.n_bins} frequency bins, "
              f"{cfg.frame_count(RATE)} frames per second of audio")
        for name, x in signals.items():
            spec = stft(Waveform(x, RATE), cfg)
            back = istft(spec, cfg, out_len=len(x)).samples
            # edges see fewer overlapping windows; judge the interior
            core = slice(cfg.edge, len(x) - cfg.edge)
            err = np.max(np.abs(back[core] - x[core]))
            print(f"   {name:<18} spec {spec.shape}  "
                  f"max interior error {err:.2e}")

    # the network consumes the spectrum as a 2-channel real/imag feature map
    cfg = GEOMETRIES["desk  (256/128/256)"]
    spec = stft(Waveform(signals["chirp 100->4k Hz"], RATE), cfg)
    fmap = spec_to_featuremap(spec)
    print(f"\nfeature map for the network: {fmap.shape} "
          "(channels = [real, imag], then time x frequency)")
    print("round trip is exact to near machine precision -- the transform "
          "pair adds no error budget of its own.")


if __name__ == "__main__":
    main()
