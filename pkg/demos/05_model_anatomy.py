"""Model anatomy: where the parameters live, and how runs are configured.

The enhancer is an encoder (dense convolutions + attention), a stack of
dual-path enhancement layers at reduced width, and a decoder that emits
complex masks. This demo prints the parameter budget per stage at each
preset scale, then shows the flat-key configuration surface that the CLI,
checkpoints, and config files all share.
"""

import numpy as np

from dpcse.config import PRESETS, load_run_config, preset, to_flat
from dpcse.model import SpeechEnhancer


def breakdown(name):
    run = preset(name)
    model = SpeechEnhancer(run.model, seed=0)
    info = model.param_breakdown()
    stft = run.model.stft
    print(f"== {name} ==")
    print(f"   spectrum: {stft.n_bins} bins x "
          f"{stft.frame_count(16000)} frames per second")
    for section in ("encoder", "enhancement", "decoder"):
        n = info["sections"][section]
        print(f"   {section:<12} {n:>12,}  ({100 * n / info['total']:4.1f}%)")
    print(f"   {'total':<12} {info['total']:>12,}\n")
    return info["total"]


def main():
    print("parameter budget by preset\n")
    for name in sorted(PRESETS):
        breakdown(name)

    print("== one flat configuration surface ==")
    run = preset("desk")
    flat = to_flat(run)
    print(f"   a run is {len(flat)} dotted keys; the first few:")
    for key in list(sorted(flat))[:6]:
        print(f"      {key} = {flat[key]}")
    print("   every key can come from a preset, a config file, or a "
          "--set flag;\n   later sources override earlier ones.\n")

    run2, _echo = load_run_config("desk", overrides={
        "model.enc_channels": "48", "train.epochs": "3"})
    model2 = SpeechEnhancer(run2.model, seed=0)
    print("   after --set model.enc_channels=48 --set train.epochs=3:")
    print(f"      encoder width {run2.model.enc_channels}, "
          f"epochs {run2.train.epochs}, "
          f"total {model2.param_breakdown()['total']:,} parameters")
    print("\n   checkpoints embed this same flat mapping, so a saved model "
          "refuses\n   to load under a mismatched architecture instead of "
          "failing strangely.")


if __name__ == "__main__":
    main()
