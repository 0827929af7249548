"""Dual-path conformer speech enhancement on numpy.

A complete time-frequency enhancement stack: STFT front end, densely
connected convolutional encoder/decoder with channel and spatial attention,
a dual-path conformer bottleneck, complex-mask estimation, and the training,
metric, and data plumbing needed to run it — all differentiable through a
small reverse-mode tape.
"""

__version__ = "0.1.0"
