"""Default values for configuration fields and CLI options."""

from __future__ import annotations

# Training regime
DEFAULT_EPOCHS = 40
DEFAULT_BATCH_SIZE = 32
DEFAULT_LR = 1e-3
DEFAULT_LABEL_SMOOTHING = 0.1
DEFAULT_LOSS_WEIGHT = 0.5  # gamma1..gamma3 and beta; midpoint of the 0.1-0.9 sweep

# Architecture
DEFAULT_WIDTHS = (64, 128, 128)
DEFAULT_KERNEL_SIZE = 8
DEFAULT_HIDDEN = 128

# Masking
DEFAULT_MASK_RATIO = 0.125
DEFAULT_MASK_BLOCKS = 8

# Synthetic data (desk scale)
DEFAULT_CHANNELS = 3
DEFAULT_LENGTH = 128
DEFAULT_CLASSES = 5
DEFAULT_SAMPLES = 600
DEFAULT_TRAIN_FRACTION = 0.7
DEFAULT_SHIFT = 0.6

# Evaluation
DEFAULT_CALIBRATION_BINS = 10
DEFAULT_HISTOGRAM_BINS = 20
DEFAULT_SEEDS = (1, 2, 3)
