"""Fading-channel prediction by tokenizing channel changes and training recurrent sequence models."""

__version__ = "0.1.0"

from .channel_synth import (
    ChannelSeries,
    FadingConfig,
    add_noise,
    doppler_frequency,
    generate_channel,
    generate_tap,
    read_csf,
    wavelength_span,
    write_csf,
)
from .errors import ChanlingoError
from .evaluation import nmse, prediction_diversity, splice, zoh_baseline
from .vcc import (
    Vocabulary,
    build_vocabulary,
    build_vocabulary_from_series,
    decode,
    encode,
    load_vocabulary,
    normalize_power,
    save_vocabulary,
)

__all__ = [
    "ChanlingoError",
    "ChannelSeries",
    "FadingConfig",
    "Vocabulary",
    "add_noise",
    "build_vocabulary",
    "build_vocabulary_from_series",
    "decode",
    "doppler_frequency",
    "encode",
    "generate_channel",
    "generate_tap",
    "load_vocabulary",
    "nmse",
    "normalize_power",
    "prediction_diversity",
    "read_csf",
    "save_vocabulary",
    "splice",
    "wavelength_span",
    "write_csf",
    "zoh_baseline",
]
