"""Pretrained-encoder adapter: emits SEMB sentence-embedding files for
document manifests and token-range excerpts."""

from .backends import (
    SPECS,
    BackendUnavailable,
    EncoderBackend,
    EncoderSpec,
    HashedBackend,
    get_backend,
)
from .encode import EncodeError, encode_manifest, encode_ranges
from .semb import SembError, read_matrix, write_container, write_matrix

__version__ = "0.1.0"
