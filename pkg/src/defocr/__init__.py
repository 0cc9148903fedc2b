"""Word-image recognizer: deformable-conv backbone, transformer encoder,
CRF decoding, and lexicon-based correction."""

__version__ = "0.1.0"
