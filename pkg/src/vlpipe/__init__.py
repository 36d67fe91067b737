"""vlpipe: vision-language instruction data pipeline toolkit."""

__version__ = "0.1.0"

from .schema import (  # noqa: F401
    CorpusManifest,
    ManifestEntry,
    Point,
    RegionBox,
    Sample,
    TaskType,
    Turn,
    box_to_pixels,
    parse_box,
    serialize_box,
    serialize_point,
    validate_sample,
)
