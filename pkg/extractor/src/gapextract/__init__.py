"""Extract frozen image/text embeddings from dual-encoder checkpoints into
GAPEMB v1 files consumable by gapkit."""

__version__ = "0.1.0"

from gapextract.job import ExtractionJob
from gapextract.run import run_extraction
from gapextract.text import build_text

__all__ = ["ExtractionJob", "run_extraction", "build_text", "__version__"]
