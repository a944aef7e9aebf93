from dataclasses import dataclass, field

from gapextract.errors import DatasetError


@dataclass(frozen=True)
class ExtractionJob:
    """One extraction run: a backbone, a dataset adapter, and an output path.

    Splits come from dataset metadata when every sample declares one;
    otherwise a seeded 70/10/20 train/val/test assignment is drawn.
    """

    backbone: str
    dataset: str
    data_root: str
    out_path: str
    split_seed: int = 0
    split_fractions: tuple = (0.7, 0.1, 0.2)
    batch_size: int = 64
    device: str = "cpu"
    template: str = "kv"
    backbone_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.batch_size < 1:
            raise DatasetError(f"batch_size must be >= 1, got {self.batch_size}")
        if len(self.split_fractions) != 3 or any(f < 0 for f in self.split_fractions):
            raise DatasetError(
                f"split_fractions must be three non-negative values, "
                f"got {self.split_fractions}"
            )
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise DatasetError(
                f"split_fractions must sum to 1, got {self.split_fractions}"
            )
