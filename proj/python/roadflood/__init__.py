"""Python access to the roadflood core."""

from ._core import (  # noqa: F401
    FormatError,
    InvalidArgument,
    IoError,
    RoadfloodError,
    bench_report,
    dice,
    intersect,
    jaccard,
    load_mask,
    ndwi,
    quantize,
    run_pipeline,
    sparsity_at,
    threshold_mask,
)

__version__ = "0.1.0"
