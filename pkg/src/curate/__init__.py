"""Dataset curation toolkit.

Measures JPEG blocking artifacts per image, estimates whole-dataset
compression quality by comparing blockiness distributions against clean
references, gates datasets on that quality, and filters images by object
region count to produce training manifests.
"""

__version__ = "0.1.0"

# The blockiness() function itself is reached via its module
# (curate.blockiness.blockiness) so the module name stays importable.
from .blockiness import dct8x8, measure_file, variation_field
from .density import Density, kde, kl_divergence, make_grid, scott_bandwidth
from .errors import (
    ConfigError,
    CurateError,
    DecodeError,
    DegenerateSamplesError,
    GridMismatchError,
    ImageTooSmallError,
    ManifestError,
    MissingCountError,
    MissingFieldError,
    SidecarError,
)
from .ingest import (
    DropReason,
    ImageRecord,
    decode_image,
    decode_luma,
    jpeg_recompress,
    luma,
    scan_directory,
)
from .manifest import read_manifest, write_manifest
from .pipeline import (
    CurationConfig,
    CurationManifest,
    DatasetStats,
    compute_stats,
    load_config,
    run_curation,
)
from .quality import (
    BasisSet,
    QualityEstimate,
    build_basis,
    estimate_quality,
    load_basis,
    save_basis,
    select_sources,
)
from .regions import (
    FilterConfig,
    count_regions_graph,
    filter_by_blockiness,
    filter_by_regions,
    load_sidecar_counts,
)
