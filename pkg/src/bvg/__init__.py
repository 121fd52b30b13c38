"""Three-part image decomposition into structures, residual, and textures.

The model splits an image f into u + v + w where u collects bounded
variation structures, w collects oscillating textures measured in the
dual (oscillation) norm, and v is a small L2 residual.  Built on top of
that are executable checks for the optimality balance laws of the model,
synthetic scenes with closed-form norms to validate against, and an
a-contrario detector that finds long thin structures in the texture part.

Start with :func:`bvg_decompose` for the split itself,
:func:`gnorm_estimate` for the oscillation norm of a single image, and
:func:`road_pipeline` for detection.
"""

__version__ = "0.1.0"

from .grid import (
    DualField,
    GridError,
    GridMismatchError,
    Image,
    NonFiniteValueError,
    divergence,
    gradient,
    l1_norm,
    l2_inner,
    l2_norm,
    l2_norm_sq,
    mean_value,
    sup_norm,
    tv_norm,
)
from .formats import (
    FormatError,
    read_bvgf,
    read_image,
    read_pgm,
    write_bvgf,
    write_image,
    write_pgm,
)
from .synth import (
    OracleNorms,
    SceneSpec,
    UnderResolvedError,
    UnderResolvedWarning,
    oracle_norms,
    render,
)
from .projector import (
    ProjectorParams,
    SolveTrace,
    project_g_ball,
    rof_energy,
    rof_solve,
)
from .analysis import (
    CaseReport,
    ClassifyReport,
    GnormResult,
    InputClass,
    NonZeroMeanError,
    NormReport,
    bv_value,
    check_optimality,
    classify_input,
    coupling_bound,
    gnorm_estimate,
    norms,
)
from .decompose import BvgParams, Decomposition, bvg_decompose, objective
from .roads import (
    DetectionParams,
    OrientationField,
    RoadReport,
    Segment,
    SegmentSet,
    detect_segments,
    fuse_segments,
    orientation_field,
    overlay,
    road_pipeline,
)

__all__ = [
    "__version__",
    "Image",
    "DualField",
    "GridError",
    "GridMismatchError",
    "NonFiniteValueError",
    "gradient",
    "divergence",
    "tv_norm",
    "l1_norm",
    "l2_norm",
    "l2_norm_sq",
    "l2_inner",
    "sup_norm",
    "mean_value",
    "FormatError",
    "read_pgm",
    "write_pgm",
    "read_bvgf",
    "write_bvgf",
    "read_image",
    "write_image",
    "SceneSpec",
    "OracleNorms",
    "UnderResolvedWarning",
    "UnderResolvedError",
    "render",
    "oracle_norms",
    "ProjectorParams",
    "SolveTrace",
    "project_g_ball",
    "rof_energy",
    "rof_solve",
    "GnormResult",
    "NormReport",
    "InputClass",
    "ClassifyReport",
    "CaseReport",
    "NonZeroMeanError",
    "bv_value",
    "gnorm_estimate",
    "norms",
    "classify_input",
    "check_optimality",
    "coupling_bound",
    "BvgParams",
    "Decomposition",
    "bvg_decompose",
    "objective",
    "DetectionParams",
    "OrientationField",
    "Segment",
    "SegmentSet",
    "RoadReport",
    "orientation_field",
    "detect_segments",
    "fuse_segments",
    "road_pipeline",
    "overlay",
]
