"""Split-architecture WiFi localization: synthetic CSI, angle-of-arrival
images, federated encoder training and bearing triangulation."""

from ._core import (
    AoaTofImage,
    ApPose,
    CsiMatrix,
    Dataset,
    Environment,
    ImageGrid,
    InsufficientBearings,
    IoError,
    RadioConfig,
    Reflector,
    SingularGeometry,
    Vec2,
    aoa_tof_image,
    generate_dataset,
    geometric_loss,
    huber,
    one_cycle_lr,
    peak_aoa,
    percentile,
    read_dataset,
    run_cli,
    synth_csi,
    to_global_frame,
    triangulate,
    triangulate_backward,
    wrap_angle,
    write_dataset,
)

__all__ = [
    "AoaTofImage",
    "ApPose",
    "CsiMatrix",
    "Dataset",
    "Environment",
    "ImageGrid",
    "InsufficientBearings",
    "IoError",
    "RadioConfig",
    "Reflector",
    "SingularGeometry",
    "Vec2",
    "aoa_tof_image",
    "generate_dataset",
    "geometric_loss",
    "huber",
    "one_cycle_lr",
    "peak_aoa",
    "percentile",
    "read_dataset",
    "run_cli",
    "synth_csi",
    "to_global_frame",
    "triangulate",
    "triangulate_backward",
    "wrap_angle",
    "write_dataset",
]
