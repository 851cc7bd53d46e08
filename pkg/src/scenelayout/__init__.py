"""scenelayout: camera-conditioned metric scale and pose recovery for
single-image 3D object layout, with a software z-buffer rasterizer,
occlusion reasoning, evaluation metrics and a synthetic round-trip harness.
"""

from .errors import (
    DegenerateGeometryError,
    DegenerateMeshError,
    DegenerateObservationError,
    EmptyMaskError,
    EmptyObservationError,
    EmptyVisibilityError,
    ExternalEstimatorError,
    NonPhysicalScaleError,
    PlacementFailedError,
    PointBehindCameraError,
    RankDeficientSystemError,
    SceneLayoutError,
    SolveDivergedError,
)
from .geometry import (
    AnchoredSimilarityTransform,
    BBox2D,
    PinholeCamera,
    TriangleMesh,
    apply_transform,
    mesh_means,
    project,
)
from .harness import (
    PipelineOptions,
    SynthConfig,
    evaluate,
    render_scene,
    run_pipeline,
    synth_scene,
    write_synth_output,
)
from .metrics import (
    AABB3,
    RigidTransform,
    align_rigid,
    chamfer,
    fscore,
    sample_points,
    volume_iou,
)
from .objio import load_obj, save_obj
from .occlusion import MaskSet, adjacency_pairs, normalize_crop, occlusion_flags
from .raster import (
    DepthMap,
    ExtremalVisiblePoints,
    NormalMap,
    SurfacePoint,
    extremal_visible_points,
    mean_visible_depth,
    raster_backend,
    rasterize_depth,
    rasterize_normals,
)
from .rotation import (
    ExternalRotationEstimator,
    RotationGrid,
    RotationScore,
    estimate_rotation,
    geodesic_distance,
    make_rotation_grid,
    normal_angular_error,
)
from .scene import SceneObject, SceneSpec, load_poses, load_scene, save_scene, write_poses
from .solver import (
    InstanceObservation,
    LayoutLinearSystem,
    SolveReport,
    build_system,
    observation_from_depth,
    refine_after_rotation,
    solve_scale_translation,
    solve_step,
)
from .voxel import VoxelGrid, voxelize

__version__ = "0.1.0"
