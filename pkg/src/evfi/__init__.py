"""Event-guided video frame interpolation via region tracking.

Pipeline: simulate events from frames (or ingest a recorded stream),
voxelize, segment the scene into motion-active regions, track each region
across voxel bins, densify trajectories into bidirectional any-time optical
flow, and synthesize intermediate frames with confidence-weighted fusion and
occlusion-aware in-fill.
"""

from .config import ConfigError, PipelineConfig
from .events import (Event, EventStream, SimulatorConfig, accumulate_event_frame,
                     read_events, reverse_stream, simulate_events, slice_stream,
                     write_events)
from .flow import (AnyTimeFlow, confidence_map, densify_flow, occlusion_mask,
                   read_flo, refine_flow, sample_flow_at, write_flo)
from .interpolate import (FusionInputs, backward_warp, fuse_frames,
                          infill_occlusions, sample_intermediate_flows)
from .metrics import (MetricReport, endpoint_error, flow_consistency_loss,
                      occlusion_loss, psnr, reconstruction_loss, ssim,
                      tracking_loss)
from .netpbm import quantize_frame, read_netpbm, write_pgm, write_ppm
from .scenes import Scene, SceneSpec, load_scene, write_scene
from .segmentation import (MotionMask, Region, RegionSet, SuperpixelMap,
                           filter_regions, motion_mask, slic_segment)
from .tracking import (FeaturePyramid, QueryPoint, Trajectory, TrackerConfig,
                       build_feature_pyramid, local_correlation,
                       select_query_points, track_region)
from .voxel import VoxelGrid, bin_slice, build_voxel_grid, read_voxel_grid, write_voxel_grid

__version__ = "0.1.0"
