"""synthscene: procedural 3D scene layout, label rasterization, proxy scene
metrics, layout-parameter search, and a contrastive memory-bank simulator."""

from .geometry import (Aabb, Camera, Ray, Rotation, aabb_intersects,
                       point_in_frustum, project_point, ray_cast, vec3)
from .mesh import (EmptyMesh, ModelCatalog, ParseError, TriangleMesh,
                   default_catalog, load_obj)
from .metrics import (MetricsAccumulator, ProxyMetrics, ScaleThresholds,
                      aggregate_metrics, classify_scale, count_visible,
                      dataset_metrics, occlusion_of, scene_stats, viewpoint_bin)
from .presets import METRIC_TARGETS, PRESETS, preset
from .pretrain import (MemoryBank, RegionBatch, SimConfig, UnknownObject,
                       WorkerState, contrastive_loss, gather_and_update,
                       momentum_update, sample_queries, simulate_pretrain,
                       total_loss)
from .raster import (LabelBuffer, MaskPair, SceneGeometry, mask_pairs,
                     rasterize, raycast_labels)
from .scene import (BackgroundShell, BackgroundSpec, IntervalScale, LayoutParams,
                    ObjectInstance, PlacementExhausted, Scene, UniformScale,
                    assemble_scene, place_object, query_poses, sample_camera,
                    sample_rotation, sample_scale, scene_rng)
from .sceneio import (analyze_dataset, export_scene, generate_dataset,
                      load_scene, scene_from_dict, scene_to_dict)
from .search import MetricTarget, SearchReport, score_metrics, search_layouts

__version__ = "0.1.0"
