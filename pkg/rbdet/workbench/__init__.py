# flake8: noqa F401
from .synth import (SceneSpec, CLASSES, generate_synthetic, render_scene,
                    coverage)
from .manifest import (DatasetManifest, ImageEntry, AnnotationEntry, Category,
                       load_manifest, save_manifest, load_dataset,
                       save_dataset, bbox_to_box, box_to_bbox, to_manifest)
from .config import DEFAULTS, STAGES, load_config, resolve, sweep_points
from .report import emit_report, sweep_table
from .pipeline import RunRecord, StagePath, run_experiment, run_point
