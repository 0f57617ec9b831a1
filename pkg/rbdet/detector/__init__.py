# flake8: noqa F401
from .config import DetectorConfig
from .params import DetectorParams
from .network import forward, raw_head
from .boxes import (Annotation, Detection, iou, iou_matrix, ciou_loss,
                    corners, centres)
from .decode import decode, decode_arrays, nms, predict
from .loss import (CellTarget, assign_targets, cell_of, detection_loss,
                   loss_terms, WEIGHTS)
