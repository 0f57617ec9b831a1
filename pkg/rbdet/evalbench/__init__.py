# flake8: noqa F401
from .metrics import (MatchRecord, IOU_THRESHOLD, BUCKETS, BUCKET_EDGES,
                      average_precision, match_class, per_class_ap, mean_ap,
                      attack_outcomes, attack_success_rate,
                      attack_success_by_class, bucket_scores, scoreb_buckets,
                      target_scores)
from .report import (EvalThresholds, MetricsReport, SPLITS, HEADLINE,
                     comparison_table, detect, evaluate_full)
