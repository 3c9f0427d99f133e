from .convergence import convergence_curve, ks_statistic
from .friedman import critical_difference, friedman_nemenyi, nemenyi_q, significance_stars
from .good_turing import GoodTuringEstimate, counts_from_tags, good_turing
from .metrics import MetricResult, f1, mae
from .tagging import UNTAGGED, load_annotations, tag_reasoning, tag_with_overrides
from .wilcoxon import TestResult, wilcoxon_signed_rank

__all__ = [
    "GoodTuringEstimate",
    "MetricResult",
    "TestResult",
    "UNTAGGED",
    "convergence_curve",
    "counts_from_tags",
    "critical_difference",
    "f1",
    "friedman_nemenyi",
    "good_turing",
    "ks_statistic",
    "load_annotations",
    "mae",
    "nemenyi_q",
    "significance_stars",
    "tag_reasoning",
    "tag_with_overrides",
    "wilcoxon_signed_rank",
]
