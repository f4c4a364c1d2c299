from .splits import grouped_kfold
from .experiments import (
    AblationConfig, CorrelationConfig, ReportBundle, SweepConfig,
    run_ablation_grid, run_correlation_experiment, run_specialization_sweep,
)
from .pairs import (
    PairSession, RatingRecord, kappa_report, make_pair_session,
)

__all__ = [name for name in dir() if not name.startswith("_")]
