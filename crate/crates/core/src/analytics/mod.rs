//! Closed-form oracles, comparative-statics sweeps and the reserve
//! estimation pipeline.

mod cps;
mod estimation;
mod two_seat;
mod weitzman;

pub use cps::{moment_vector, reserve_payoff, CpsFamily, CpsModel, MomentPlan, StateAllocation, CPS_SCORE_SCALE, DEFAULT_STEP};
pub use estimation::{
    curve_gains, curve_magnitude_increasing, estimate, homogeneous_curve, model_from_records, robustness_grid,
    scatter_rows, synthetic_belief, welfare_gain_report, AdmissionRecord, CurvePoint, EstimationProblem,
    EstimationResult, GridPoint, ScatterRow, SearchConfig, SyntheticBelief, SyntheticConfig, WelfareGainReport,
};
pub use two_seat::{
    two_seat_closed_form, two_seat_crossing, two_seat_numeric, two_seat_priority_numeric, two_seat_priority_value,
    two_seat_quota_numeric, two_seat_table, Crossing, SquareRule, TwoSeatRow, TwoSeatValues,
};
pub use weitzman::{
    boost_curves, effects_sweep, loss_sweep, numeric_optimal_admissions, optimal_admissions, optimal_boost,
    precedence_check, weitzman_closed_forms, weitzman_numeric, weitzman_oracle, BoostRow, EffectsRow, LossRow,
    OmegaDistribution, OracleRow, PrecedenceCheck, SearchGrid, WeitzmanClosedForms, WeitzmanNumeric, WeitzmanSetting,
};
