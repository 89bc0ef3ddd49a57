//! Regularity diagnostics on solved fields: excess and its decay, V-mass
//! power laws, empirical Caccioppoli constants, autonomous comparison
//! reports, singular-set flags, the blow-up linearization experiment, and
//! manufactured-problem construction.

pub mod caccioppoli;
pub mod compare;
pub mod excess;
pub mod flags;
pub mod linearize;
pub mod manufactured;

pub use caccioppoli::{caccioppoli_report, CaccioppoliReport};
pub use compare::{comparison_report, ComparisonEntry, ComparisonReport};
pub use excess::{
    decay_exponent, excess, excess_decay_table, grad_v_field, grad_v_squared_ball_integral,
    strain_values, v_distance_to_v_of_mean_strain, v_oscillation, v_values, DecayFit, ExcessTable,
    GradVField,
};
pub use flags::{singular_flags, FlagThresholds, ResolvedThresholds, SingularFlags};
pub use linearize::{linearization_experiment, LinearizationReport};
pub use manufactured::{
    invert_fidelity, manufactured_problem, sine_field, FnField, ManufacturedProblem, SmoothField,
};
