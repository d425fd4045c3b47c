//! Functionals of a state: conserved quantities, threshold classification,
//! the localized virial and its bound, run-level proxies, and exponent-pair
//! arithmetic.

mod functionals;
mod monitor;
pub mod pairs;
mod virial;

pub use functionals::{
    classify_ratios, coercivity_gap, comparability_check, comparability_check_with, energy, h_quadratic,
    threshold_classify, threshold_classify_with, Comparability, Evaluator, Quadratics, ThresholdClass,
    ThresholdVerdict, THRESHOLD_SLACK,
};
pub use monitor::{
    blowup_trigger, read_records_csv, scattering_proxy, strichartz_norm, write_records_csv, Monitor, MonitorRecord,
    ScatteringReport, BLOWUP_GROWTH, RECORD_COLUMNS, SCATTERING_H_GROWTH, SCATTERING_RATIO, TAIL_FRACTION,
};
pub use virial::{
    fd_derivative, localized_virial, make_virial_weight, radial_derivative, virial_derivative_fd, virial_rhs_bound,
    virial_rhs_bound_with, VirialBound, VirialWeight, WeightMargins, WEIGHT_SUPPORT,
};

pub use crate::grid::mass;
