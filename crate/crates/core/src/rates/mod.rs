//! ε-sweep orchestration, rate fits and verdicts.

mod fits;
mod presets;
mod sweep;
mod verdicts;

pub use fits::{
    drop_largest_eps, fit_entropy_intercept, fit_suboptimality_slope, fit_value_rate, fit_w2_rate,
    FitModel, RateFit, W2_FLOOR,
};
pub use presets::{
    list_presets, CustomSpec, GaussianPair, Instance, Preset, PresetInfo, Reference,
    GAUSSIAN_HALF_WIDTH, LIPSCHITZ_HALF_WIDTH,
};
pub use sweep::{
    run_sweep, validate_eps_list, ChartSummary, EpsSweepResult, PointDiagnostics,
    ReferenceGeometry, SweepFailure, SweepOptions,
};
pub use verdicts::{
    compute_fits, discrete2x2_verdict, theorem_verdicts, Fits, Relation, Verdict, VerdictReport,
};

/// Default sweep for unit-scale instances.
pub const DEFAULT_EPS: [f64; 5] = [0.4, 0.2, 0.1, 0.05, 0.025];

/// Sweep, fits and verdicts for one instance.
pub fn evaluate(
    inst: &Instance,
    eps: &[f64],
    opts: &SweepOptions,
    tol: &crate::tolerances::ToleranceTable,
) -> crate::Result<(EpsSweepResult, Fits, VerdictReport)> {
    let s = run_sweep(inst, eps, opts)?;
    let fits = compute_fits(&s);
    let densities = inst.preset != Preset::Discrete2x2;
    let mut report = theorem_verdicts(&s, &fits, tol, densities);
    if !densities {
        report.verdicts.insert(0, discrete2x2_verdict(&s, tol));
        report.pass = report.verdicts.iter().all(|v| v.pass);
    }
    Ok((s, fits, report))
}
