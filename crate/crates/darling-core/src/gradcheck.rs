//! Central-difference gradient verification.
//!
//! The training losses here are all hand-derived backward passes, so the
//! crate treats finite-difference agreement as a first-class property: any
//! scalar objective over a parameterized structure can be checked against
//! its analytic gradient, entry by entry.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

/// Outcome of a gradient comparison.
#[derive(Debug, Clone)]
pub struct GradCheckSummary {
    /// Worst relative error among entries with non-negligible magnitude.
    pub max_rel_err: f64,
    /// Worst absolute error among near-zero entries.
    pub max_abs_err_small: f64,
    pub entries_checked: usize,
    /// `(param name, row, col, analytic, numeric)` of the worst entry.
    pub worst: Option<(String, usize, usize, f64, f64)>,
}

impl GradCheckSummary {
    pub fn passes(&self, rel_tol: f64, abs_tol: f64) -> bool {
        self.max_rel_err <= rel_tol && self.max_abs_err_small <= abs_tol
    }
}

/// Compare analytic parameter gradients of `eval` against central finite
/// differences.
///
/// `params_mut` must enumerate parameters in a stable order; `analytic` must
/// carry matching names. For parameters with more entries than
/// `max_entries_per_param`, a seeded random subset is checked.
pub fn check_param_grads<M>(
    model: &mut M,
    params_mut: fn(&mut M) -> Vec<(String, &mut Array2<f64>)>,
    analytic: &[(String, Array2<f64>)],
    eval: impl Fn(&M) -> f64,
    step: f64,
    max_entries_per_param: usize,
    seed: u64,
) -> GradCheckSummary {
    let names: Vec<String> = params_mut(model).iter().map(|(n, _)| n.clone()).collect();
    assert_eq!(
        names,
        analytic.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
        "analytic gradients must align with the parameter traversal"
    );

    let mut rng = crate::rng::rng_from(seed);
    let mut summary = GradCheckSummary {
        max_rel_err: 0.0,
        max_abs_err_small: 0.0,
        entries_checked: 0,
        worst: None,
    };

    for (pi, (name, grad)) in analytic.iter().enumerate() {
        let (rows, cols) = grad.dim();
        let mut entries: Vec<(usize, usize)> = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .collect();
        if entries.len() > max_entries_per_param {
            entries.shuffle(&mut rng);
            entries.truncate(max_entries_per_param);
        }
        for (i, j) in entries {
            let orig = params_mut(model)[pi].1[[i, j]];
            params_mut(model)[pi].1[[i, j]] = orig + step;
            let fp = eval(model);
            params_mut(model)[pi].1[[i, j]] = orig - step;
            let fm = eval(model);
            params_mut(model)[pi].1[[i, j]] = orig;

            let numeric = (fp - fm) / (2.0 * step);
            let a = grad[[i, j]];
            let denom = a.abs().max(numeric.abs());
            summary.entries_checked += 1;
            if denom > 1e-6 {
                let rel = (a - numeric).abs() / denom;
                if rel > summary.max_rel_err {
                    summary.max_rel_err = rel;
                    summary.worst = Some((name.clone(), i, j, a, numeric));
                }
            } else {
                let abs = (a - numeric).abs();
                if abs > summary.max_abs_err_small {
                    summary.max_abs_err_small = abs;
                }
            }
        }
    }
    summary
}

/// Check the gradient of `eval` with respect to an input array (not a
/// parameter): `analytic` against central differences on `input`.
pub fn check_input_grad(
    input: &mut Array2<f64>,
    analytic: &Array2<f64>,
    eval: impl Fn(&Array2<f64>) -> f64,
    step: f64,
    max_entries: usize,
    seed: u64,
) -> GradCheckSummary {
    let (rows, cols) = input.dim();
    let mut entries: Vec<(usize, usize)> = (0..rows)
        .flat_map(|i| (0..cols).map(move |j| (i, j)))
        .collect();
    let mut rng = crate::rng::rng_from(seed);
    if entries.len() > max_entries {
        entries.shuffle(&mut rng);
        entries.truncate(max_entries);
    }
    let mut summary = GradCheckSummary {
        max_rel_err: 0.0,
        max_abs_err_small: 0.0,
        entries_checked: 0,
        worst: None,
    };
    for (i, j) in entries {
        let orig = input[[i, j]];
        input[[i, j]] = orig + step;
        let fp = eval(input);
        input[[i, j]] = orig - step;
        let fm = eval(input);
        input[[i, j]] = orig;
        let numeric = (fp - fm) / (2.0 * step);
        let a = analytic[[i, j]];
        let denom = a.abs().max(numeric.abs());
        summary.entries_checked += 1;
        if denom > 1e-6 {
            let rel = (a - numeric).abs() / denom;
            if rel > summary.max_rel_err {
                summary.max_rel_err = rel;
                summary.worst = Some(("input".into(), i, j, a, numeric));
            }
        } else {
            summary.max_abs_err_small = summary.max_abs_err_small.max((a - numeric).abs());
        }
    }
    summary
}

/// Draw a random array with entries in `[-0.5, 0.5)`.
pub fn random_array(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>() - 0.5)
}
