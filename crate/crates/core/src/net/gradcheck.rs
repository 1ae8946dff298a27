use super::NetError;

/// Settings for comparing analytic gradients with central differences.
///
/// The relative error of coordinate `i` is
/// `|a_i - n_i| / max(|a_i|, |n_i|, floor * max_j |a_j|)`. The floor keeps
/// components far below the gradient's scale, where central differences are
/// dominated by roundoff, from deciding the outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub h: f64,
    pub tol: f64,
    pub floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self { h: 1e-5, tol: 1e-5, floor: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub estimates: Vec<f64>,
    pub analytic: Vec<f64>,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub tol: f64,
    pub passed: bool,
}

pub fn relative_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Central-difference gradient estimate of `f` at `x`.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Result<Vec<f64>, NetError> {
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(NetError::NonFiniteEvaluation { index: i });
        }
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

pub fn finite_diff_check(
    f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    check: &GradCheck,
) -> Result<GradCheckReport, NetError> {
    if analytic.len() != x.len() {
        return Err(NetError::Dimension { what: "analytic gradient", expected: x.len(), got: analytic.len() });
    }
    let estimates = central_difference(f, x, check.h)?;
    let scale = analytic.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let floor = (check.floor * scale).max(f64::MIN_POSITIVE);
    let (worst_index, max_rel_error) = analytic
        .iter()
        .zip(&estimates)
        .map(|(&a, &n)| relative_error(a, n, floor))
        .enumerate()
        .fold((0, 0.0), |best, (i, e)| if e > best.1 { (i, e) } else { best });
    Ok(GradCheckReport {
        estimates,
        analytic: analytic.to_vec(),
        max_rel_error,
        worst_index,
        tol: check.tol,
        passed: max_rel_error <= check.tol,
    })
}
