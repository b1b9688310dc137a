//! Exact one-step posteriors of the discrete forward process.

use crate::error::{Error, Result};

use super::schedule::MaskSchedule;

/// `q(x_{t-1} | x_t, x_0)` over all `K + 2` states.
pub fn true_posterior(x_t: usize, x0: usize, t: usize, schedule: &MaskSchedule) -> Result<Vec<f64>> {
    schedule.check_step(t, false)?;
    schedule.check_state(x_t)?;
    schedule.check_state(x0)?;
    let mut out = vec![0.0; schedule.num_states()];
    let total = fill_unnormalized(&mut out, x_t, x0, t, schedule);
    if total <= 0.0 {
        return Err(Error::ImpossiblePosterior(format!(
            "state {x_t} is unreachable from {x0} in {t} steps"
        )));
    }
    for p in &mut out {
        *p /= total;
    }
    Ok(out)
}

/// Writes `Q_t[x_t, k] · Q̄_{t-1}[k, x0]` into `out` and returns its sum,
/// which equals `Q̄_t[x_t, x0]` up to rounding.
pub(crate) fn fill_unnormalized(out: &mut [f64], x_t: usize, x0: usize, t: usize, schedule: &MaskSchedule) -> f64 {
    let q = schedule.q(t);
    let prev = schedule.qbar(t - 1);
    let mut total = 0.0;
    for (k, o) in out.iter_mut().enumerate() {
        *o = q.prob(x_t, k) * prev.prob(k, x0);
        total += *o;
    }
    total
}

/// Mixture of true posteriors over the predicted clean value, restricted to
/// clean values that can produce `x_t`, renormalized.
///
/// `p_x0` has `K + 2` entries (mask must carry zero mass) or `K + 1`
/// entries (real values and empty).
pub fn model_posterior(x_t: usize, p_x0: &[f64], t: usize, schedule: &MaskSchedule) -> Result<Vec<f64>> {
    schedule.check_step(t, false)?;
    schedule.check_state(x_t)?;
    let n = schedule.num_states();
    if p_x0.len() != n && p_x0.len() != n - 1 {
        return Err(Error::DimensionMismatch {
            expected: n - 1,
            found: p_x0.len(),
        });
    }
    if p_x0.len() == n && p_x0[n - 1] != 0.0 {
        return Err(Error::invalid("clean-value prediction puts mass on the mask state"));
    }
    let qbar = schedule.qbar(t);
    let mut out = vec![0.0; n];
    let mut row = vec![0.0; n];
    let mut weight = 0.0;
    for (x0, &p) in p_x0.iter().enumerate().take(n - 1) {
        if p <= 0.0 || qbar.prob(x_t, x0) <= 0.0 {
            continue;
        }
        let total = fill_unnormalized(&mut row, x_t, x0, t, schedule);
        if total <= 0.0 {
            continue;
        }
        weight += p;
        for (o, r) in out.iter_mut().zip(&row) {
            *o += p * r / total;
        }
    }
    if weight <= 0.0 {
        return Err(Error::ImpossiblePosterior(format!(
            "no predicted clean value can produce state {x_t} at step {t}"
        )));
    }
    for o in &mut out {
        *o /= weight;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_diffusion::schedule::{build_schedule, KernelKind};

    #[test]
    fn unmasked_state_without_leak_is_a_point_mass() {
        let s = build_schedule(6, 3, KernelKind::IndependentMask, 0.0).unwrap();
        let p = true_posterior(1, 1, 4, &s).unwrap();
        assert_eq!(p, vec![0.0, 1.0, 0.0, 0.0, 0.0]);
        assert!(true_posterior(2, 1, 4, &s).is_err());
    }

    #[test]
    fn first_step_recovers_the_clean_value() {
        let s = build_schedule(6, 3, KernelKind::IndependentMask, 0.01).unwrap();
        let p = true_posterior(4, 2, 1, &s).unwrap();
        assert_eq!(p, vec![0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn point_mass_prediction_gives_true_posterior() {
        let s = build_schedule(5, 4, KernelKind::IndependentMask, 0.05).unwrap();
        let mut p = vec![0.0; 5];
        p[3] = 1.0;
        let a = model_posterior(5, &p, 3, &s).unwrap();
        let b = true_posterior(5, 3, 3, &s).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn mask_prediction_is_rejected() {
        let s = build_schedule(5, 2, KernelKind::IndependentMask, 0.0).unwrap();
        assert!(model_posterior(3, &[0.5, 0.0, 0.0, 0.5], 2, &s).is_err());
    }
}
