use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const MAX_TERMS: usize = 500;
const REL_TOL: f64 = 1e-15;

/// Two-parameter Mittag-Leffler function `E_{α,β}(z) = Σ_n z^n / Γ(αn + β)`.
///
/// The series is summed term by term with the terms computed in log space.
/// Summation stops once a term falls below `1e-15` relative to the partial
/// sum, or after 500 terms. Non-finite results raise [`Error::Range`].
pub fn mittag_leffler(alpha: f64, beta: f64, z: f64) -> Result<f64> {
    if !(alpha > 0.0 && beta > 0.0) || !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::Domain(format!(
            "Mittag-Leffler parameters must be positive, got alpha={alpha}, beta={beta}"
        )));
    }
    if !z.is_finite() {
        return Err(Error::Range(format!("Mittag-Leffler argument {z} is not finite")));
    }
    if z == 0.0 {
        return Ok((-ln_gamma(beta)).exp());
    }
    let log_abs_z = z.abs().ln();
    let negative = z < 0.0;
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut converged = false;
    for n in 0..MAX_TERMS {
        let log_term = n as f64 * log_abs_z - ln_gamma(alpha * n as f64 + beta);
        if log_term > f64::MAX.ln() {
            return Err(Error::Range(format!(
                "Mittag-Leffler term {n} overflows for z={z}"
            )));
        }
        let mut term = log_term.exp();
        if negative && n % 2 == 1 {
            term = -term;
        }
        // Kahan-Babuska summation keeps alternating series accurate.
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
        let total = sum + comp;
        let past_peak = (n as f64) * alpha + beta > z.abs().powf(1.0 / alpha) + 1.0;
        if past_peak && term.abs() <= REL_TOL * total.abs() {
            converged = true;
            break;
        }
    }
    let total = sum + comp;
    if !converged {
        return Err(Error::Range(format!(
            "Mittag-Leffler series did not converge within {MAX_TERMS} terms for z={z}"
        )));
    }
    if !total.is_finite() {
        return Err(Error::Range(format!("Mittag-Leffler value for z={z} is not finite")));
    }
    Ok(total)
}
