use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;

/// Log of the normal density with mean `mu` and standard deviation `sigma`.
pub fn gaussian_logdensity(y: f64, mu: f64, sigma: f64) -> f64 {
    let z = (y - mu) / sigma;
    -0.5 * (2.0 * PI).ln() - sigma.ln() - 0.5 * z * z
}

/// Log of the location-scale Student-t density with `nu` degrees of freedom.
pub fn student_t_logdensity(y: f64, mu: f64, sigma: f64, nu: f64) -> f64 {
    let z = (y - mu) / sigma;
    ln_gamma(0.5 * (nu + 1.0))
        - ln_gamma(0.5 * nu)
        - 0.5 * (nu * PI).ln()
        - sigma.ln()
        - 0.5 * (nu + 1.0) * (z * z / nu).ln_1p()
}

/// IRLS weight of a residual `r` under a Student-t error with scale `sigma`:
/// `(nu + 1) / (nu + (r / sigma)^2)`.
pub fn student_t_weight(r: f64, sigma: f64, nu: f64) -> f64 {
    let z = r / sigma;
    (nu + 1.0) / (nu + z * z)
}
