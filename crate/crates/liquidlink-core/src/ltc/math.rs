//! Numerically stable scalar nonlinearities shared by the cell and the
//! training code. All of them avoid overflow for any finite input.

/// Logistic function 1/(1+e^(−z)), evaluated without overflow on either tail.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// softplus(u) = ln(1+e^u), the positive map behind τ, w and |A|.
pub fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

/// Inverse of [`softplus`] for y > 0: the u with softplus(u) = y.
pub fn softplus_inv(y: f64) -> f64 {
    debug_assert!(y > 0.0, "softplus_inv needs a positive argument");
    y + (-(-y).exp()).ln_1p()
}

/// d softplus(u)/du, which is exactly the logistic function.
pub fn softplus_prime(u: f64) -> f64 {
    sigmoid(u)
}
