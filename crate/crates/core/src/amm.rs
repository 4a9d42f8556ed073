//! Pricing curves, generic over the float type.
//!
//! `fee` arguments are the fraction of the input that is kept after the fee
//! (`997/1000` for a 0.3% pool, `1 - ppm/1e6` per conversion for Bancor).

use num_traits::Float;

/// Output of a constant-product swap of `dx` into a pool with reserves `x` (in)
/// and `y` (out).
pub fn cp_quote<T: Float>(x: T, y: T, fee: T, dx: T) -> T {
    let eff = fee * dx;
    eff * y / (x + eff)
}

/// New output-side reserve after a constant-product swap.
pub fn cp_out_reserve<T: Float>(x: T, y: T, fee: T, dx: T) -> T {
    x * y / (x + fee * dx)
}

/// Marginal rate of a constant-product pool.
pub fn cp_spot<T: Float>(x: T, y: T, fee: T) -> T {
    fee * y / x
}

/// Bancor converter output.
///
/// `r_in`/`r_out` are the connector balances, `w_in`/`w_out` their weights
/// (any common unit), `fee` the per-conversion retention factor which is
/// applied twice as in the deployed converter.
pub fn bancor_quote<T: Float>(r_in: T, r_out: T, w_in: T, w_out: T, fee: T, dx: T) -> T {
    if dx == T::zero() {
        return T::zero();
    }
    let e = w_in / w_out;
    // 1 - (r/(r+dx))^e, without cancellation for small dx
    let gross = -(-(e * (dx / r_in).ln_1p())).exp_m1();
    r_out * gross * fee * fee
}

/// Marginal rate of a Bancor converter at zero input.
pub fn bancor_spot<T: Float>(r_in: T, r_out: T, w_in: T, w_out: T, fee: T) -> T {
    r_out * (w_in / w_out) / r_in * fee * fee
}
