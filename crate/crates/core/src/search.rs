//! One-dimensional maximization: a doubling ramp to bracket the peak, then
//! golden-section refinement.

use num_traits::Float;

#[derive(Debug, Clone, Copy)]
pub struct SearchConfig<T> {
    /// First probe of the ramp.
    pub x_min: T,
    /// Largest admissible argument.
    pub x_max: T,
    /// Golden-section stops once the bracket is narrower than `rel_tol * hi`.
    pub rel_tol: T,
    pub max_golden_iter: usize,
}

impl<T: Float> SearchConfig<T> {
    pub fn new(x_max: T) -> Self {
        SearchConfig { x_min: T::from(1e-6).unwrap(), x_max, rel_tol: T::from(1e-10).unwrap(), max_golden_iter: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak<T> {
    pub x: T,
    pub value: T,
    pub evaluations: usize,
}

fn sanitize<T: Float>(v: T) -> T {
    if v.is_nan() {
        T::neg_infinity()
    } else {
        v
    }
}

/// Doubles `x` from `x_min` until `f` decreases or `x_max` is reached.
/// Returns the bracket `(lo, hi)` around the best probe along with that probe.
pub fn ramp<T: Float, F: FnMut(T) -> T>(f: &mut F, cfg: &SearchConfig<T>) -> (T, T, Peak<T>) {
    let two = T::one() + T::one();
    let mut evals = 0;
    let mut x = cfg.x_min.min(cfg.x_max);
    let mut fx = sanitize(f(x));
    evals += 1;
    let mut prev = T::zero();
    loop {
        if x >= cfg.x_max {
            return (prev, x, Peak { x, value: fx, evaluations: evals });
        }
        let nx = (x * two).min(cfg.x_max);
        let fnx = sanitize(f(nx));
        evals += 1;
        if fnx < fx {
            return (prev, nx, Peak { x, value: fx, evaluations: evals });
        }
        prev = x;
        x = nx;
        fx = fnx;
    }
}

/// Golden-section search for the maximum of a unimodal `f` on `[lo, hi]`.
pub fn golden<T: Float, F: FnMut(T) -> T>(f: &mut F, mut lo: T, mut hi: T, cfg: &SearchConfig<T>) -> Peak<T> {
    let inv_phi = T::from(0.618_033_988_749_894_9).unwrap();
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = sanitize(f(c));
    let mut fd = sanitize(f(d));
    let mut evals = 2;
    for _ in 0..cfg.max_golden_iter {
        if hi - lo <= cfg.rel_tol * hi.abs().max(cfg.x_min) {
            break;
        }
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = sanitize(f(c));
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = sanitize(f(d));
        }
        evals += 1;
    }
    if fc >= fd {
        Peak { x: c, value: fc, evaluations: evals }
    } else {
        Peak { x: d, value: fd, evaluations: evals }
    }
}

/// Ramp then golden section; returns the best point seen.
pub fn maximize<T: Float, F: FnMut(T) -> T>(mut f: F, cfg: &SearchConfig<T>) -> Peak<T> {
    let (lo, hi, ramp_best) = ramp(&mut f, cfg);
    let g = golden(&mut f, lo, hi, cfg);
    let evaluations = ramp_best.evaluations + g.evaluations;
    if g.value >= ramp_best.value {
        Peak { evaluations, ..g }
    } else {
        Peak { evaluations, ..ramp_best }
    }
}
