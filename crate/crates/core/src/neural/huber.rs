/// Huber loss of `error` with threshold `delta`, returned as `(value, derivative)`.
///
/// Quadratic for `|error| <= delta`, linear beyond; the derivative is `error` clipped to
/// `[-delta, delta]`.
pub fn huber(error: f64, delta: f64) -> (f64, f64) {
    debug_assert!(delta > 0.0);
    let abs = error.abs();
    if abs <= delta {
        (0.5 * error * error, error)
    } else {
        (delta * (abs - 0.5 * delta), delta * error.signum())
    }
}
