//! Central finite differences for checking taped gradients.

use super::params::ParamSet;
use super::tape::Tensor;

/// `(f(x + h eᵢ) − f(x − h eᵢ)) / 2h` for every coordinate of `x`.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Largest relative error between `analytic` (one tensor per parameter, in
/// [`ParamSet`] order) and central differences of `loss` over every scalar
/// weight. Returns `(error, parameter name, flat index)`.
pub fn max_param_gradient_error(
    params: &ParamSet,
    analytic: &[Tensor],
    mut loss: impl FnMut(&ParamSet) -> f64,
    h: f64,
    floor: f64,
) -> (f64, String, usize) {
    let mut worst = (0.0, String::new(), 0);
    let mut probe = params.clone();
    for (k, name) in params.names().iter().enumerate() {
        let n = params.tensors()[k].len();
        for i in 0..n {
            let orig = probe.tensors()[k].as_slice().expect("contiguous")[i];
            let mut eval = |v: f64, p: &mut ParamSet| {
                p.tensors_mut()[k].as_slice_mut().expect("contiguous")[i] = v;
                loss(p)
            };
            let up = eval(orig + h, &mut probe);
            let down = eval(orig - h, &mut probe);
            probe.tensors_mut()[k].as_slice_mut().expect("contiguous")[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let a = analytic[k].as_slice().expect("contiguous")[i];
            let err = relative_error(a, fd, floor);
            if err > worst.0 {
                worst = (err, name.clone(), i);
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_of_cubic() {
        let g = central_difference(|x| x[0].powi(3) + 2.0 * x[1], &[2.0, -1.0], 1e-5);
        assert!((g[0] - 12.0).abs() < 1e-8);
        assert!((g[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0, 1e-8), 0.0);
        assert!((relative_error(1.0, 1.001, 1e-8) - 0.001 / 1.001).abs() < 1e-15);
    }
}
