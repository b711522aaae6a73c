use rand::seq::index::sample;
use rand::Rng;

use crate::math::{ParamId, ParamSet};

/// Worst coordinate found by [`finite_diff_check`].
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: Option<(String, usize, f64, f64)>,
    pub checked: usize,
}

/// Picks up to `per_block` coordinates from every tensor.
pub fn sample_coords<R: Rng>(params: &ParamSet, per_block: usize, rng: &mut R) -> Vec<(ParamId, usize)> {
    let mut coords = Vec::new();
    for id in params.ids() {
        let len = params.get(id).len();
        let take = per_block.min(len);
        let mut picked: Vec<usize> = sample(rng, len, take).into_iter().collect();
        picked.sort_unstable();
        coords.extend(picked.into_iter().map(|c| (id, c)));
    }
    coords
}

/// Central-difference check of `analytic` against `loss` at the given coordinates.
///
/// Relative error per coordinate is `|a - n| / max(|a|, |n|, 1e-8)`. The step actually
/// applied to each `f32` coordinate is used as the divisor, so rounding of `x ± eps`
/// does not bias the estimate. `params` is restored before returning.
pub fn finite_diff_check<F>(
    mut loss: F,
    params: &mut ParamSet,
    analytic: &ParamSet,
    coords: &[(ParamId, usize)],
    eps: f32,
) -> GradCheckReport
where
    F: FnMut(&ParamSet) -> f64,
{
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for &(id, coord) in coords {
        let original = params.get(id).data()[coord];
        let plus = original + eps;
        let minus = original - eps;
        params.get_mut(id).data_mut()[coord] = plus;
        let f_plus = loss(params);
        params.get_mut(id).data_mut()[coord] = minus;
        let f_minus = loss(params);
        params.get_mut(id).data_mut()[coord] = original;

        let numeric = (f_plus - f_minus) / (f64::from(plus) - f64::from(minus));
        let exact = f64::from(analytic.get(id).data()[coord]);
        let rel = (exact - numeric).abs() / exact.abs().max(numeric.abs()).max(1e-8);
        report.checked += 1;
        if rel > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(rel);
            report.worst = Some((params.name(id).to_string(), coord, exact, numeric));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn half_sq(p: &ParamSet) -> f64 {
        0.5 * p.iter().map(|(_, t)| t.sum_squares()).sum::<f64>()
    }

    fn setup() -> (ParamSet, Vec<(ParamId, usize)>) {
        let mut p = ParamSet::new();
        p.insert("x", Tensor::vector(vec![0.3, -1.2, 2.5, 0.01])).unwrap();
        p.insert("y", Tensor::matrix(2, 2, vec![1.0, -0.5, 0.25, 4.0]).unwrap())
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let coords = sample_coords(&p, 10, &mut rng);
        (p, coords)
    }

    #[test]
    fn quadratic_is_exact() {
        let (mut p, coords) = setup();
        let grad = p.clone();
        let r = finite_diff_check(half_sq, &mut p, &grad, &coords, 1e-3);
        assert_eq!(r.checked, 8);
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let (mut p, coords) = setup();
        let mut grad = p.clone();
        let id = grad.id("y").unwrap();
        grad.get_mut(id).data_mut()[3] *= 2.0;
        let r = finite_diff_check(half_sq, &mut p, &grad, &coords, 1e-3);
        assert!(r.max_rel_error > 0.3, "{r:?}");
        assert_eq!(r.worst.unwrap().0, "y");
    }

    #[test]
    fn params_restored() {
        let (mut p, coords) = setup();
        let before = p.clone();
        let grad = p.clone();
        finite_diff_check(half_sq, &mut p, &grad, &coords, 1e-2);
        assert_eq!(p, before);
    }
}
