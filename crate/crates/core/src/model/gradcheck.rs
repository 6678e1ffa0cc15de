//! Central finite-difference checks of reverse-mode gradients.

use crate::rng::SplitMix64;

use super::params::{ParamId, ParameterStore};
use super::tape::{Graph, Var};

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Tensor name, flat index, analytic, numeric of the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

pub const DEFAULT_STEP: f64 = 1e-5;

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// `n` coordinates drawn uniformly from the values of `tensors`.
pub fn sample_coordinates(store: &ParameterStore, tensors: &[ParamId], n: usize, rng: &mut SplitMix64) -> Vec<(ParamId, usize)> {
    let sizes: Vec<f64> = tensors.iter().map(|t| store.get(*t).data.len() as f64).collect();
    if sizes.iter().sum::<f64>() == 0.0 {
        return Vec::new();
    }
    (0..n)
        .map(|_| {
            let t = tensors[rng.weighted(&sizes)];
            (t, rng.below(store.get(t).data.len()))
        })
        .collect()
}

/// Compares `d f / d θ` from the tape against `(f(θ+h) − f(θ−h)) / 2h`
/// on each coordinate.
pub fn check_gradients<F>(store: &ParameterStore, coords: &[(ParamId, usize)], step: f64, f: F) -> GradCheckReport
where
    F: for<'g> Fn(&'g Graph<'g>) -> Var<'g>,
{
    let analytic = {
        let g = Graph::new(store);
        let loss = f(&g);
        g.backward(loss)
    };
    let eval = |s: &ParameterStore| {
        let g = Graph::new(s);
        f(&g).scalar()
    };
    let mut report = GradCheckReport::default();
    let mut work = store.clone();
    for &(id, i) in coords {
        let orig = work.get(id).data[i];
        work.get_mut(id).data[i] = orig + step;
        let up = eval(&work);
        work.get_mut(id).data[i] = orig - step;
        let down = eval(&work);
        work.get_mut(id).data[i] = orig;
        let num = (up - down) / (2.0 * step);
        let a = analytic.get(id)[i];
        let rel = relative_error(a, num);
        report.checked += 1;
        if report.worst.is_none() || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = Some((store.get(id).name.clone(), i, a, num));
        }
    }
    report
}
