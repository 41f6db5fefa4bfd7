//! Central finite-difference check of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::params::{Bound, ParamStore};

/// Gradients whose norm is below this are compared absolutely. Parameters
/// with an exactly zero gradient (attention key biases) otherwise compare
/// central-difference round-off against itself.
pub const ABS_FLOOR: f64 = 1e-5;

/// Per-parameter error `|a - n| / max(|a|, |n|, ABS_FLOOR)` in the vector
/// norm over the checked coordinates, `a` analytic and `n` numeric.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub worst: f64,
    pub worst_param: String,
    pub per_param: Vec<(String, f64)>,
}

/// Checks every coordinate of every parameter. `loss` builds a scalar on a
/// fresh graph and must be a deterministic function of the parameters.
pub fn check_gradients<F>(params: &ParamStore<f64>, h: f64, loss: F) -> GradCheck
where
    F: FnMut(&mut Graph<f64>, &Bound) -> Var,
{
    check_gradients_sampled(params, h, usize::MAX, 0, loss)
}

/// Like [`check_gradients`] but with at most `per_param` coordinates per
/// tensor, chosen by `seed`.
pub fn check_gradients_sampled<F>(params: &ParamStore<f64>, h: f64, per_param: usize, seed: u64, mut loss: F) -> GradCheck
where
    F: FnMut(&mut Graph<f64>, &Bound) -> Var,
{
    let mut g = Graph::new();
    let bound = params.bind(&mut g, true);
    let root = loss(&mut g, &bound);
    let mut grads = g.backward(root);
    let analytic = bound.grads(&g, &mut grads);

    let eval = |p: &ParamStore<f64>, loss: &mut F| {
        let mut g = Graph::new();
        let b = p.bind(&mut g, false);
        let r = loss(&mut g, &b);
        g.value(r).data()[0]
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = params.clone();
    let mut per = Vec::new();
    for id in params.ids() {
        let n = params.get(id).numel();
        let coords: Vec<usize> = if per_param >= n {
            (0..n).collect()
        } else {
            sample(&mut rng, n, per_param).into_vec()
        };
        let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
        for j in coords {
            let orig = work.get(id).data()[j];
            work.get_mut(id).data_mut()[j] = orig + h;
            let up = eval(&work, &mut loss);
            work.get_mut(id).data_mut()[j] = orig - h;
            let down = eval(&work, &mut loss);
            work.get_mut(id).data_mut()[j] = orig;
            let num = (up - down) / (2.0 * h);
            let a = analytic[id.index()][j];
            diff += (a - num) * (a - num);
            na += a * a;
            nn += num * num;
        }
        let rel = diff.sqrt() / na.sqrt().max(nn.sqrt()).max(ABS_FLOOR);
        per.push((params.name(id).to_string(), rel));
    }
    let (worst_param, worst) = per
        .iter()
        .cloned()
        .fold((String::new(), 0.0), |acc, (n, e)| if e > acc.1 { (n, e) } else { acc });
    GradCheck {
        worst,
        worst_param,
        per_param: per,
    }
}
