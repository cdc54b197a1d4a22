//! Central finite-difference checks for tape-built functions.

use ndarray::Array2;

use crate::autodiff::{Tape, Var};
use crate::params::ParamStore;

/// Relative error between two gradient sets, `|a - n| / max(|a|, |n|)` in the
/// L2 sense, maximized over tensors. Tensors whose gradients are both below
/// `1e-8` in norm are skipped: that is the rounding noise of a central
/// difference, and parameters such as key biases have exactly zero gradient.
pub fn relative_error(analytic: &[Array2<f64>], numeric: &[Array2<f64>]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| {
            let diff = (a - n).mapv(|x| x * x).sum().sqrt();
            let scale = a.mapv(|x| x * x).sum().sqrt().max(n.mapv(|x| x * x).sum().sqrt());
            if scale < 1e-8 {
                0.0
            } else {
                diff / scale
            }
        })
        .fold(0.0, f64::max)
}

/// Checks gradients with respect to tape inputs. `build` receives one var per
/// input matrix and returns a scalar.
pub fn check_inputs<F>(inputs: &[Array2<f64>], step: f64, build: F) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Var,
{
    let eval = |vals: &[Array2<f64>]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|v| tape.input(v.clone())).collect();
        let out = build(&mut tape, &vars);
        (tape, vars, out)
    };
    let (tape, vars, out) = eval(inputs);
    let grads = tape.backward(out);
    let analytic: Vec<Array2<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, x)| grads.get(v).cloned().unwrap_or_else(|| Array2::zeros(x.dim())))
        .collect();

    let mut numeric = Vec::with_capacity(inputs.len());
    let mut work = inputs.to_vec();
    for t in 0..inputs.len() {
        let mut g = Array2::zeros(inputs[t].dim());
        for idx in 0..inputs[t].len() {
            let orig = work[t].as_slice().unwrap()[idx];
            work[t].as_slice_mut().unwrap()[idx] = orig + step;
            let (tp, _, o) = eval(&work);
            let plus = tp.value(o)[(0, 0)];
            work[t].as_slice_mut().unwrap()[idx] = orig - step;
            let (tm, _, o) = eval(&work);
            let minus = tm.value(o)[(0, 0)];
            work[t].as_slice_mut().unwrap()[idx] = orig;
            g.as_slice_mut().unwrap()[idx] = (plus - minus) / (2.0 * step);
        }
        numeric.push(g);
    }
    relative_error(&analytic, &numeric)
}

/// Checks gradients with respect to every parameter in `store`. `loss`
/// builds the scalar on a fresh tape from the given parameters.
pub fn check_params<F>(store: &ParamStore<f64>, step: f64, loss: F) -> f64
where
    F: Fn(&mut Tape<f64>, &ParamStore<f64>) -> Var,
{
    let mut tape = Tape::new();
    let out = loss(&mut tape, store);
    let grads = tape.backward(out);
    let analytic = tape.param_grads(&grads, store);

    let mut work = store.clone();
    let mut numeric = Vec::with_capacity(store.len());
    for slot in 0..store.len() {
        let mut g = Array2::zeros(store.get(slot).dim());
        for idx in 0..store.get(slot).len() {
            let orig = store.get(slot).as_slice().unwrap()[idx];
            let mut f = |x: f64| {
                work.get_mut(slot).as_slice_mut().unwrap()[idx] = x;
                let mut t = Tape::new();
                let o = loss(&mut t, &work);
                t.value(o)[(0, 0)]
            };
            let plus = f(orig + step);
            let minus = f(orig - step);
            f(orig);
            g.as_slice_mut().unwrap()[idx] = (plus - minus) / (2.0 * step);
        }
        numeric.push(g);
    }
    relative_error(&analytic, &numeric)
}
