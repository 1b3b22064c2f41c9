//! Central finite-difference gradient oracle, independent of the backward
//! rules it checks.

use phasekit::tensor::{Graph, ParamStore, TensorError, Var};

pub const FD_EPS: f64 = 1e-5;

/// Denominator floor so that exact zeros compare by absolute error.
const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Max relative error between backprop and central differences over every
/// scalar of every parameter in `store`. `build` must be deterministic.
pub fn max_grad_error<F>(store: &mut ParamStore, build: F) -> Result<f64, TensorError>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var, TensorError>,
{
    store.zero_grads();
    let mut g = Graph::new(true);
    let loss = build(&mut g, store)?;
    g.backward(loss, store)?;
    let analytic: Vec<Vec<f64>> = store
        .iter()
        .map(|p| p.grad.as_ref().map(|t| t.data().to_vec()).unwrap_or_else(|| vec![0.0; p.value.numel()]))
        .collect();

    let eval = |store: &ParamStore| -> Result<f64, TensorError> {
        let mut g = Graph::new(true);
        let loss = build(&mut g, store)?;
        Ok(g.value(loss).item())
    };

    let mut worst: f64 = 0.0;
    let names: Vec<String> = store.iter().map(|p| p.name.clone()).collect();
    for (pi, name) in names.iter().enumerate() {
        let id = store.id(name).unwrap();
        if !store.get(id).requires_grad {
            continue;
        }
        for i in 0..store.get(id).value.numel() {
            let orig = store.get(id).value.data()[i];
            store.get_mut(id).value.data_mut()[i] = orig + FD_EPS;
            let plus = eval(store)?;
            store.get_mut(id).value.data_mut()[i] = orig - FD_EPS;
            let minus = eval(store)?;
            store.get_mut(id).value.data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * FD_EPS);
            worst = worst.max(relative_error(analytic[pi][i], numeric));
        }
    }
    store.zero_grads();
    Ok(worst)
}
