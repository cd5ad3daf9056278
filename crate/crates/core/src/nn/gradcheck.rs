use super::{Graph, ParamStore, Var};
use crate::error::Result;

/// Denominator floor for the relative error, so that gradients that are
/// zero up to roundoff compare as equal.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: String,
    pub checked: usize,
}

pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Compares reverse-mode gradients of the scalar built by `f` against central
/// finite differences with step `h`, over every value of every parameter.
pub fn check_gradients<F>(store: &mut ParamStore, h: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    store.zero_grad();
    let mut g = Graph::new();
    let loss = f(&mut g, store)?;
    g.backward(loss, store);
    let analytic: Vec<Vec<f64>> = store.iter().map(|p| p.grad.clone()).collect();

    let eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let l = f(&mut g, store)?;
        Ok(g.scalar(l))
    };
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    let ids: Vec<_> = store.ids().collect();
    for (pi, id) in ids.into_iter().enumerate() {
        for k in 0..store.value(id).len() {
            let orig = store.value(id).data()[k];
            store.get_mut(id).value.data_mut()[k] = orig + h;
            let plus = eval(store)?;
            store.get_mut(id).value.data_mut()[k] = orig - h;
            let minus = eval(store)?;
            store.get_mut(id).value.data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let e = rel_error(analytic[pi][k], numeric);
            report.checked += 1;
            if e > report.max_rel_error {
                report.max_rel_error = e;
                report.worst = format!(
                    "{}[{k}]: analytic {:.6e} numeric {:.6e}",
                    store.get(id).name,
                    analytic[pi][k],
                    numeric
                );
            }
        }
    }
    store.zero_grad();
    Ok(report)
}
