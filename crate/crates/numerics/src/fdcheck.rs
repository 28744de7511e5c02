//! Central finite-difference verification of analytic gradients.
//!
//! This is the oracle the gradient tests are pinned against: analytic
//! gradients from [`Graph::backprop`] are compared element by element with
//! central differences of the same scalar loss.

use crate::error::{NumericsError, Result};
use crate::graph::{Graph, NodeId};
use crate::params::{ParamId, ParamStore};
use crate::precision::Precision;

/// Maximum relative disagreement between analytic and central-difference
/// gradients over the listed parameters.
///
/// `build_loss` must construct the same scalar loss every time it is called
/// with the current store contents; it is invoked once for the analytic
/// sweep and twice per checked element for the differences. The relative
/// error of one element is `|analytic - fd| / (|fd| + 1e-8)`.
pub fn finite_diff_check<F>(
    store: &mut ParamStore,
    ids: &[ParamId],
    eps: f64,
    build_loss: F,
) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore) -> NodeId,
{
    if eps <= 0.0 {
        return Err(NumericsError::InvalidEps { eps });
    }

    // Analytic gradients, computed in double precision on clean buffers.
    store.zero_grads();
    let mut graph = Graph::new(Precision::Double);
    let loss = build_loss(&mut graph, store);
    graph.backprop(loss, store)?;
    let analytic: Vec<Vec<f64>> =
        ids.iter().map(|&id| store.get(id).grad.data().to_vec()).collect();
    store.zero_grads();

    let eval = |store: &ParamStore| -> f64 {
        let mut graph = Graph::inference(Precision::Double);
        let loss = build_loss(&mut graph, store);
        graph.scalar(loss)
    };

    let mut max_rel = 0.0f64;
    for (slot, &id) in ids.iter().enumerate() {
        for i in 0..store.get(id).value.len() {
            let original = store.get(id).value.data()[i];
            store.get_mut(id).value.data_mut()[i] = original + eps;
            let plus = eval(store);
            store.get_mut(id).value.data_mut()[i] = original - eps;
            let minus = eval(store);
            store.get_mut(id).value.data_mut()[i] = original;

            let fd = (plus - minus) / (2.0 * eps);
            let rel = (analytic[slot][i] - fd).abs() / (fd.abs() + 1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}
