use super::AdvLoss;
use crate::affect_metrics::{affect_loss, AffectEstimate, ClassWeighting, LossKind, MetricsError};
use crate::models::{Aeg, ModelError};
use crate::nn::{Graph, Real, Tensor, Var};

/// `ln(1 + eˣ)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Discriminator adversarial loss over patch scores, to be minimised:
/// `−E[log σ(r)] − E[log(1 − σ(f))]` or `E[(r−1)²] + E[f²]`.
/// Returns the value and gradients with respect to both score maps.
pub fn adv_loss_d(real: &[f64], fake: &[f64], kind: AdvLoss) -> (f64, Vec<f64>, Vec<f64>) {
    let (nr, nf) = (real.len().max(1) as f64, fake.len().max(1) as f64);
    match kind {
        AdvLoss::NonsaturatingLog => {
            let v = real.iter().map(|&r| softplus(-r)).sum::<f64>() / nr + fake.iter().map(|&f| softplus(f)).sum::<f64>() / nf;
            let gr = real.iter().map(|&r| -logistic(-r) / nr).collect();
            let gf = fake.iter().map(|&f| logistic(f) / nf).collect();
            (v, gr, gf)
        }
        AdvLoss::LeastSquares => {
            let v = real.iter().map(|&r| (r - 1.0).powi(2)).sum::<f64>() / nr + fake.iter().map(|&f| f * f).sum::<f64>() / nf;
            let gr = real.iter().map(|&r| 2.0 * (r - 1.0) / nr).collect();
            let gf = fake.iter().map(|&f| 2.0 * f / nf).collect();
            (v, gr, gf)
        }
    }
}

/// Generator adversarial loss: `−E[log σ(f)]` or `E[(f−1)²]`.
pub fn adv_loss_g(fake: &[f64], kind: AdvLoss) -> (f64, Vec<f64>) {
    let n = fake.len().max(1) as f64;
    match kind {
        AdvLoss::NonsaturatingLog => (
            fake.iter().map(|&f| softplus(-f)).sum::<f64>() / n,
            fake.iter().map(|&f| -logistic(-f) / n).collect(),
        ),
        AdvLoss::LeastSquares => (
            fake.iter().map(|&f| (f - 1.0).powi(2)).sum::<f64>() / n,
            fake.iter().map(|&f| 2.0 * (f - 1.0) / n).collect(),
        ),
    }
}

pub fn l1_mean(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "l1 length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len().max(1) as f64
}

/// Reconstruction loss before `λ_rec`: `L1(clean, AEG(noisy)) +
/// L1(AEG(noisy), AEG(AEG(noisy)))`, each a per-pixel mean.
pub fn rec_loss<T: Real>(clean: &Tensor<T>, noisy: &Tensor<T>, aeg: &Aeg<T>) -> Result<f64, ModelError> {
    if clean.shape() != noisy.shape() {
        return Err(crate::models::ModelError::Shape {
            what: "reconstruction pair".into(),
            expected: noisy.shape().to_vec(),
            got: clean.shape().to_vec(),
        });
    }
    let (once, _) = aeg.forward(noisy)?;
    let (twice, _) = aeg.forward(&once)?;
    let f = |t: &Tensor<T>| t.data().iter().map(|&v| v.to_f64_lossy()).collect::<Vec<f64>>();
    Ok(l1_mean(&f(clean), &f(&once)) + l1_mean(&f(&once), &f(&twice)))
}

/// In-graph reconstruction terms `(denoise, cycle)`.
pub(crate) fn rec_terms<T: Real>(
    g: &mut Graph<T>,
    aeg: &Aeg<T>,
    p: &crate::nn::Bound,
    clean: Var,
    once: Var,
) -> (Var, Var) {
    let denoise = g.l1_mean(once, clean);
    let twice = aeg.forward_graph(g, p, once).image;
    let cycle = g.l1_mean(twice, once);
    (denoise, cycle)
}

/// Attaches the affect loss of `affect [N, 2]` to the graph.
pub(crate) fn affect_term<T: Real>(
    g: &mut Graph<T>,
    affect: Var,
    labels: &[AffectEstimate],
    weights: [&ClassWeighting; 2],
    kind: LossKind,
) -> Result<(Var, f64), MetricsError> {
    let vals = g.value(affect).data();
    let preds: Vec<AffectEstimate> =
        vals.chunks(2).map(|c| AffectEstimate::new(c[0].to_f64_lossy(), c[1].to_f64_lossy())).collect();
    let loss = affect_loss(&preds, labels, weights, kind)?;
    let grad: Vec<T> = loss.grad.iter().flat_map(|e| [T::from_f64_lossy(e.valence), T::from_f64_lossy(e.arousal)]).collect();
    let var = g.scalar_fn(affect, T::from_f64_lossy(loss.value), Tensor::from_vec(&[preds.len(), 2], grad));
    Ok((var, loss.value))
}

/// Attaches a patch-map loss given its value and gradient.
pub(crate) fn patch_term<T: Real>(g: &mut Graph<T>, patch: Var, value: f64, grad: &[f64]) -> Var {
    let shape = g.value(patch).shape().to_vec();
    let grad = Tensor::from_vec(&shape, grad.iter().map(|&v| T::from_f64_lossy(v)).collect());
    g.scalar_fn(patch, T::from_f64_lossy(value), grad)
}

pub(crate) fn values_f64<T: Real>(g: &Graph<T>, v: Var) -> Vec<f64> {
    g.value(v).data().iter().map(|&x| x.to_f64_lossy()).collect()
}
