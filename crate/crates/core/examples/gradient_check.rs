//! Compares reverse-mode gradients of the joint objective with central
//! finite differences on a four-label hierarchy.

use hhar::diffcore::{seed_rng, Tensor};
use hhar::model::Batch;
use hhar::objectives::{total_loss, LossTerms, LossWeights};
use hhar::{LabelHierarchy, Model, ModelConfig, Widths};

fn main() -> hhar::Result<()> {
    let h = LabelHierarchy::from_edges(&[("r", "still"), ("r", "walking"), ("still", "sitting"), ("still", "standing")])?;
    let mut cfg = ModelConfig::new(3);
    cfg.widths = Widths::uniform(3);
    let model = Model::init(cfg, h.clone(), &mut seed_rng(1))?;
    let x = Tensor::from_rows(&[vec![0.3, -0.2, 0.9], vec![-1.0, 0.4, 0.1], vec![0.5, 0.5, -0.5]])?;
    let batch = Batch::new(&h, x, vec![2, 1, 3])?;
    let weights = LossWeights::default();

    let eval = total_loss(&model, &batch, &weights, LossTerms::ALL)?;
    println!("L_align {:.6}  L_con {:.6}  L_ce {:.6}", eval.values.align, eval.values.contrastive, eval.values.cross_entropy);
    let step = 1e-5;
    for (name, grad) in &eval.grads {
        let mut worst = 0.0f64;
        for e in 0..grad.len() {
            let at = |delta: f64| -> hhar::Result<f64> {
                let mut m = model.clone();
                m.params.value_mut(name)?.data_mut()[e] += delta;
                Ok(total_loss(&m, &batch, &weights, LossTerms::ALL)?.values.total)
            };
            let numeric = (at(step)? - at(-step)?) / (2.0 * step);
            let a = grad.data()[e];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3));
        }
        println!("{name:<18} {:>3} entries  max rel err {worst:.2e}", grad.len());
    }
    Ok(())
}
