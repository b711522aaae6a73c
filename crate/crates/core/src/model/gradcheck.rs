use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::features::Clip;
use crate::math::{finite_diff_check, sample_coords, GradCheckReport, ParamSet};
use crate::model::{clip_loss, forward, loss_and_grad, param_blocks, ModelConfig};

/// Worst finite-difference disagreement within one parameter group.
#[derive(Clone, Debug)]
pub struct BlockReport {
    pub block: String,
    pub report: GradCheckReport,
}

/// Compares the analytic clip-loss gradient with central differences, per parameter group.
///
/// Up to `per_tensor` coordinates of every tensor are probed.
pub fn check_gradients(
    clip: &Clip,
    params: &ParamSet,
    cfg: &ModelConfig,
    per_tensor: usize,
    eps: f32,
    seed: u64,
) -> Result<Vec<BlockReport>> {
    let (_, analytic) = loss_and_grad(clip, params, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = sample_coords(params, per_tensor, &mut rng);
    let mut work = params.clone();
    let mut out = Vec::new();
    for block in param_blocks(cfg) {
        let in_block: Vec<_> = coords
            .iter()
            .copied()
            .filter(|&(id, _)| {
                let name = params.name(id);
                name.rsplit_once('.').map_or(name, |(p, _)| p) == block
            })
            .collect();
        let loss = |p: &ParamSet| {
            let trace = forward(clip, p, cfg).expect("forward succeeded once");
            clip_loss(&trace, clip.label).expect("label validated")
        };
        let report = finite_diff_check(loss, &mut work, &analytic, &in_block, eps);
        out.push(BlockReport { block, report });
    }
    Ok(out)
}
