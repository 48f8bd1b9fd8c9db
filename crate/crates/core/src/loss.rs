//! Training objective: an adversarial augmentation term that rewards
//! augmentations far from the original graph, and a cross-view NT-Xent
//! contrastive term.

use crate::autodiff::{NtXentVariant, Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// `−(‖A − Aug_S‖²_F + ‖X − Aug_X‖²_F)`
pub fn augmentation_loss(tape: &mut Tape, adjacency: Var, attributes: Var, aug_s: Var, aug_x: Var) -> Result<Var> {
    let ds = tape.squared_distance(adjacency, aug_s)?;
    let dx = tape.squared_distance(attributes, aug_x)?;
    let sum = tape.add(ds, dx)?;
    tape.neg(sum)
}

/// NT-Xent over the cross-view similarity `F_v1 F_v2ᵀ / temp`; positives
/// sit on the diagonal.
pub fn contrastive_loss(tape: &mut Tape, f_v1: Var, f_v2: Var, temp: f64, variant: NtXentVariant) -> Result<Var> {
    if tape.shape(f_v1) != tape.shape(f_v2) {
        return Err(Error::shape("contrastive_loss", tape.shape(f_v1), tape.shape(f_v2)));
    }
    let sim = tape.matmul_nt(f_v1, f_v2)?;
    contrastive_loss_from_similarity(tape, sim, temp, variant)
}

/// Same as [`contrastive_loss`] given an already recorded `F_v1 F_v2ᵀ`.
pub fn contrastive_loss_from_similarity(tape: &mut Tape, sim: Var, temp: f64, variant: NtXentVariant) -> Result<Var> {
    if !(temp > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature {temp} must be positive")));
    }
    tape.ntxent(sim, 1.0 / temp, variant)
}

/// `L_a + α L_c`
pub fn total_loss(tape: &mut Tape, la: Var, lc: Var, alpha: f64) -> Result<Var> {
    let weighted = tape.scale(lc, alpha)?;
    tape.add(la, weighted)
}

pub fn augmentation_loss_value(a: &Matrix, x: &Matrix, aug_s: &Matrix, aug_x: &Matrix) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = [a, x, aug_s, aug_x].map(|m| tape.constant(m.clone()));
    let l = augmentation_loss(&mut tape, vars[0], vars[1], vars[2], vars[3])?;
    Ok(tape.scalar(l))
}

pub fn contrastive_loss_value(f_v1: &Matrix, f_v2: &Matrix, temp: f64, variant: NtXentVariant) -> Result<f64> {
    let mut tape = Tape::new();
    let (a, b) = (tape.constant(f_v1.clone()), tape.constant(f_v2.clone()));
    let l = contrastive_loss(&mut tape, a, b, temp, variant)?;
    Ok(tape.scalar(l))
}
