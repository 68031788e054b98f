use crate::error::{Error, Result};
use crate::geometry::{DofClassification, MultiPatch, PatchDofs};

/// Vertex-value constraints of one patch: `C` selects the primal corners of
/// the free coefficient vector, `R_c` maps them to global primal ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintMatrix {
    pub num_free: usize,
    /// Free position of each constrained corner (the rows of `C`).
    pub corners: Vec<usize>,
    /// Global primal id of each row.
    pub global: Vec<usize>,
}

impl ConstraintMatrix {
    pub fn rows(&self) -> usize {
        self.corners.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.corners.iter().map(|&c| x[c]).collect()
    }

    pub fn apply_transpose(&self, mu: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.num_free];
        for (&c, &m) in self.corners.iter().zip(mu) {
            x[c] += m;
        }
        x
    }
}

pub fn build_constraints(dofs: &DofClassification) -> Vec<ConstraintMatrix> {
    dofs.patches
        .iter()
        .map(|pd: &PatchDofs| ConstraintMatrix {
            num_free: pd.num_free(),
            corners: pd.primal.clone(),
            global: pd.primal_global.clone(),
        })
        .collect()
}

/// One nonzero of a local jump matrix `B^{(k)}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpEntry {
    pub lambda: usize,
    /// Free position in the patch.
    pub pos: usize,
    pub sign: f64,
}

/// Signed incidence between matched non-corner interface coefficients.
#[derive(Clone, Debug)]
pub struct JumpOperator {
    pub num_multipliers: usize,
    pub per_patch: Vec<Vec<JumpEntry>>,
}

impl JumpOperator {
    /// `out += B^{(k)} u`.
    pub fn apply_patch(&self, k: usize, u: &[f64], out: &mut [f64]) {
        for e in &self.per_patch[k] {
            out[e.lambda] += e.sign * u[e.pos];
        }
    }

    /// `out += (B^{(k)})ᵀ λ`.
    pub fn transpose_patch(&self, k: usize, lambda: &[f64], out: &mut [f64]) {
        for e in &self.per_patch[k] {
            out[e.pos] += e.sign * lambda[e.lambda];
        }
    }
}

/// One multiplier per matched pair of non-corner coefficients; the lower patch
/// index carries `+1`.
pub fn build_jumps(mp: &MultiPatch, dofs: &DofClassification) -> Result<JumpOperator> {
    let mut per_patch = vec![Vec::new(); mp.num_patches()];
    let mut n = 0;
    for itf in &mp.topology().interfaces {
        let ia = mp.patches()[itf.patch_a].side_indices(itf.side_a);
        let mut ib = mp.patches()[itf.patch_b].side_indices(itf.side_b);
        if ia.len() != ib.len() {
            return Err(Error::Topology(format!(
                "interface {}:{:?} / {}:{:?} has {} vs {} coefficients",
                itf.patch_a,
                itf.side_a,
                itf.patch_b,
                itf.side_b,
                ia.len(),
                ib.len()
            )));
        }
        if itf.reversed {
            ib.reverse();
        }
        let sa = if itf.patch_a < itf.patch_b { 1.0 } else { -1.0 };
        for (&ta, &tb) in ia.iter().zip(&ib).skip(1).take(ia.len().saturating_sub(2)) {
            let pa = dofs.patches[itf.patch_a].free_pos[ta];
            let pb = dofs.patches[itf.patch_b].free_pos[tb];
            let (Some(pa), Some(pb)) = (pa, pb) else {
                return Err(Error::Topology("interface coefficient marked Dirichlet".into()));
            };
            per_patch[itf.patch_a].push(JumpEntry { lambda: n, pos: pa, sign: sa });
            per_patch[itf.patch_b].push(JumpEntry { lambda: n, pos: pb, sign: -sa });
            n += 1;
        }
    }
    Ok(JumpOperator { num_multipliers: n, per_patch })
}
