use crate::error::{LabError, Result};
use crate::linearized::field::ExteriorField;
use crate::scalar::Real;
use crate::spectrum::{apply_l, SpectralData};

/// `w_ss + c1 w_s + c2 L w`, with spectral angular derivatives and
/// fourth-order differences in `s`.
pub fn apply_cal_l<T: Real>(w: &ExteriorField<T>, spec: &SpectralData<T>) -> Result<ExteriorField<T>> {
    let weight = spec.weight();
    if weight.n() != w.grid.n {
        return Err(LabError::GridMismatch("spectral data and field use different angular grids".into()));
    }
    let c = &spec.consts;
    let ws = w.d_s();
    let wss = w.d_ss();
    let slices = (0..w.grid.len)
        .map(|j| {
            let mut out = wss.slices[j].clone();
            out.axpy(c.c1, &ws.slices[j]);
            out.axpy(c.c2, &apply_l(&w.slices[j], weight));
            out
        })
        .collect();
    Ok(ExteriorField { grid: w.grid, slices, gamma: w.gamma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linearized::field::ExteriorGrid;
    use crate::shrinker::ShrinkerProfile;
    use crate::spectrum::eig_l_full;

    #[test]
    fn jacobi_fields_are_annihilated() {
        let p = ShrinkerProfile::round(2, 0.1f64, 32).unwrap();
        let spec = eig_l_full(&p).unwrap();
        let grid = ExteriorGrid::new(4.0, 14.0, 0.02, 32).unwrap();
        for j in [0, 1, 3, 5] {
            let b = spec.betas[j];
            for rate in [b.beta_plus, b.beta_minus] {
                let w = ExteriorField::separated(grid, rate, |s| (rate * s).exp(), &spec.phis[j]).unwrap();
                let r = apply_cal_l(&w, &spec).unwrap();
                // truncation of the one-sided edge stencils, ~ ds^4 rate^6
                let bound = 0.02f64.powi(4) * rate.abs().powi(6).max(1.0);
                assert!(r.weighted_sup(rate) < bound, "mode {j} rate {rate}: {}", r.weighted_sup(rate));
            }
        }
    }

    #[test]
    fn off_resonance_factorizes() {
        let p = ShrinkerProfile::round(2, 0.1f64, 32).unwrap();
        let spec = eig_l_full(&p).unwrap();
        let grid = ExteriorGrid::new(4.0, 14.0, 0.02, 32).unwrap();
        let g = 0.2;
        let j = 3;
        let b = spec.betas[j];
        let w = ExteriorField::separated(grid, g, |s| (g * s).exp(), &spec.phis[j]).unwrap();
        let r = apply_cal_l(&w, &spec).unwrap();
        let f = (g - b.beta_plus) * (g - b.beta_minus);
        let d = r.sub(&w.scale(f)).unwrap();
        assert!(d.weighted_sup(g) < 1e-9);
        let z = ExteriorField::zeros(grid, g).unwrap();
        assert_eq!(apply_cal_l(&z, &spec).unwrap().norm(), 0.0);
    }
}
