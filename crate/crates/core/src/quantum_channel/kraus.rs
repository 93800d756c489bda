use num_complex::Complex64;

use super::density::{identity2, kron, sigma_x, sigma_y, sigma_z, DensityMatrix4, Mat2, Mat4};
use crate::error::{Error, Result};

pub const COMPLETENESS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KrausLabel {
    Damping,
    Depolarizing,
    Composed,
}

/// Single-arm Kraus operators of a qubit channel.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausSet {
    pub operators: Vec<Mat2>,
    pub label: KrausLabel,
}

impl KrausSet {
    /// Largest entry of `|Σ K†K − I|`.
    pub fn completeness_deviation(&self) -> f64 {
        let sum = self.operators.iter().fold(Mat2::zeros(), |acc, k| acc + k.adjoint() * k);
        (sum - identity2()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn check_complete(&self) -> Result<()> {
        let deviation = self.completeness_deviation();
        if deviation > COMPLETENESS_TOL {
            Err(Error::IncompleteKraus { deviation })
        } else {
            Ok(())
        }
    }

    /// Applies the channel to a single-qubit density matrix.
    pub fn apply_single(&self, rho: &Mat2) -> Mat2 {
        self.operators.iter().fold(Mat2::zeros(), |acc, k| acc + k * rho * k.adjoint())
    }

    /// Channel `other ∘ self` as one set of products.
    pub fn then(&self, other: &KrausSet) -> KrausSet {
        let operators = other
            .operators
            .iter()
            .flat_map(|b| self.operators.iter().map(move |a| b * a))
            .collect();
        KrausSet { operators, label: KrausLabel::Composed }
    }
}

fn real(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

fn check_probability(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must lie in [0, 1], got {v}")))
    }
}

/// Generalized amplitude damping with loss `p` and thermal parameter `xi`.
///
/// `K0 = √(1-ξ)[[1,0],[0,√(1-p)]]`, `K1 = √(1-ξ)[[0,√p],[0,0]]`,
/// `K2 = √ξ[[0,0],[√p,0]]`, `K3 = √ξ[[√(1-p),0],[0,1]]`.
/// With `xi == 0` only `K0` and `K1` are returned.
pub fn damping_kraus_single(p: f64, xi: f64) -> Result<KrausSet> {
    check_probability("damping probability", p)?;
    if !(0.0..=0.5).contains(&xi) {
        return Err(Error::domain(format!("thermal parameter must lie in [0, 1/2], got {xi}")));
    }
    let keep = (1.0 - p).sqrt();
    let lose = p.sqrt();
    let cold = (1.0 - xi).sqrt();
    let zero = real(0.0);
    let mut operators = vec![
        Mat2::new(real(1.0), zero, zero, real(keep)) * real(cold),
        Mat2::new(zero, real(lose), zero, zero) * real(cold),
    ];
    if xi > 0.0 {
        let hot = xi.sqrt();
        operators.push(Mat2::new(zero, zero, real(lose), zero) * real(hot));
        operators.push(Mat2::new(real(keep), zero, zero, real(1.0)) * real(hot));
    }
    Ok(KrausSet { operators, label: KrausLabel::Damping })
}

/// `{√(1-q) I, √(q/3) σx, √(q/3) σy, √(q/3) σz}`.
pub fn depolarizing_kraus_single(q: f64) -> Result<KrausSet> {
    check_probability("depolarization probability", q)?;
    let a = real((1.0 - q).sqrt());
    let b = real((q / 3.0).sqrt());
    Ok(KrausSet {
        operators: vec![identity2() * a, sigma_x() * b, sigma_y() * b, sigma_z() * b],
        label: KrausLabel::Depolarizing,
    })
}

/// `Σ_ij (K_i ⊗ L_j) ρ (K_i ⊗ L_j)†` for independent channels on each arm.
pub fn apply_bipartite(
    rho: &DensityMatrix4,
    alice: &KrausSet,
    bob: &KrausSet,
) -> Result<DensityMatrix4> {
    alice.check_complete()?;
    bob.check_complete()?;
    let m = rho.matrix();
    let mut out = Mat4::zeros();
    for ka in &alice.operators {
        for kb in &bob.operators {
            let k = kron(ka, kb);
            out += k * m * k.adjoint();
        }
    }
    DensityMatrix4::from_channel_output(out)
}
