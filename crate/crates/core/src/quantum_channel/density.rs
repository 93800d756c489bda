use std::fmt::Write as _;

use nalgebra::{Matrix2, Matrix4, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Mat2 = Matrix2<Complex64>;
pub type Mat4 = Matrix4<Complex64>;

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
pub const EIGEN_TOL: f64 = -1e-10;
/// Largest imaginary residue tolerated in an observable's expectation value.
pub const IMAG_TOL: f64 = 1e-9;

const fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity2() -> Mat2 {
    Mat2::identity()
}

pub fn sigma_x() -> Mat2 {
    Mat2::new(c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0))
}

pub fn sigma_y() -> Mat2 {
    Mat2::new(c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0))
}

pub fn sigma_z() -> Mat2 {
    Mat2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0))
}

pub fn kron(a: &Mat2, b: &Mat2) -> Mat4 {
    Mat4::from_fn(|r, col| a[(r / 2, col / 2)] * b[(r % 2, col % 2)])
}

/// Measurement basis for a polarization qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    /// H/V, the computational basis.
    Rectilinear,
    /// D/A, the σx eigenbasis.
    Diagonal,
}

/// Two-qubit polarization state, basis order |00⟩, |01⟩, |10⟩, |11⟩
/// (first index Alice, second Bob; 0 = H, 1 = V).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix4(Mat4);

impl DensityMatrix4 {
    /// Validates Hermiticity, unit trace and positive semidefiniteness.
    pub fn new(m: Mat4) -> Result<Self> {
        let herm = (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (residue {herm:e})")));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace is {tr}, expected 1")));
        }
        let min_eig = SymmetricEigen::new(m).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_eig < EIGEN_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_eig:e}")));
        }
        Ok(Self(m))
    }

    /// |Φ+⟩⟨Φ+| with |Φ+⟩ = (|HH⟩ + |VV⟩)/√2.
    pub fn bell_phi_plus() -> Self {
        let mut m = Mat4::zeros();
        for (r, col) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
            m[(r, col)] = c(0.5, 0.0);
        }
        Self(m)
    }

    pub fn maximally_mixed() -> Self {
        Self(Mat4::identity() * c(0.25, 0.0))
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.0[(row, col)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.0).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn hermiticity_residue(&self) -> f64 {
        (self.0 - self.0.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `Tr(ρ (a ⊗ b))`, rejecting imaginary residues above [`IMAG_TOL`].
    pub fn expectation(&self, a: &Mat2, b: &Mat2) -> Result<f64> {
        let v = (self.0 * kron(a, b)).trace();
        if v.im.abs() > IMAG_TOL {
            return Err(Error::InvalidState(format!(
                "expectation has imaginary part {:e}",
                v.im
            )));
        }
        Ok(v.re)
    }

    /// ⟨σx ⊗ σx⟩
    pub fn correlation_xx(&self) -> Result<f64> {
        self.expectation(&sigma_x(), &sigma_x())
    }

    /// ⟨σz ⊗ σz⟩
    pub fn correlation_zz(&self) -> Result<f64> {
        self.expectation(&sigma_z(), &sigma_z())
    }

    /// Born probabilities of the joint outcomes `(a, b)` at index `2a + b`
    /// when both photons are measured in `basis`; outcome 0 is H (or D).
    pub fn outcome_probabilities(&self, basis: Basis) -> [f64; 4] {
        let rotated = match basis {
            Basis::Rectilinear => self.0,
            Basis::Diagonal => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                let h = Mat2::new(c(s, 0.0), c(s, 0.0), c(s, 0.0), c(-s, 0.0));
                let u = kron(&h, &h);
                u * self.0 * u.adjoint()
            }
        };
        std::array::from_fn(|i| rotated[(i, i)].re.max(0.0))
    }

    /// Plain-text form: 16 lines of `re im`, row-major.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in 0..4 {
            for col in 0..4 {
                let z = self.0[(r, col)];
                writeln!(out, "{:e} {:e}", z.re, z.im).expect("writing to String");
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut values = Vec::with_capacity(16);
        for (lineno, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let mut parts = line.split_whitespace();
            let mut next = || -> Result<f64> {
                parts
                    .next()
                    .ok_or_else(|| Error::InvalidState(format!("line {}: expected `re im`", lineno + 1)))?
                    .parse()
                    .map_err(|e| Error::InvalidState(format!("line {}: {e}", lineno + 1)))
            };
            let (re, im) = (next()?, next()?);
            values.push(c(re, im));
        }
        if values.len() != 16 {
            return Err(Error::InvalidState(format!("expected 16 entries, found {}", values.len())));
        }
        Self::new(Mat4::from_row_slice(&values))
    }

    /// Wraps a matrix produced by a trace-preserving map from a valid state.
    pub(crate) fn from_channel_output(m: Mat4) -> Result<Self> {
        Self::new(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bell_state_observables() {
        let phi = DensityMatrix4::bell_phi_plus();
        assert_eq!(phi.trace(), 1.0);
        assert_eq!(phi.correlation_xx().unwrap(), 1.0);
        assert_eq!(phi.correlation_zz().unwrap(), 1.0);
        assert!(DensityMatrix4::new(*phi.matrix()).is_ok());
    }

    #[test]
    fn maximally_mixed_is_uncorrelated() {
        let m = DensityMatrix4::maximally_mixed();
        assert_eq!(m.correlation_xx().unwrap(), 0.0);
        assert_eq!(m.correlation_zz().unwrap(), 0.0);
        for basis in [Basis::Rectilinear, Basis::Diagonal] {
            for p in m.outcome_probabilities(basis) {
                assert!((p - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn bell_state_outcomes_agree_in_both_bases() {
        let phi = DensityMatrix4::bell_phi_plus();
        for basis in [Basis::Rectilinear, Basis::Diagonal] {
            let p = phi.outcome_probabilities(basis);
            assert!((p[0] - 0.5).abs() < 1e-15 && (p[3] - 0.5).abs() < 1e-15);
            assert!(p[1] < 1e-15 && p[2] < 1e-15);
        }
    }

    #[test]
    fn rejects_invalid_matrices() {
        let mut m = *DensityMatrix4::bell_phi_plus().matrix();
        m[(0, 0)] = c(0.6, 0.0);
        assert!(matches!(DensityMatrix4::new(m), Err(Error::InvalidState(_))));

        let mut m = *DensityMatrix4::bell_phi_plus().matrix();
        m[(0, 3)] = c(0.5, 0.1);
        assert!(DensityMatrix4::new(m).is_err());

        // diag(1.5, -0.5, 0, 0) has unit trace but is not positive
        let mut m = Mat4::zeros();
        m[(0, 0)] = c(1.5, 0.0);
        m[(1, 1)] = c(-0.5, 0.0);
        assert!(DensityMatrix4::new(m).is_err());
    }

    #[test]
    fn pauli_algebra() {
        let i = c(0.0, 1.0);
        assert_eq!(sigma_x() * sigma_y(), sigma_z() * i);
        for s in [sigma_x(), sigma_y(), sigma_z()] {
            assert_eq!(s * s, identity2());
        }
    }

    #[test]
    fn text_round_trip_bell() {
        let phi = DensityMatrix4::bell_phi_plus();
        let text = phi.to_text();
        assert_eq!(text.lines().count(), 16);
        assert_eq!(text.lines().next().unwrap(), "5e-1 0e0");
        assert_eq!(DensityMatrix4::from_text(&text).unwrap(), phi);
        assert!(DensityMatrix4::from_text("1 0\n").is_err());
    }
}
