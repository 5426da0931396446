//! Signed-conjugation involutions `a_k -> s_k conj(a_k)` with `s_k = +-1`.
//!
//! When such a map preserves `E` and fixes both ends of a connecting-orbit
//! problem, orbits outside its fixed subspace come in swapped pairs, so the
//! count mod 2 equals the count of orbits inside the fixed subspace. The
//! fixed subspace is a coordinate subspace in real coordinates: `Re a_k`
//! where `s_k = 1`, `Im a_k` where `s_k = -1`, and `lambda`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::functional::{differential_real, energy_unchecked};
use crate::hamiltonian::Hamiltonian;
use crate::spectral::{PointZ, SpectrumSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct Involution {
    pub name: String,
    pub signs: Vec<f64>,
}

/// The four patterns `s_k = eps * rho^k` with `eps, rho` in `{1, -1}`.
pub fn candidate_involutions(n_modes: usize) -> Vec<Involution> {
    let mut out = Vec::new();
    for (name, eps, rho) in [("conj", 1.0, 1.0), ("neg_conj", -1.0, 1.0), ("alt_conj", 1.0, -1.0), ("neg_alt_conj", -1.0, -1.0)]
    {
        let signs = (0..n_modes).map(|k| eps * if k % 2 == 0 { 1.0 } else { rho }).collect();
        out.push(Involution { name: name.into(), signs });
    }
    out
}

impl Involution {
    /// Action on real coordinates (also the action on covectors, since the
    /// map is diagonal with entries +-1).
    pub fn apply_real(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for (k, s) in self.signs.iter().enumerate() {
            y[2 * k] *= s;
            y[2 * k + 1] *= -s;
        }
        y
    }

    pub fn apply(&self, z: &PointZ) -> PointZ {
        PointZ::from_real(&self.apply_real(z.to_real().as_slice()))
    }

    /// Real coordinates of the fixed subspace, ascending.
    pub fn fixed_coords(&self) -> Vec<usize> {
        let mut out: Vec<usize> =
            self.signs.iter().enumerate().map(|(k, &s)| if s > 0.0 { 2 * k } else { 2 * k + 1 }).collect();
        out.push(2 * self.signs.len());
        out
    }

    /// Real coordinates moved by the involution (held at zero in the fixed subspace).
    pub fn moved_coords(&self) -> Vec<usize> {
        self.signs.iter().enumerate().map(|(k, &s)| if s > 0.0 { 2 * k + 1 } else { 2 * k }).collect()
    }

    pub fn fixes(&self, model: &SpectrumSpec, z: &PointZ, tol: f64) -> bool {
        model.g_distance(&self.apply(z), z) < tol
    }

    /// Checks `E(sigma z) = E(z)` and `dE(sigma z) = sigma dE(z)` at random points.
    pub fn is_symmetry_of(&self, model: &SpectrumSpec, ham: &Hamiltonian, samples: usize, seed: u64) -> bool {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = model.real_dim();
        for _ in 0..samples {
            let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let y = self.apply_real(&x);
            let zx = PointZ::from_real(&x);
            let zy = PointZ::from_real(&y);
            let ex = energy_unchecked(model, ham, &zx.u.0, zx.lambda);
            let ey = energy_unchecked(model, ham, &zy.u.0, zy.lambda);
            if (ex - ey).abs() > 1e-10 * (1.0 + ex.abs()) {
                return false;
            }
            let mut dx = vec![0.0; n];
            let mut dy = vec![0.0; n];
            differential_real(model, ham, &x, &mut dx);
            differential_real(model, ham, &y, &mut dy);
            let sdx = self.apply_real(&dx);
            let scale = 1.0 + dx.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if sdx.iter().zip(&dy).any(|(a, b)| (a - b).abs() > 1e-9 * scale) {
                return false;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::HamiltonianSpec;

    #[test]
    fn fixed_and_moved_coordinates_partition() {
        for inv in candidate_involutions(4) {
            let mut all = inv.fixed_coords();
            all.extend(inv.moved_coords());
            all.sort();
            assert_eq!(all, (0..9).collect::<Vec<_>>());
            let x: Vec<f64> = (0..9).map(|k| k as f64 + 1.0).collect();
            assert_eq!(inv.apply_real(&inv.apply_real(&x)), x);
        }
    }

    #[test]
    fn symmetries_of_the_breaks() {
        let m = SpectrumSpec::circle(2, 32).unwrap();
        let lin = HamiltonianSpec::linear_break(1e-1, HamiltonianSpec::Quadratic).bind(&m).unwrap();
        let even = HamiltonianSpec::even_break(1e-1, None, HamiltonianSpec::Quadratic).bind(&m).unwrap();
        let found: Vec<bool> = candidate_involutions(4).iter().map(|i| i.is_symmetry_of(&m, &lin, 4, 1)).collect();
        assert_eq!(found, vec![true, false, false, false]);
        assert!(candidate_involutions(4).iter().all(|i| i.is_symmetry_of(&m, &even, 4, 1)));
    }
}
