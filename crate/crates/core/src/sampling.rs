//! Seeded random states, unitaries and channels.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::channels::{DensityMatrix, FnChannel, KrausChannel};
use crate::linalg::{self, c64, ComplexMatrix, C64};

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    c64(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Matrix of i.i.d. standard complex Gaussians.
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

/// Haar-random unit vector.
pub fn haar_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<C64> {
    let v = DVector::from_fn(dim, |_, _| gaussian(rng));
    let n = v.norm();
    v.unscale(n)
}

/// Haar-random pure state on `dim_in ⊗ dim_a`.
pub fn haar_probe<R: Rng + ?Sized>(dim_in: usize, dim_a: usize, rng: &mut R) -> DensityMatrix {
    DensityMatrix::from_pure(&haar_vector(dim_in * dim_a, rng)).expect("nonzero vector")
}

/// Haar-random unitary (QR of a Ginibre matrix with phase correction).
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> ComplexMatrix {
    isometry(dim, dim, rng)
}

/// Random `rows × cols` isometry (`V†V = I`).
///
/// Panics unless `rows ≥ cols`.
pub fn isometry<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    assert!(rows >= cols, "no {rows}×{cols} isometry exists");
    let qr = ginibre(rows, cols, rng).qr();
    let (mut q, r) = qr.unpack();
    for k in 0..cols {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c64(1.0, 0.0) };
        let mut col = q.column_mut(k);
        col *= phase;
    }
    q
}

/// Random channel from a Haar isometry `dim_in → rank·dim_out`.
///
/// Panics unless `rank·dim_out ≥ dim_in`.
pub fn random_channel<R: Rng + ?Sized>(dim_in: usize, dim_out: usize, rank: usize, rng: &mut R) -> KrausChannel {
    let v = isometry(rank * dim_out, dim_in, rng);
    let kraus = (0..rank).map(|k| v.rows(k * dim_out, dim_out).into_owned()).collect();
    KrausChannel::new(kraus).expect("isometry blocks are complete")
}

/// Random Hermitian matrix (GUE, unit variance off the diagonal).
pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> ComplexMatrix {
    let g = ginibre(dim, dim, rng);
    (&g + g.adjoint()).unscale(2.0)
}

/// Smooth random family `K_j(x) = B_j exp(−iΣ x_k H_k) V` with a Haar
/// isometry `V: dim_in → rank·dim_out` and GUE generators `H_k`; `B_j`
/// selects the `j`-th block of rows.
pub fn random_channel_family<R: Rng + ?Sized>(
    names: Vec<String>,
    dim_in: usize,
    dim_out: usize,
    rank: usize,
    rng: &mut R,
) -> FnChannel {
    let big = rank * dim_out;
    let v = isometry(big, dim_in, rng);
    let gens: Vec<ComplexMatrix> = (0..names.len()).map(|_| random_hermitian(big, rng)).collect();
    FnChannel::new(names, dim_in, dim_out, rank, move |x| {
        let h = gens
            .iter()
            .zip(x)
            .fold(ComplexMatrix::zeros(big, big), |acc, (g, &xk)| acc + g.scale(xk));
        let w = linalg::herm_exp(&h, 1.0)? * &v;
        Ok((0..rank).map(|k| w.rows(k * dim_out, dim_out).into_owned()).collect())
    })
}

/// Full-rank random state `GG†/Tr(GG†)`.
pub fn random_mixed_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DensityMatrix {
    let g = ginibre(dim, dim, rng);
    let m = &g * g.adjoint();
    let t = m.trace().re;
    DensityMatrix::new(m.unscale(t)).expect("Wishart matrix is a state")
}
