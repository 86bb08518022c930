//! Seeded random test points.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::expr::StructureClass;
use crate::matrix::ComplexMatrix;
use crate::C64;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard complex normal entries (`E|z|^2 = 1`).
pub fn random_complex(n: usize, seed: u64) -> ComplexMatrix {
    let mut r = rng(seed);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix::from_fn(n, |_, _| {
        let re: f64 = StandardNormal.sample(&mut r);
        let im: f64 = StandardNormal.sample(&mut r);
        C64::new(s * re, s * im)
    })
}

/// Random matrix lying exactly in `class`.
pub fn random_structured(n: usize, class: StructureClass, seed: u64) -> ComplexMatrix {
    random_complex(n, seed).project(class)
}

/// Random density operator `G G^dag / tr(G G^dag)`, hermitized exactly.
pub fn random_density(n: usize, seed: u64) -> ComplexMatrix {
    let g = random_complex(n, seed);
    let p = g.matmul(&g.adjoint());
    let tr = p.trace().re;
    p.scale_re(1.0 / tr).hermitian_part()
}

/// Random complex vector with standard complex normal entries.
pub fn random_vector(n: usize, seed: u64) -> Vec<C64> {
    let m = random_complex(n, seed);
    (0..n).map(|j| m[(0, j)]).collect()
}
