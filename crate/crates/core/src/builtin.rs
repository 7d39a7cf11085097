//! Synthetic test systems that need no external data.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::system::FnSystem;

/// Damping coefficient of the builtin pendulum.
pub const PENDULUM_DAMPING: f64 = 0.1;

/// `F(x) = x` on Rⁿ.
pub fn linear(n: usize) -> FnSystem {
    FnSystem::new("linear", n, |x| x.clone()).with_jacobian(move |x| DMatrix::identity(x.len(), x.len()))
}

/// `F(x) = x² − 4`, roots at ±2.
pub fn quadratic() -> FnSystem {
    FnSystem::new("quadratic", 1, |x| DVector::from_element(1, x[0] * x[0] - 4.0))
        .with_jacobian(|x| DMatrix::from_element(1, 1, 2.0 * x[0]))
}

/// Equilibrium equations of the damped pendulum `ẋ₁ = x₂, ẋ₂ = −sin x₁ − d x₂`.
/// Roots at `(kπ, 0)`; odd `k` are the saddles.
pub fn pendulum() -> FnSystem {
    let d = PENDULUM_DAMPING;
    FnSystem::new("pendulum", 2, move |x| DVector::from_vec(vec![x[1], -x[0].sin() - d * x[1]]))
        .with_jacobian(move |x| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -x[0].cos(), -d]))
}

/// `F(x, y) = (x, 1)`: every point on `x = 0` is a stationary point of the
/// merit `½‖F‖²` that is not a root.
pub fn type2() -> FnSystem {
    FnSystem::new("type2", 2, |x| DVector::from_vec(vec![x[0], 1.0]))
        .with_jacobian(|_| DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]))
}

/// `F(x) = x²`: a root with a singular Jacobian.
pub fn type3() -> FnSystem {
    FnSystem::new("type3", 1, |x| DVector::from_element(1, x[0] * x[0]))
        .with_jacobian(|x| DMatrix::from_element(1, 1, 2.0 * x[0]))
}

/// Seeded random quadratic system
/// `F_i(x) = Σ_j A_ij x_j + c_i x_i² + e_i x_i x_{i+1} − b_i`
/// with `A` diagonally dominated so that `x = 0` is far from singular.
pub fn random_polynomial(seed: u64, n: usize) -> FnSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = rng.gen_range(-0.5..0.5);
        }
        a[(i, i)] += 2.0;
    }
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let e: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (a2, c2, e2) = (a.clone(), c.clone(), e.clone());
    FnSystem::new(format!("randpoly:{seed}:{n}"), n, move |x| {
        let lin = &a * x;
        DVector::from_fn(n, |i, _| {
            let nb = x[(i + 1) % n];
            lin[i] + c[i] * x[i] * x[i] + e[i] * x[i] * nb - b[i]
        })
    })
    .with_jacobian(move |x| {
        let mut j = a2.clone();
        for i in 0..n {
            let k = (i + 1) % n;
            j[(i, i)] += 2.0 * c2[i] * x[i] + e2[i] * x[k];
            j[(i, k)] += e2[i] * x[i];
        }
        j
    })
}

/// Names accepted by [`by_name`], excluding the parameterised `randpoly:SEED:N`.
pub const NAMES: &[&str] = &["linear", "quadratic", "pendulum", "type2", "type3"];

/// Resolves `linear`, `quadratic`, `pendulum`, `type2`, `type3` or
/// `randpoly:SEED:N`.
pub fn by_name(name: &str) -> Result<FnSystem> {
    match name {
        "linear" => Ok(linear(1)),
        "quadratic" => Ok(quadratic()),
        "pendulum" => Ok(pendulum()),
        "type2" => Ok(type2()),
        "type3" => Ok(type3()),
        other => {
            let parts: Vec<&str> = other.split(':').collect();
            if let ["randpoly", seed, n] = parts.as_slice() {
                let seed = seed.parse().map_err(|_| Error::UnknownSystem(other.into()))?;
                let n: usize = n.parse().map_err(|_| Error::UnknownSystem(other.into()))?;
                if n == 0 {
                    return Err(Error::UnknownSystem(other.into()));
                }
                return Ok(random_polynomial(seed, n));
            }
            Err(Error::UnknownSystem(other.into()))
        }
    }
}
