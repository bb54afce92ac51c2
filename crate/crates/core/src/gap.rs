//! Energy-norm distances between an exact eigenspace X = M(λ) and a discrete
//! cluster span Y = M_h(λ).
//!
//! With G = a(u_i, u_j), P = a(u_i, v_l), S = a(v_l, v_m) and the b-Grams
//! B_X, B_Y, the squared distance of a b-unit element Σα_i u_i from Y is
//! αᵀ(G − P S⁻¹ Pᵀ)α, so the directed distance d(X, Y) is the square root of the
//! largest eigenvalue of the pencil (G − P S⁻¹ Pᵀ, B_X). The reverse direction
//! swaps the roles.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::eigsolve::EigenCluster;
use crate::fem::{Coefficients, FeSpace};
use crate::quadrature::triangle_rule;
use crate::{Error, Result, ScalarFn, VectorFn};

/// Closed-form function with its gradient.
#[derive(Clone)]
pub struct ExactFunction {
    pub value: ScalarFn,
    pub gradient: VectorFn,
}

impl std::fmt::Debug for ExactFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ExactFunction(..)")
    }
}

#[derive(Clone, Debug)]
pub struct ExactEigenspace {
    pub value: f64,
    /// b-orthonormal basis
    pub basis: Vec<ExactFunction>,
}

impl ExactEigenspace {
    pub fn q(&self) -> usize {
        self.basis.len()
    }
}

/// Subdivision levels of the element rule used for the Gram matrices (each
/// level splits every triangle into four).
pub const DEFAULT_SUBDIVISION: u32 = 1;

/// The Gram blocks of one exact/discrete pair.
#[derive(Clone, Debug)]
pub struct GapGrams {
    pub g: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub bx: DMatrix<f64>,
    pub by: DMatrix<f64>,
}

impl GapGrams {
    /// All blocks by one element quadrature (degree 2k + 2, raised by the
    /// reaction degree, on `levels`-fold subdivided elements), so that the
    /// block matrix [[G, P], [Pᵀ, S]] is a Gram matrix of the same discrete
    /// inner product and its Schur complements stay positive semidefinite.
    pub fn compute(exact: &ExactEigenspace, discrete: &EigenCluster, space: &FeSpace, coeffs: &Coefficients, levels: u32) -> Result<Self> {
        let (q, r) = (exact.q(), discrete.q());
        if q == 0 || r == 0 {
            return Err(Error::InvalidArgument("empty eigenspace".into()));
        }
        for v in &discrete.vectors {
            space.check_len(v)?;
        }
        let n = q + r;
        let rule = triangle_rule(2 * space.degree() + 2 + 2 * coeffs.reaction.degree()).subdivided(levels);
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut b = DMatrix::<f64>::zeros(n, n);
        let mut vals = vec![0.0; n];
        let mut grads = vec![[0.0; 2]; n];
        let mut flux = vec![[0.0; 2]; n];
        let mesh = space.mesh();
        for t in 0..mesh.n_elements() {
            let geo = space.geometry(t);
            let at = coeffs.diffusion.tensor(mesh.elements()[t].region_tag);
            for (bary, w) in rule.barycentric() {
                let p = geo.point(bary);
                for (i, f) in exact.basis.iter().enumerate() {
                    vals[i] = (f.value)(p);
                    grads[i] = (f.gradient)(p);
                    if !vals[i].is_finite() || !grads[i].iter().all(|g| g.is_finite()) {
                        return Err(Error::NonFiniteCoefficient { x: p[0], y: p[1] });
                    }
                }
                for (l, v) in discrete.vectors.iter().enumerate() {
                    let (val, g) = space.eval_local(v, t, &geo, bary);
                    vals[q + l] = val;
                    grads[q + l] = g;
                }
                let c = coeffs.reaction_at(p)?;
                for i in 0..n {
                    let g = grads[i];
                    flux[i] = [at[0][0] * g[0] + at[0][1] * g[1], at[1][0] * g[0] + at[1][1] * g[1]];
                }
                let wq = w * geo.det;
                for i in 0..n {
                    for j in i..n {
                        a[(i, j)] += wq * (flux[i][0] * grads[j][0] + flux[i][1] * grads[j][1] + c * vals[i] * vals[j]);
                        b[(i, j)] += wq * vals[i] * vals[j];
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                a[(i, j)] = a[(j, i)];
                b[(i, j)] = b[(j, i)];
            }
        }
        Ok(Self {
            g: a.view((0, 0), (q, q)).into_owned(),
            p: a.view((0, q), (q, r)).into_owned(),
            s: a.view((q, q), (r, r)).into_owned(),
            bx: b.view((0, 0), (q, q)).into_owned(),
            by: b.view((q, q), (r, r)).into_owned(),
        })
    }

    /// d(X, Y) with X the exact side.
    pub fn forward(&self) -> Result<f64> {
        directed_distance_from_grams(&self.g, &self.p, &self.s, &self.bx)
    }

    /// d(Y, X).
    pub fn reverse(&self) -> Result<f64> {
        directed_distance_from_grams(&self.s, &self.p.transpose(), &self.g, &self.by)
    }

    pub fn gap(&self) -> Result<f64> {
        Ok(self.forward()?.max(self.reverse()?))
    }

    /// Monte-Carlo lower bound of `forward`.
    pub fn brute_force(&self, n_samples: usize, seed: u64) -> Result<f64> {
        brute_force_from_grams(&self.g, &self.p, &self.s, &self.bx, n_samples, seed)
    }
}

fn cholesky(m: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    m.clone().cholesky().ok_or(Error::SingularCluster)
}

/// sup over the B_X-unit sphere of min over β of the energy distance, given
/// the Gram blocks of the two spaces.
pub fn directed_distance_from_grams(g: &DMatrix<f64>, p: &DMatrix<f64>, s: &DMatrix<f64>, bx: &DMatrix<f64>) -> Result<f64> {
    let q = g.nrows();
    if g.ncols() != q || bx.shape() != (q, q) || p.nrows() != q || s.shape() != (p.ncols(), p.ncols()) {
        return Err(Error::DimensionMismatch("inconsistent Gram block shapes".into()));
    }
    let s_chol = cholesky(s)?;
    let schur = g - p * s_chol.solve(&p.transpose());
    let lx = cholesky(bx)?.l();
    let linv = lx.try_inverse().ok_or(Error::SingularCluster)?;
    let c = &linv * schur * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let top = SymmetricEigen::new(c).eigenvalues.max();
    Ok(top.max(0.0).sqrt())
}

/// Samples α uniformly on the B_X-unit sphere and returns the largest
/// distance sqrt(αᵀGα − 2αᵀPβ + βᵀSβ) at the optimal β.
pub fn brute_force_from_grams(
    g: &DMatrix<f64>,
    p: &DMatrix<f64>,
    s: &DMatrix<f64>,
    bx: &DMatrix<f64>,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    let q = g.nrows();
    let s_chol = cholesky(s)?;
    let lt = cholesky(bx)?.l().transpose();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    for _ in 0..n_samples.max(1) {
        let z: DVector<f64> = DVector::from_fn(q, |_, _| StandardNormal.sample(&mut rng));
        let z = &z / z.norm();
        let alpha: DVector<f64> = lt.clone().solve_upper_triangular(&z).ok_or(Error::SingularCluster)?;
        let beta: DVector<f64> = s_chol.solve(&(p.transpose() * &alpha));
        let d2 = alpha.dot(&(g * &alpha)) - 2.0 * alpha.dot(&(p * &beta)) + beta.dot(&(s * &beta));
        best = best.max(d2);
    }
    Ok(best.max(0.0).sqrt())
}

/// d(M(λ), M_h(λ)).
pub fn directed_distance(exact: &ExactEigenspace, discrete: &EigenCluster, space: &FeSpace, coeffs: &Coefficients) -> Result<f64> {
    GapGrams::compute(exact, discrete, space, coeffs, DEFAULT_SUBDIVISION)?.forward()
}

/// d(M_h(λ), M(λ)).
pub fn reverse_distance(exact: &ExactEigenspace, discrete: &EigenCluster, space: &FeSpace, coeffs: &Coefficients) -> Result<f64> {
    GapGrams::compute(exact, discrete, space, coeffs, DEFAULT_SUBDIVISION)?.reverse()
}

/// δ = max{d(X, Y), d(Y, X)}.
pub fn gap_energy(exact: &ExactEigenspace, discrete: &EigenCluster, space: &FeSpace, coeffs: &Coefficients) -> Result<f64> {
    if exact.q() != discrete.q() {
        return Err(Error::DimensionMismatch(format!("exact dimension {} vs discrete {}", exact.q(), discrete.q())));
    }
    GapGrams::compute(exact, discrete, space, coeffs, DEFAULT_SUBDIVISION)?.gap()
}

pub fn brute_force_distance(
    exact: &ExactEigenspace,
    discrete: &EigenCluster,
    space: &FeSpace,
    coeffs: &Coefficients,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    GapGrams::compute(exact, discrete, space, coeffs, DEFAULT_SUBDIVISION)?.brute_force(n_samples, seed)
}

/// ‖u − u_h‖²_a for a closed-form u.
pub fn energy_error_squared(space: &FeSpace, coeffs: &Coefficients, uh: &[f64], exact: &ExactFunction) -> Result<f64> {
    space.check_len(uh)?;
    let rule = triangle_rule(2 * space.degree() + 2 + 2 * coeffs.reaction.degree()).subdivided(DEFAULT_SUBDIVISION);
    let mesh = space.mesh();
    let mut total = 0.0;
    for t in 0..mesh.n_elements() {
        let geo = space.geometry(t);
        let at = coeffs.diffusion.tensor(mesh.elements()[t].region_tag);
        for (bary, w) in rule.barycentric() {
            let p = geo.point(bary);
            let (v, g) = space.eval_local(uh, t, &geo, bary);
            let eg = (exact.gradient)(p);
            let d = [eg[0] - g[0], eg[1] - g[1]];
            let e = (exact.value)(p) - v;
            let ad = [at[0][0] * d[0] + at[0][1] * d[1], at[1][0] * d[0] + at[1][1] * d[1]];
            total += w * geo.det * (ad[0] * d[0] + ad[1] * d[1] + coeffs.reaction_at(p)? * e * e);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;
    use std::sync::Arc;

    use rand::Rng;

    use super::*;
    use crate::eigsolve::solve_smallest;
    use crate::fem::{assemble_mass, assemble_stiffness, interpolate};
    use crate::mesh::Mesh;

    fn square(rounds: usize) -> Mesh {
        Mesh::build_initial(
            &[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            &[[0, 1, 2], [0, 2, 3]],
            &[[0, 1], [1, 2], [2, 3], [3, 0]],
        )
        .unwrap()
        .refine_uniform(rounds)
        .unwrap()
    }

    fn sine_mode(m: f64, n: f64) -> ExactFunction {
        ExactFunction {
            value: Arc::new(move |p| 2.0 * (m * PI * p[0]).sin() * (n * PI * p[1]).sin()),
            gradient: Arc::new(move |p| {
                [
                    2.0 * m * PI * (m * PI * p[0]).cos() * (n * PI * p[1]).sin(),
                    2.0 * n * PI * (m * PI * p[0]).sin() * (n * PI * p[1]).cos(),
                ]
            }),
        }
    }

    fn doublet() -> ExactEigenspace {
        ExactEigenspace {
            value: 5.0 * PI * PI,
            basis: vec![sine_mode(1.0, 2.0), sine_mode(2.0, 1.0)],
        }
    }

    fn discrete_doublet(space: &FeSpace) -> EigenCluster {
        let coeffs = Coefficients::laplace();
        let k = assemble_stiffness(space, &coeffs).unwrap();
        let m = assemble_mass(space).unwrap();
        let pairs = solve_smallest(&k, &m, 3, 1e-10).unwrap();
        EigenCluster::from_pairs(space, &pairs, 1..3, 2)
    }

    #[test]
    fn planar_toy() {
        for phi in [0.0, 0.3, 1.0, PI / 2.0, 2.5] {
            let one = DMatrix::from_element(1, 1, 1.0);
            let p = DMatrix::from_element(1, 1, f64::cos(phi));
            let d = directed_distance_from_grams(&one, &p, &one, &one).unwrap();
            assert!((d - f64::sin(phi).abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn contained_space_has_zero_distance() {
        let mesh = square(1);
        let space = FeSpace::new(&mesh, 1).unwrap();
        let linear = |a: f64, b: f64| ExactFunction {
            value: Arc::new(move |p| a * p[0] + b * p[1]),
            gradient: Arc::new(move |_| [a, b]),
        };
        let exact = ExactEigenspace {
            value: 0.0,
            basis: vec![linear(1.0, 0.0), linear(0.0, 1.0)],
        };
        let discrete = EigenCluster {
            values: vec![0.0; 2],
            vectors: vec![interpolate(&space, |p| p[0] + p[1]), interpolate(&space, |p| p[0] - 2.0 * p[1])],
            cluster_index: 1,
            first: 0,
        };
        let grams = GapGrams::compute(&exact, &discrete, &space, &Coefficients::laplace(), 0).unwrap();
        assert!(grams.forward().unwrap() < 1e-10);
        assert!(grams.reverse().unwrap() < 1e-10);
    }

    fn random_grams(q: usize, rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let n = 6;
        let spd = |rng: &mut ChaCha8Rng| {
            let r = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            &r * r.transpose() + DMatrix::identity(n, n) * 0.5
        };
        let a = spd(rng);
        let b = spd(rng);
        let x = DMatrix::from_fn(n, q, |_, _| rng.random_range(-1.0..1.0));
        let y = &x + DMatrix::from_fn(n, q, |_, _| 0.3 * rng.random_range(-1.0..1.0));
        (x.transpose() * &a * &x, x.transpose() * &a * &y, y.transpose() * &a * &y, x.transpose() * &b * &x)
    }

    #[test]
    fn brute_force_agrees_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..10 {
            let (g, p, s, bx) = random_grams(2, &mut rng);
            let d = directed_distance_from_grams(&g, &p, &s, &bx).unwrap();
            let bf = brute_force_from_grams(&g, &p, &s, &bx, 100_000, trial).unwrap();
            assert!(bf <= d + 1e-12);
            assert!((d - bf) / d < 1e-3, "{d} vs {bf}");
        }
        let (g, p, s, bx) = random_grams(1, &mut rng);
        let d = directed_distance_from_grams(&g, &p, &s, &bx).unwrap();
        let bf = brute_force_from_grams(&g, &p, &s, &bx, 1000, 0).unwrap();
        assert!((d - bf).abs() < 1e-12 * d.max(1.0));
    }

    #[test]
    fn square_doublet_gap() {
        let coeffs = Coefficients::laplace();
        let coarse_mesh = square(3);
        let fine_mesh = square(5);
        let mut previous = f64::INFINITY;
        for mesh in [&coarse_mesh, &fine_mesh] {
            let space = FeSpace::new(mesh, 1).unwrap();
            let discrete = discrete_doublet(&space);
            let grams = GapGrams::compute(&doublet(), &discrete, &space, &coeffs, DEFAULT_SUBDIVISION).unwrap();
            let (d_xy, d_yx) = (grams.forward().unwrap(), grams.reverse().unwrap());
            assert!(d_xy > 0.0);
            if d_xy < 1.0 {
                assert!(d_yx <= d_xy / (1.0 - d_xy) + 1e-8);
            }
            // the exact basis is b-orthonormal
            assert!((&grams.bx - DMatrix::identity(2, 2)).abs().max() < 1e-3);
            let bf = grams.brute_force(100_000, 4).unwrap();
            assert!(bf <= d_xy + 1e-12 && (d_xy - bf) / d_xy < 1e-3);
            assert!(d_xy < previous);
            previous = d_xy;

            // the gap depends on the spans only
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let qm = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0)).qr().q();
            let rotated = discrete.recombine(&qm, &space, &coeffs).unwrap();
            let g2 = GapGrams::compute(&doublet(), &rotated, &space, &coeffs, DEFAULT_SUBDIVISION).unwrap();
            assert!((g2.gap().unwrap() - grams.gap().unwrap()).abs() < 1e-10);
            assert_eq!(gap_energy(&doublet(), &discrete, &space, &coeffs).unwrap(), grams.gap().unwrap());
        }
    }

    #[test]
    fn subdivision_is_converged() {
        let mesh = square(2);
        let space = FeSpace::new(&mesh, 2).unwrap();
        let discrete = discrete_doublet(&space);
        let coeffs = Coefficients::laplace();
        let a = GapGrams::compute(&doublet(), &discrete, &space, &coeffs, 1).unwrap().forward().unwrap();
        let b = GapGrams::compute(&doublet(), &discrete, &space, &coeffs, 2).unwrap().forward().unwrap();
        assert!((a - b).abs() < 0.01 * b, "{a} vs {b}");
    }

    #[test]
    fn singular_discrete_gram_is_rejected() {
        let mesh = square(1);
        let space = FeSpace::new(&mesh, 1).unwrap();
        let discrete = EigenCluster {
            values: vec![1.0],
            vectors: vec![vec![0.0; space.n_dofs()]],
            cluster_index: 1,
            first: 0,
        };
        let exact = ExactEigenspace {
            value: 2.0 * PI * PI,
            basis: vec![sine_mode(1.0, 1.0)],
        };
        assert!(matches!(
            directed_distance(&exact, &discrete, &space, &Coefficients::laplace()),
            Err(Error::SingularCluster)
        ));
    }

    #[test]
    fn energy_error_of_interpolant() {
        let mesh = square(1);
        let space = FeSpace::new(&mesh, 2).unwrap();
        let exact = ExactFunction {
            value: Arc::new(|p| p[0] * p[0]),
            gradient: Arc::new(|p| [2.0 * p[0], 0.0]),
        };
        let uh = interpolate(&space, |p| p[0] * p[0]);
        assert!(energy_error_squared(&space, &Coefficients::laplace(), &uh, &exact).unwrap() < 1e-24);
        let zero = vec![0.0; space.n_dofs()];
        // ∫ (2x)² over the unit square
        let e = energy_error_squared(&space, &Coefficients::laplace(), &zero, &exact).unwrap();
        assert!((e - 4.0 / 3.0).abs() < 1e-13);
    }
}
