use std::collections::BTreeSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::linalg::SparseCholesky;
use crate::mesh::Mesh;
use crate::quadrature::triangle_rule;
use crate::ScalarFn;

fn reference_triangle() -> Mesh {
    Mesh::build_initial(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], &[[0, 1, 2]], &[[0, 1], [1, 2], [2, 0]]).unwrap()
}

fn unit_square(rounds: usize) -> Mesh {
    let m = Mesh::build_initial(
        &[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        &[[0, 1, 2], [0, 2, 3]],
        &[[0, 1], [1, 2], [2, 3], [3, 0]],
    )
    .unwrap();
    m.refine_uniform(rounds).unwrap()
}

fn dense(k: &crate::linalg::SparseSym) -> Vec<Vec<f64>> {
    let d = k.to_dense();
    (0..d.nrows()).map(|i| (0..d.ncols()).map(|j| d[(i, j)]).collect()).collect()
}

#[test]
fn p1_reference_stiffness() {
    let mesh = reference_triangle();
    let space = FeSpace::new(&mesh, 1).unwrap();
    let k = dense(&assemble_stiffness_full(&space, &Coefficients::laplace()).unwrap());
    let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
    for i in 0..3 {
        for j in 0..3 {
            assert!((k[i][j] - expected[i][j]).abs() < 1e-14, "{k:?}");
        }
    }
}

#[test]
fn p1_reference_mass() {
    let mesh = reference_triangle();
    let space = FeSpace::new(&mesh, 1).unwrap();
    let m = dense(&assemble_mass_full(&space).unwrap());
    for i in 0..3 {
        for j in 0..3 {
            let e = 0.5 / 12.0 * if i == j { 2.0 } else { 1.0 };
            assert!((m[i][j] - e).abs() < 1e-15);
        }
    }
}

#[test]
fn stiffness_rows_sum_to_zero_without_reaction() {
    for degree in [1, 2] {
        let mesh = unit_square(2);
        let space = FeSpace::new(&mesh, degree).unwrap();
        let k = assemble_stiffness_full(&space, &Coefficients::laplace()).unwrap();
        let ones = vec![1.0; k.dim()];
        for r in k.mul_vec(&ones) {
            assert!(r.abs() < 1e-12);
        }
    }
}

#[test]
fn constrained_stiffness_is_positive_definite() {
    let mesh = unit_square(2);
    let coeffs = Coefficients::new(Diffusion::Isotropic(0.5), Reaction::Radial(vec![0.0, 0.5])).unwrap();
    for degree in [1, 2] {
        let space = FeSpace::new(&mesh, degree).unwrap();
        let k = assemble_stiffness(&space, &coeffs).unwrap();
        assert_eq!(k.dim(), space.n_free());
        assert!(k.is_structurally_symmetric());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x: Vec<f64> = (0..k.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert!(k.bilinear(&x, &x) > 0.0);
        }
        assert!(SparseCholesky::factor(&k).is_ok());
    }
}

#[test]
fn mass_sums_to_area() {
    for degree in [1, 2] {
        let mesh = unit_square(3);
        let space = FeSpace::new(&mesh, degree).unwrap();
        assert!((assemble_mass_full(&space).unwrap().sum_all() - 1.0).abs() < 1e-13);
    }
    let mesh = Mesh::build_initial(&[[0.0, 0.0], [3.0, 0.0], [0.5, 2.0]], &[[0, 1, 2]], &[[0, 1], [1, 2], [2, 0]]).unwrap();
    let fine = mesh.refine_uniform(1).unwrap();
    let s = FeSpace::new(&fine, 1).unwrap();
    assert!((assemble_mass_full(&s).unwrap().sum_all() - 3.0).abs() < 1e-13);
}

#[test]
fn dof_counts_and_dirichlet_set() {
    let mesh = unit_square(2);
    let p1 = FeSpace::new(&mesh, 1).unwrap();
    let p2 = FeSpace::new(&mesh, 2).unwrap();
    assert_eq!(p1.n_dofs(), mesh.n_vertices());
    assert_eq!(p2.n_dofs(), mesh.n_vertices() + mesh.n_edges());
    for space in [&p1, &p2] {
        for d in 0..space.n_dofs() {
            let [x, y] = space.dof_coords()[d];
            let on_boundary = x.abs() < 1e-14 || y.abs() < 1e-14 || (x - 1.0).abs() < 1e-14 || (y - 1.0).abs() < 1e-14;
            assert_eq!(space.is_dirichlet(d), on_boundary);
        }
    }
    assert!(FeSpace::new(&mesh, 3).is_err());
}

#[test]
fn interpolation_reproduces_polynomials() {
    let mesh = unit_square(2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let points: Vec<[f64; 2]> = (0..50).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
    for degree in [1, 2] {
        let space = FeSpace::new(&mesh, degree).unwrap();
        let u = interpolate(&space, |p| p[0]);
        for (p, v) in points.iter().zip(evaluate(&space, &u, &points).unwrap()) {
            assert!((v.unwrap().value - p[0]).abs() < 1e-13);
        }
        let u = interpolate(&space, |p| p[0] + 2.0 * p[1]);
        for v in evaluate(&space, &u, &points).unwrap() {
            let g = v.unwrap().gradient;
            assert!((g[0] - 1.0).abs() < 1e-12 && (g[1] - 2.0).abs() < 1e-12);
        }
        for (d, &p) in space.dof_coords().iter().enumerate() {
            let f = |q: [f64; 2]| q[0] * q[1] + q[1].sin();
            assert_eq!(interpolate(&space, f)[d], f(p));
        }
    }
    let p2 = FeSpace::new(&mesh, 2).unwrap();
    let u = interpolate(&p2, |p| p[0] * p[0]);
    for (p, v) in points.iter().zip(evaluate(&p2, &u, &points).unwrap()) {
        assert!((v.unwrap().value - p[0] * p[0]).abs() < 1e-13);
    }
    let p1 = FeSpace::new(&mesh, 1).unwrap();
    let u = interpolate(&p1, |p| p[0] * p[0]);
    let e = &mesh.edges()[0];
    let [a, b] = e.vertices.map(|v| mesh.vertices()[v].coords());
    let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
    let v = evaluate(&p1, &u, &[mid]).unwrap()[0].unwrap().value;
    if (a[0] - b[0]).abs() > 1e-12 {
        assert!((v - mid[0] * mid[0]).abs() > 1e-6);
    }
}

#[test]
fn points_outside_are_flagged() {
    let mesh = unit_square(1);
    let space = FeSpace::new(&mesh, 1).unwrap();
    let u = vec![0.0; space.n_dofs()];
    let r = evaluate(&space, &u, &[[0.5, 0.5], [1.5, 0.5]]).unwrap();
    assert!(r[0].is_some() && r[1].is_none());
    assert!(evaluate(&space, &[1.0], &[[0.5, 0.5]]).is_err());
}

#[test]
fn interpolate_dirichlet_zeroes_boundary() {
    let mesh = unit_square(2);
    let space = FeSpace::new(&mesh, 2).unwrap();
    let u = interpolate_dirichlet(&space, |_| 1.0);
    for d in 0..space.n_dofs() {
        assert_eq!(u[d], if space.is_dirichlet(d) { 0.0 } else { 1.0 });
    }
}

#[test]
fn norms_and_rayleigh_identity() {
    let mesh = unit_square(3);
    let coeffs = Coefficients::laplace();
    let space = FeSpace::new(&mesh, 2).unwrap();
    assert_eq!(energy_norm(&space, &coeffs, &vec![0.0; space.n_dofs()]).unwrap(), 0.0);
    assert_eq!(b_norm(&space, &vec![0.0; space.n_dofs()]).unwrap(), 0.0);

    let k = assemble_stiffness(&space, &coeffs).unwrap();
    let m = assemble_mass(&space).unwrap();
    let x = space.restrict(&interpolate_dirichlet(&space, |p| (std::f64::consts::PI * p[0]).sin() * p[1] * (1.0 - p[1])));
    let full = space.extend(&x);
    let a = energy_norm(&space, &coeffs, &full).unwrap();
    let b = b_norm(&space, &full).unwrap();
    assert!((a * a - k.bilinear(&x, &x)).abs() < 1e-12 * a * a);
    assert!((b * b - m.bilinear(&x, &x)).abs() < 1e-12 * b * b);

    // dense generalized eigenproblem as an independent route
    let kd = k.to_dense();
    let md = m.to_dense();
    let l = md.clone().cholesky().unwrap();
    let linv = l.l().try_inverse().unwrap();
    let c = &linv * &kd * linv.transpose();
    let eig = nalgebra::SymmetricEigen::new(c);
    let (imin, lam) = eig.eigenvalues.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let v = linv.transpose() * eig.eigenvectors.column(imin);
    let u = space.extend(v.as_slice());
    assert!((b_norm(&space, &u).unwrap() - 1.0).abs() < 1e-12);
    let e = energy_norm(&space, &coeffs, &u).unwrap();
    assert!((e * e - lam).abs() < 1e-10 * lam);
    assert!(lam > 2.0 * std::f64::consts::PI.powi(2));
}

#[test]
fn reaction_term_is_integrated_exactly() {
    // ∫_T x² y² on the reference triangle = 2!2!/6! = 1/180
    let mesh = reference_triangle();
    let space = FeSpace::new(&mesh, 1).unwrap();
    let coeffs = Coefficients::new(
        Diffusion::Isotropic(1.0),
        Reaction::Polynomial(vec![Monomial { coef: 1.0, px: 2, py: 2 }]),
    )
    .unwrap();
    let k = assemble_stiffness_full(&space, &coeffs).unwrap();
    let lap = assemble_stiffness_full(&space, &Coefficients::laplace()).unwrap();
    let ones = vec![1.0; 3];
    let reaction_total = k.bilinear(&ones, &ones) - lap.bilinear(&ones, &ones);
    assert!((reaction_total - 1.0 / 180.0).abs() < 1e-15);
}

#[test]
fn non_finite_coefficient_is_rejected() {
    let mesh = unit_square(1);
    let space = FeSpace::new(&mesh, 1).unwrap();
    let f: ScalarFn = Arc::new(|p| if p[0] > 0.5 { f64::NAN } else { 0.0 });
    let coeffs = Coefficients::new(Diffusion::Isotropic(1.0), Reaction::Function(f.clone())).unwrap();
    assert!(matches!(assemble_stiffness(&space, &coeffs), Err(crate::Error::NonFiniteCoefficient { .. })));
    assert!(assemble_load(&space, &f).is_err());
    assert!(Coefficients::new(Diffusion::Isotropic(0.0), Reaction::Constant(0.0)).is_err());
    let skew = Diffusion::PerRegion {
        default: [[1.0, 0.5], [0.0, 1.0]],
        regions: Default::default(),
    };
    assert!(skew.validate().is_err());
}

#[test]
fn prolongation_is_exact() {
    let coarse = unit_square(1);
    let marked: BTreeSet<usize> = [0, 3].into_iter().collect();
    let refined = coarse.refine(&marked, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let points: Vec<[f64; 2]> = (0..50).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
    for degree in [1, 2] {
        let cs = FeSpace::new(&coarse, degree).unwrap();
        let fs = FeSpace::new(&refined.mesh, degree).unwrap();
        let u: Vec<f64> = (0..cs.n_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v = prolongate(&cs, &fs, &refined.parent_map, &u).unwrap();
        let a = evaluate(&cs, &u, &points).unwrap();
        let b = evaluate(&fs, &v, &points).unwrap();
        for (a, b) in a.iter().zip(&b) {
            assert!((a.unwrap().value - b.unwrap().value).abs() < 1e-12);
        }
    }
}

/// w = x(1-x)y(1-y), -Δw = 2[x(1-x) + y(1-y)]; everything polynomial, so the
/// load and the error integrals are exact.
fn manufactured_error(space: &FeSpace, uh: &[f64]) -> f64 {
    let rule = triangle_rule(6);
    let mut total = 0.0;
    for t in 0..space.mesh().n_elements() {
        let geo = space.geometry(t);
        for (bary, w) in rule.barycentric() {
            let [x, y] = geo.point(bary);
            let g = [(1.0 - 2.0 * x) * y * (1.0 - y), (1.0 - 2.0 * y) * x * (1.0 - x)];
            let (_, gh) = space.eval_local(uh, t, &geo, bary);
            total += w * geo.det * ((g[0] - gh[0]).powi(2) + (g[1] - gh[1]).powi(2));
        }
    }
    total
}

#[test]
fn galerkin_orthogonality_for_nested_spaces() {
    let f: ScalarFn = Arc::new(|p| 2.0 * (p[0] * (1.0 - p[0]) + p[1] * (1.0 - p[1])));
    let coeffs = Coefficients::laplace();
    let coarse = unit_square(1);
    let refined = coarse.refine(&[0, 1].into_iter().collect(), 1).unwrap();
    let solve = |space: &FeSpace| {
        let k = assemble_stiffness(space, &coeffs).unwrap();
        let x = SparseCholesky::factor(&k).unwrap().solve(&assemble_load(space, &f).unwrap());
        space.extend(&x)
    };
    for degree in [1, 2] {
        let cs = FeSpace::new(&coarse, degree).unwrap();
        let fs = FeSpace::new(&refined.mesh, degree).unwrap();
        let uc = solve(&cs);
        let uf = solve(&fs);
        let diff: Vec<f64> = prolongate(&cs, &fs, &refined.parent_map, &uc)
            .unwrap()
            .iter()
            .zip(&uf)
            .map(|(a, b)| b - a)
            .collect();
        let d = energy_norm(&fs, &coeffs, &diff).unwrap();
        let ec = manufactured_error(&cs, &uc);
        let ef = manufactured_error(&fs, &uf);
        assert!((ef - (ec - d * d)).abs() < 1e-12 * ec, "{ef} {ec} {}", d * d);
        assert!(d > 0.0);
    }
}

#[test]
fn per_region_tensor_is_used() {
    let mesh = Mesh::build_initial_tagged(
        &[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        &[[0, 1, 2], [0, 2, 3]],
        &[0, 7],
        &[[0, 1], [1, 2], [2, 3], [3, 0]],
    )
    .unwrap();
    let space = FeSpace::new(&mesh, 1).unwrap();
    let mut regions = std::collections::BTreeMap::new();
    regions.insert(7, [[3.0, 0.0], [0.0, 3.0]]);
    let coeffs = Coefficients::new(
        Diffusion::PerRegion {
            default: [[1.0, 0.0], [0.0, 1.0]],
            regions,
        },
        Reaction::Constant(0.0),
    )
    .unwrap();
    let k = assemble_stiffness_full(&space, &coeffs).unwrap();
    // u = x: energy = 1·|T0| + 3·|T1| = 2
    let u = interpolate(&space, |p| p[0]);
    assert!((k.bilinear(&u, &u) - 2.0).abs() < 1e-14);
}

#[test]
fn matrix_market_export_round_trips_entries() {
    let mesh = reference_triangle();
    let space = FeSpace::new(&mesh, 1).unwrap();
    let m = assemble_mass_full(&space).unwrap();
    let text = m.to_matrix_market();
    assert!(text.starts_with("%%MatrixMarket"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('%')).count(), 1 + (m.nnz() + m.dim()) / 2);
}
