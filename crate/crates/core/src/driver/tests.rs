use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::problems::{square_laplace, square_manufactured};

fn quick(mode: Mode) -> AfemConfig {
    AfemConfig {
        mode,
        max_dof: 600,
        include_timing: false,
        ..Default::default()
    }
}

fn synthetic(x: &[f64], y: &[f64]) -> AfemTrace {
    AfemTrace {
        problem: "synthetic".into(),
        degree: 1,
        first_index: 0,
        rows: x
            .iter()
            .zip(y)
            .enumerate()
            .map(|(i, (&a, &b))| TraceRow {
                iter: i,
                n_elements: 2 * a as usize,
                n_dofs: a as usize,
                marked: 1,
                lambdas: vec![10.0 + b, 20.0 + b],
                eta2: b,
                osc2: b * b,
                gap2: if i == 1 { None } else { Some(b / 3.0) },
                seconds: 0.125 * i as f64,
            })
            .collect(),
        cluster_sizes: vec![vec![2]; x.len()],
        stop: StopReason::MaxDof,
        final_mesh: None,
    }
}

#[test]
fn slope_of_exact_power_law() {
    let x: Vec<f64> = (0..8).map(|i| 100.0 * 2f64.powi(i)).collect();
    let y: Vec<f64> = x.iter().map(|v| 3.0 / v).collect();
    assert!((log_log_slope(&x, &y).unwrap() + 1.0).abs() < 1e-12);
    let t = synthetic(&x, &y);
    assert!((fit_slope(&t, TraceField::Eta2, TraceField::Dofs, 6).unwrap() + 1.0).abs() < 1e-12);
    assert!((fit_slope(&t, TraceField::Osc2, TraceField::Dofs, 6).unwrap() + 2.0).abs() < 1e-12);
}

#[test]
fn slope_with_multiplicative_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x: Vec<f64> = (0..12).map(|i| 50.0 * 1.5f64.powi(i)).collect();
    let y: Vec<f64> = x.iter().map(|v| 4.0 * v.powf(-2.0 / 3.0) * (1.0 + 0.01 * rng.random_range(-1.0..1.0))).collect();
    assert!((log_log_slope(&x, &y).unwrap() + 2.0 / 3.0).abs() < 0.05);
}

#[test]
fn slope_of_constant_and_bad_input() {
    let x = [1.0, 2.0, 4.0, 8.0];
    assert!(log_log_slope(&x, &[5.0; 4]).unwrap().abs() < 1e-15);
    assert!(log_log_slope(&x, &[1.0, 0.0, 1.0, 1.0]).is_err());
    assert!(log_log_slope(&x, &[1.0, -1.0, 1.0, 1.0]).is_err());
    assert!(log_log_slope(&x[..2], &[1.0, 2.0]).is_err());
    // the missing gap in row 1 falls inside a full-length window
    let t = synthetic(&x, &[1.0, 0.5, 0.25, 0.125]);
    assert!(fit_slope(&t, TraceField::Gap2, TraceField::Dofs, 4).is_err());
}

#[test]
fn decay_rate_on_geometric_data() {
    let x: Vec<f64> = (1..=6).map(|i| i as f64).collect();
    let y: Vec<f64> = (0..6).map(|i| 0.5f64.powi(i)).collect();
    let t = synthetic(&x, &y);
    assert!((fit_decay_rate(&t, TraceField::Eta2, 6).unwrap() - 0.5f64.ln()).abs() < 1e-12);
}

#[test]
fn csv_and_json_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let x = [10.0, 30.0, 90.0];
    let t = synthetic(&x, &[0.1, 1.0 / 3.0, 1e-20]);
    let path = dir.path().join("t.csv");
    t.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("iter,n_elements,n_dofs,marked,lambda_1,lambda_2,eta2,osc2,gap2,seconds\n"));
    assert_eq!(read_csv(&path).unwrap(), t.rows);

    let jpath = dir.path().join("t.json");
    t.write_json(&jpath).unwrap();
    let back = AfemTrace::read_json(&jpath).unwrap();
    assert_eq!(back.rows, t.rows);
    assert_eq!(back.cluster_sizes, t.cluster_sizes);
    assert_eq!(back.stop, t.stop);
}

#[test]
fn csv_without_eigenvalues() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = synthetic(&[1.0, 2.0], &[1.0, 2.0]);
    for r in &mut t.rows {
        r.lambdas.clear();
    }
    let path = dir.path().join("s.csv");
    t.write_csv(&path).unwrap();
    assert_eq!(csv_header(0).join(","), "iter,n_elements,n_dofs,marked,eta2,osc2,gap2,seconds");
    assert_eq!(read_csv(&path).unwrap(), t.rows);
}

#[test]
fn svg_has_one_polyline_per_series_and_enveloping_axes() {
    let x: Vec<f64> = (0..6).map(|i| 37.0 * 2f64.powi(i)).collect();
    let y: Vec<f64> = x.iter().map(|v| 0.3 / v).collect();
    let t = synthetic(&x, &y);
    let series = [TraceField::Eta2, TraceField::Osc2, TraceField::Gap2];
    let svg = render(&t, TraceField::Dofs, &series, Some(-1.0)).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 3);
    assert_eq!(svg.matches("class=\"guide\"").count(), 1);
    let b = plot_bounds(&t, TraceField::Dofs, &series).unwrap();
    for f in series {
        for (xv, yv) in t.values(TraceField::Dofs).iter().zip(t.values(f)) {
            if let (Some(xv), Some(yv)) = (xv, yv) {
                assert!(b.x_min <= *xv && *xv <= b.x_max);
                assert!(b.y_min <= yv && yv <= b.y_max);
            }
        }
    }
    let dir = tempfile::tempdir().unwrap();
    emit_plot(&t, dir.path().join("p.svg")).unwrap();
    let written = std::fs::read_to_string(dir.path().join("p.svg")).unwrap();
    assert_eq!(written.matches("<polyline").count(), 3);
}

#[test]
fn config_validation() {
    assert!(AfemConfig::default().validate().is_ok());
    for bad in [
        AfemConfig { theta: 0.0, ..Default::default() },
        AfemConfig { theta: 1.0, ..Default::default() },
        AfemConfig { degree: 3, ..Default::default() },
        AfemConfig { mode: Mode::Cluster { index: 1, multiplicity: 0 }, ..Default::default() },
        AfemConfig { mode: Mode::FirstN(0), ..Default::default() },
        AfemConfig { bisections: 0, ..Default::default() },
    ] {
        assert!(matches!(run_afem(&bad), Err(Error::InvalidArgument(_))));
    }
    assert!(run_afem_first_n(&AfemConfig::default()).is_err());
}

#[test]
fn tiny_theta_marks_the_single_largest_element() {
    let spec = square_laplace().unwrap();
    let config = AfemConfig {
        theta: 1e-12,
        max_iterations: 1,
        include_timing: false,
        ..Default::default()
    };
    let trace = run_afem_problem(&spec, &config).unwrap();
    assert_eq!(trace.rows.len(), 1);
    assert_eq!(trace.rows[0].marked, 1);
    assert_eq!(trace.stop, StopReason::MaxIterations);

    // independent recomputation of the indicator field
    let mesh = spec.initial_mesh.refine_uniform(3).unwrap();
    let space = FeSpace::new(&mesh, 1).unwrap();
    let k = assemble_stiffness(&space, &spec.coefficients).unwrap();
    let m = assemble_mass(&space).unwrap();
    let pairs = crate::eigsolve::solve_smallest(&k, &m, 1, 1e-10).unwrap();
    let cluster = EigenCluster::from_pairs(&space, &pairs, 0..1, 1);
    let field = eigen_indicators(&space, &spec.coefficients, &cluster).unwrap();
    let top = (0..field.len()).fold(0, |best, t| if field.eta2[t] > field.eta2[best] { t } else { best });
    let expected = mesh.refine(&BTreeSet::from([top]), 1).unwrap();
    let got = trace.final_mesh.unwrap();
    assert!(expected.refined_set.contains(&top));
    assert_eq!(got.n_elements(), expected.mesh.n_elements());
    assert_eq!(got.vertices(), expected.mesh.vertices());
}

#[test]
fn eigenvalues_decrease_and_elements_grow() {
    let trace = run_afem(&quick(Mode::Cluster { index: 2, multiplicity: 2 })).unwrap();
    assert!(trace.rows.len() >= 3);
    assert_eq!(trace.stop, StopReason::MaxDof);
    assert_eq!(trace.first_index, 1);
    for w in trace.rows.windows(2) {
        assert!(w[1].n_elements > w[0].n_elements);
        for (a, b) in w[0].lambdas.iter().zip(&w[1].lambdas) {
            assert!(*b <= a * (1.0 + 1e-9), "{a} -> {b}");
        }
    }
    let exact = 5.0 * std::f64::consts::PI.powi(2);
    for r in &trace.rows {
        assert!(r.lambdas.iter().all(|l| *l > exact));
        assert!(r.gap2.unwrap() > 0.0);
        assert!(r.marked > 0 || r.n_dofs >= 600);
    }
}

#[test]
fn first_n_with_one_matches_cluster_one() {
    let a = run_afem(&quick(Mode::Cluster { index: 1, multiplicity: 1 })).unwrap();
    let b = run_afem_first_n(&quick(Mode::FirstN(1))).unwrap();
    assert_eq!(a.rows, b.rows);
    assert!(b.cluster_sizes.iter().all(|s| s == &[1]));
}

#[test]
fn first_n_extends_over_a_split_cluster() {
    let trace = run_afem_first_n(&AfemConfig {
        max_iterations: 2,
        ..quick(Mode::FirstN(2))
    })
    .unwrap();
    assert_eq!(trace.n_tracked(), 3);
    assert_eq!(trace.cluster_sizes[0], vec![1, 2]);
}

#[test]
fn wrong_multiplicity_is_cluster_identity_loss() {
    let err = run_afem(&quick(Mode::Cluster { index: 2, multiplicity: 1 })).unwrap_err();
    assert!(matches!(err, Error::ClusterIdentityLost(_)), "{err}");
}

#[test]
fn mesh_output_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let trace = run_afem(&AfemConfig {
        max_iterations: 2,
        mesh_out: Some(dir.path().join("meshes")),
        ..quick(Mode::Cluster { index: 1, multiplicity: 1 })
    })
    .unwrap();
    assert_eq!(trace.rows.len(), 2);
    assert!(dir.path().join("meshes/mesh_000.vtk").exists());
    assert!(dir.path().join("meshes/mesh_001.vtk").exists());
}

#[test]
fn zero_source_converges_immediately() {
    let mut problem = square_manufactured().unwrap();
    problem.sources = vec![Arc::new(|_| 0.0)];
    problem.solutions.clear();
    let trace = run_afem_source(&quick(Mode::FirstN(1)), &problem).unwrap();
    assert_eq!(trace.stop, StopReason::Converged);
    assert_eq!(trace.rows.len(), 1);
    assert_eq!(trace.rows[0].eta2, 0.0);
    assert_eq!(trace.rows[0].marked, 0);
    assert_eq!(trace.rows[0].gap2, None);
}

#[test]
fn source_loop_reduces_energy_error() {
    let trace = run_afem_source(&AfemConfig { max_dof: 1500, ..quick(Mode::FirstN(1)) }, &square_manufactured().unwrap()).unwrap();
    let first = trace.rows.first().unwrap().gap2.unwrap();
    let last = trace.rows.last().unwrap().gap2.unwrap();
    assert!(last < 0.5 * first, "{first} -> {last}");
}
