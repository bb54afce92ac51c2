//! Built-in model problems with analytic ground truth, and custom problems
//! loaded from JSON.

use std::f64::consts::{PI, SQRT_2};
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use crate::fem::{Coefficients, Diffusion, Monomial, Reaction};
use crate::gap::{ExactEigenspace, ExactFunction};
use crate::mesh::{Mesh, MeshJson};
use crate::{Error, Result, ScalarFn};

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceValue {
    /// 1-based global eigenvalue index
    pub index: usize,
    pub value: f64,
    pub note: String,
}

#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub name: String,
    /// Coarse mesh before any pre-refinement.
    pub initial_mesh: Mesh,
    pub coefficients: Coefficients,
    /// Exact eigenspaces in ascending order of λ, one per cluster, starting at
    /// the bottom of the spectrum. Empty when unknown.
    pub exact_clusters: Vec<ExactEigenspace>,
    pub reference_values: Vec<ReferenceValue>,
    /// Uniform refinement rounds that make the coarse mesh resolve the
    /// low modes.
    pub pre_refinements: usize,
}

impl ProblemSpec {
    /// Exact eigenspace of the 1-based cluster `index`, if known.
    pub fn exact_cluster(&self, index: usize) -> Option<&ExactEigenspace> {
        index.checked_sub(1).and_then(|i| self.exact_clusters.get(i))
    }

    /// Exact eigenvalues with multiplicity, ascending.
    pub fn exact_values(&self) -> Vec<f64> {
        self.exact_clusters
            .iter()
            .flat_map(|c| std::iter::repeat_n(c.value, c.q()))
            .collect()
    }

    pub fn reference_value(&self, index: usize) -> Option<f64> {
        self.reference_values.iter().find(|r| r.index == index).map(|r| r.value)
    }
}

fn square_mesh(lo: f64, hi: f64) -> Result<Mesh> {
    Mesh::build_initial(
        &[[lo, lo], [hi, lo], [hi, hi], [lo, hi]],
        &[[0, 1, 2], [0, 2, 3]],
        &[[0, 1], [1, 2], [2, 3], [3, 0]],
    )
}

/// 2 sin(mπx) sin(nπy), b-normalized on the unit square.
pub fn square_mode(m: u32, n: u32) -> ExactFunction {
    let (a, b) = (m as f64 * PI, n as f64 * PI);
    ExactFunction {
        value: Arc::new(move |p| 2.0 * (a * p[0]).sin() * (b * p[1]).sin()),
        gradient: Arc::new(move |p| {
            [
                2.0 * a * (a * p[0]).cos() * (b * p[1]).sin(),
                2.0 * b * (a * p[0]).sin() * (b * p[1]).cos(),
            ]
        }),
    }
}

/// −Δu = λu on (0,1)², λ = π²(m² + n²).
pub fn square_laplace() -> Result<ProblemSpec> {
    // all (m, n) with m² + n² ≤ 25 so that the listed clusters are complete
    let mut modes: Vec<(u32, u32)> = (1..=4).flat_map(|m| (1..=4).map(move |n| (m, n))).filter(|&(m, n)| m * m + n * n <= 25).collect();
    modes.sort_by_key(|&(m, n)| (m * m + n * n, n));
    let mut exact_clusters: Vec<ExactEigenspace> = Vec::new();
    let mut last = 0;
    for (m, n) in modes {
        let s = m * m + n * n;
        if s != last {
            exact_clusters.push(ExactEigenspace {
                value: PI * PI * s as f64,
                basis: Vec::new(),
            });
            last = s;
        }
        exact_clusters.last_mut().unwrap().basis.push(square_mode(m, n));
    }
    Ok(ProblemSpec {
        name: "square".into(),
        initial_mesh: square_mesh(0.0, 1.0)?,
        coefficients: Coefficients::laplace(),
        exact_clusters,
        reference_values: Vec::new(),
        pre_refinements: DEFAULT_PRE_REFINEMENTS,
    })
}

/// Hermite function ψ_n for n ≤ 2, with its derivative.
fn hermite(n: usize, x: f64) -> (f64, f64) {
    let g = PI.powf(-0.25) * (-0.5 * x * x).exp();
    match n {
        0 => (g, -x * g),
        1 => {
            let v = SQRT_2 * x * g;
            (v, SQRT_2 * g - x * v)
        }
        2 => {
            let v = (2.0 * x * x - 1.0) / SQRT_2 * g;
            (v, 2.0 * SQRT_2 * x * g - x * v)
        }
        _ => unreachable!("only ψ_0, ψ_1, ψ_2 are tabulated"),
    }
}

/// ψ_nx(x) ψ_ny(y)
pub fn oscillator_mode(nx: usize, ny: usize) -> ExactFunction {
    ExactFunction {
        value: Arc::new(move |p| hermite(nx, p[0]).0 * hermite(ny, p[1]).0),
        gradient: Arc::new(move |p| {
            let (hx, dx) = hermite(nx, p[0]);
            let (hy, dy) = hermite(ny, p[1]);
            [dx * hy, hx * dy]
        }),
    }
}

/// −½Δu + ½|x|²u = λu on (−w, w)², λ = n_x + n_y + 1.
pub fn harmonic_oscillator(box_half_width: f64) -> Result<ProblemSpec> {
    if !(box_half_width > 0.0) {
        return Err(Error::InvalidArgument(format!("box half-width {box_half_width} must be positive")));
    }
    let w = box_half_width;
    let initial_mesh = Mesh::build_initial(
        &[[-w, -w], [w, -w], [w, w], [-w, w], [0.0, 0.0]],
        &[[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]],
        &[[0, 1], [1, 2], [2, 3], [3, 0]],
    )?;
    let exact_clusters = (0..3)
        .map(|level| ExactEigenspace {
            value: level as f64 + 1.0,
            basis: (0..=level).map(|ny| oscillator_mode(level - ny, ny)).collect(),
        })
        .collect();
    Ok(ProblemSpec {
        name: "oscillator".into(),
        initial_mesh,
        coefficients: Coefficients::new(Diffusion::Isotropic(0.5), Reaction::Radial(vec![0.0, 0.5]))?,
        exact_clusters,
        reference_values: Vec::new(),
        // the box is about ten decay lengths wide; three rounds leave h ≈ 0.7
        pre_refinements: DEFAULT_PRE_REFINEMENTS + 1,
    })
}

pub const DEFAULT_PRE_REFINEMENTS: usize = 3;

/// Reference value of the first Dirichlet eigenvalue of −Δ on the L-shape.
pub const LSHAPE_LAMBDA1: f64 = 9.6397238;

/// −Δu = λu on (−1,1)² \ [0,1]×[−1,0].
pub fn lshape_laplace() -> Result<ProblemSpec> {
    let initial_mesh = Mesh::build_initial(
        &[[-1.0, -1.0], [0.0, -1.0], [0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [-1.0, 1.0], [-1.0, 0.0]],
        &[[0, 1, 2], [0, 2, 7], [7, 2, 5], [7, 5, 6], [2, 3, 4], [2, 4, 5]],
        &[[0, 1], [1, 2], [2, 3], [3, 4], [4, 5], [5, 6], [6, 7], [7, 0]],
    )?;
    Ok(ProblemSpec {
        name: "lshape".into(),
        initial_mesh,
        coefficients: Coefficients::laplace(),
        exact_clusters: Vec::new(),
        reference_values: vec![ReferenceValue {
            index: 1,
            value: LSHAPE_LAMBDA1,
            note: "extrapolated from adaptive P2 runs".into(),
        }],
        pre_refinements: DEFAULT_PRE_REFINEMENTS,
    })
}

/// Source problem with a closed-form solution.
#[derive(Clone)]
pub struct SourceProblem {
    pub spec: ProblemSpec,
    pub sources: Vec<ScalarFn>,
    pub solutions: Vec<ExactFunction>,
}

impl std::fmt::Debug for SourceProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SourceProblem")
            .field("spec", &self.spec)
            .field("sources", &self.sources.len())
            .finish_non_exhaustive()
    }
}

/// −Δu = f on the unit square with u = x(1−x) sin(πy) e^{x}.
pub fn square_manufactured() -> Result<SourceProblem> {
    let u = |p: [f64; 2]| {
        let (x, y) = (p[0], p[1]);
        x * (1.0 - x) * x.exp() * (PI * y).sin()
    };
    // g(x) = x(1−x)eˣ: g' = (1 − x − x²)eˣ, g'' = −(x² + 3x)eˣ
    let grad = |p: [f64; 2]| {
        let (x, y) = (p[0], p[1]);
        let g = x * (1.0 - x) * x.exp();
        let dg = (1.0 - x - x * x) * x.exp();
        [dg * (PI * y).sin(), PI * g * (PI * y).cos()]
    };
    let f = |p: [f64; 2]| {
        let (x, y) = (p[0], p[1]);
        let g = x * (1.0 - x) * x.exp();
        let d2g = -(x * x + 3.0 * x) * x.exp();
        -(d2g - PI * PI * g) * (PI * y).sin()
    };
    let mut spec = square_laplace()?;
    spec.name = "square-source".into();
    spec.exact_clusters.clear();
    Ok(SourceProblem {
        spec,
        sources: vec![Arc::new(f)],
        solutions: vec![ExactFunction {
            value: Arc::new(u),
            gradient: Arc::new(grad),
        }],
    })
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MeshRef {
    Path(String),
    Inline(MeshJson),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DiffusionJson {
    Scalar(f64),
    Matrix([[f64; 2]; 2]),
}

#[derive(Deserialize)]
#[serde(rename_all = "lowercase")]
enum ReactionJson {
    Constant(f64),
    Polynomial(Vec<Monomial>),
    Radial(Vec<f64>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CustomJson {
    #[serde(default)]
    name: Option<String>,
    mesh: MeshRef,
    #[serde(default)]
    diffusion: Option<DiffusionJson>,
    #[serde(default)]
    reaction: Option<ReactionJson>,
    #[serde(default)]
    pre_refinements: Option<usize>,
}

/// Loads a problem from a JSON spec. The mesh is either inline or a path to a
/// mesh JSON file, relative to the spec's directory.
pub fn from_json_file(path: impl AsRef<Path>) -> Result<ProblemSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    from_json_str(&text, path.parent().unwrap_or(Path::new(".")))
}

pub fn from_json_str(text: &str, base_dir: &Path) -> Result<ProblemSpec> {
    let spec: CustomJson = serde_json::from_str(text)?;
    let initial_mesh = match spec.mesh {
        MeshRef::Path(p) => Mesh::read_json(base_dir.join(p))?,
        MeshRef::Inline(m) => m.into_mesh()?,
    };
    let diffusion = match spec.diffusion {
        None => Diffusion::Isotropic(1.0),
        Some(DiffusionJson::Scalar(a)) => Diffusion::Isotropic(a),
        Some(DiffusionJson::Matrix(m)) => Diffusion::PerRegion {
            default: m,
            regions: Default::default(),
        },
    };
    let reaction = match spec.reaction {
        None => Reaction::Constant(0.0),
        Some(ReactionJson::Constant(c)) => Reaction::Constant(c),
        Some(ReactionJson::Polynomial(t)) => Reaction::Polynomial(t),
        Some(ReactionJson::Radial(a)) => Reaction::Radial(a),
    };
    let probe = initial_mesh.vertices().iter().map(|v| reaction.eval(v.coords()));
    if probe.clone().any(|c| !c.is_finite() || c < 0.0) {
        return Err(Error::InvalidArgument("reaction coefficient must be finite and nonnegative".into()));
    }
    Ok(ProblemSpec {
        name: spec.name.unwrap_or_else(|| "custom".into()),
        initial_mesh,
        coefficients: Coefficients::new(diffusion, reaction)?,
        exact_clusters: Vec::new(),
        reference_values: Vec::new(),
        pre_refinements: spec.pre_refinements.unwrap_or(DEFAULT_PRE_REFINEMENTS),
    })
}

/// `square`, `lshape`, `oscillator` or `file:<path>`.
pub fn by_name(name: &str) -> Result<ProblemSpec> {
    match name {
        "square" => square_laplace(),
        "lshape" => lshape_laplace(),
        "oscillator" => harmonic_oscillator(5.5),
        _ => match name.strip_prefix("file:") {
            Some(path) => from_json_file(path),
            None => Err(Error::InvalidArgument(format!("unknown problem '{name}'"))),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::triangle_rule;

    /// b- and a-Gram matrices of an exact basis, by high-order quadrature on a
    /// uniformly refined mesh.
    fn grams(spec: &ProblemSpec, basis: &[ExactFunction], rounds: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mesh = spec.initial_mesh.refine_uniform(rounds).unwrap();
        let rule = triangle_rule(14);
        let q = basis.len();
        let mut b = vec![vec![0.0; q]; q];
        let mut a = vec![vec![0.0; q]; q];
        for t in 0..mesh.n_elements() {
            let [p0, p1, p2] = mesh.element_coords(t);
            let det = ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1])).abs();
            let alpha = spec.coefficients.diffusion.tensor(0)[0][0];
            for (l, w) in rule.barycentric() {
                let p = [
                    l[0] * p0[0] + l[1] * p1[0] + l[2] * p2[0],
                    l[0] * p0[1] + l[1] * p1[1] + l[2] * p2[1],
                ];
                let c = spec.coefficients.reaction.eval(p);
                let v: Vec<f64> = basis.iter().map(|f| (f.value)(p)).collect();
                let g: Vec<[f64; 2]> = basis.iter().map(|f| (f.gradient)(p)).collect();
                for i in 0..q {
                    for j in 0..q {
                        b[i][j] += w * det * v[i] * v[j];
                        a[i][j] += w * det * (alpha * (g[i][0] * g[j][0] + g[i][1] * g[j][1]) + c * v[i] * v[j]);
                    }
                }
            }
        }
        (b, a)
    }

    fn check_spec(spec: &ProblemSpec, rounds: usize, rq_tol: f64) {
        for cluster in &spec.exact_clusters {
            let (b, a) = grams(spec, &cluster.basis, rounds);
            for i in 0..cluster.q() {
                for j in 0..cluster.q() {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((b[i][j] - e).abs() <= 1e-8, "{} λ={}: b[{i}][{j}] = {}", spec.name, cluster.value, b[i][j]);
                }
                let rq = a[i][i] / b[i][i];
                assert!((rq - cluster.value).abs() <= rq_tol * cluster.value, "{}: {rq} vs {}", spec.name, cluster.value);
            }
        }
    }

    #[test]
    fn square_spectrum() {
        let spec = square_laplace().unwrap();
        let values = spec.exact_values();
        assert!((values[0] - 19.7392088).abs() < 1e-7);
        assert!((values[1] - 49.3480220).abs() < 1e-7 && values[2] == values[1]);
        let q: Vec<usize> = spec.exact_clusters.iter().map(|c| c.q()).collect();
        assert_eq!(&q[..5], &[1, 2, 1, 2, 2]);
        assert_eq!(spec.exact_cluster(2).unwrap().q(), 2);
        assert!(spec.exact_cluster(0).is_none());
        assert!((spec.initial_mesh.area() - 1.0).abs() < 1e-15);
        check_spec(&spec, 3, 1e-6);
    }

    #[test]
    fn oscillator_spectrum() {
        let spec = harmonic_oscillator(5.5).unwrap();
        assert_eq!(spec.exact_values(), vec![1.0, 2.0, 2.0, 3.0, 3.0, 3.0]);
        assert_eq!(spec.initial_mesh.n_elements(), 4);
        check_spec(&spec, 4, 1e-5);
        assert!(harmonic_oscillator(0.0).is_err());
    }

    #[test]
    fn hermite_derivatives() {
        for n in 0..3 {
            for &x in &[-1.3, 0.0, 0.4, 2.2] {
                let h = 1e-6;
                let fd = (hermite(n, x + h).0 - hermite(n, x - h).0) / (2.0 * h);
                assert!((fd - hermite(n, x).1).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn lshape_domain() {
        let spec = lshape_laplace().unwrap();
        assert!((spec.initial_mesh.area() - 3.0).abs() < 1e-15);
        assert_eq!(spec.initial_mesh.n_elements(), 6);
        assert_eq!(spec.reference_value(1), Some(LSHAPE_LAMBDA1));
        assert!(spec.exact_clusters.is_empty());
        spec.initial_mesh.check_conformity().unwrap();
    }

    #[test]
    fn manufactured_source_is_consistent() {
        let problem = square_manufactured().unwrap();
        let u = &problem.solutions[0];
        let f = &problem.sources[0];
        let h = 1e-4;
        for p in [[0.3, 0.6], [0.81, 0.12]] {
            let lap = ((u.value)([p[0] + h, p[1]]) + (u.value)([p[0] - h, p[1]]) + (u.value)([p[0], p[1] + h]) + (u.value)([p[0], p[1] - h])
                - 4.0 * (u.value)(p))
                / (h * h);
            assert!((-lap - f(p)).abs() < 1e-5);
            let g = (u.gradient)(p);
            let gx = ((u.value)([p[0] + h, p[1]]) - (u.value)([p[0] - h, p[1]])) / (2.0 * h);
            let gy = ((u.value)([p[0], p[1] + h]) - (u.value)([p[0], p[1] - h])) / (2.0 * h);
            assert!((g[0] - gx).abs() < 1e-7 && (g[1] - gy).abs() < 1e-7);
        }
        assert_eq!((u.value)([0.0, 0.5]), 0.0);
    }

    #[test]
    fn names_and_custom_json() {
        assert_eq!(by_name("square").unwrap().name, "square");
        assert_eq!(by_name("oscillator").unwrap().name, "oscillator");
        assert!(by_name("cube").is_err());

        let dir = tempfile::tempdir().unwrap();
        let mesh = square_mesh(0.0, 2.0).unwrap();
        mesh.write_json(dir.path().join("mesh.json")).unwrap();
        let spec_path = dir.path().join("spec.json");
        std::fs::write(&spec_path, r#"{"name": "big", "mesh": "mesh.json", "diffusion": 2.0, "reaction": {"radial": [1.0, 0.5]}}"#).unwrap();
        let spec = by_name(&format!("file:{}", spec_path.display())).unwrap();
        assert_eq!(spec.name, "big");
        assert!((spec.initial_mesh.area() - 4.0).abs() < 1e-15);
        assert_eq!(spec.coefficients.reaction.eval([1.0, 1.0]), 2.0);

        let inline = r#"{"mesh": {"vertices": [[0,0],[1,0],[0,1]], "elements": [[0,1,2]], "boundary": [[0,1],[1,2],[2,0]]},
                         "diffusion": [[2.0, 0.5], [0.5, 1.0]], "reaction": {"polynomial": [{"coef": 1.0, "px": 2, "py": 0}]}}"#;
        let spec = from_json_str(inline, Path::new(".")).unwrap();
        assert_eq!(spec.coefficients.diffusion.tensor(0), [[2.0, 0.5], [0.5, 1.0]]);
        assert_eq!(spec.coefficients.reaction.degree(), 2);

        let negative = r#"{"mesh": {"vertices": [[0,0],[1,0],[0,1]], "elements": [[0,1,2]], "boundary": [[0,1],[1,2],[2,0]]}, "reaction": {"constant": -1.0}}"#;
        assert!(from_json_str(negative, Path::new(".")).is_err());
        let indefinite = r#"{"mesh": {"vertices": [[0,0],[1,0],[0,1]], "elements": [[0,1,2]], "boundary": [[0,1],[1,2],[2,0]]}, "diffusion": [[1.0, 2.0], [2.0, 1.0]]}"#;
        assert!(from_json_str(indefinite, Path::new(".")).is_err());
    }
}
