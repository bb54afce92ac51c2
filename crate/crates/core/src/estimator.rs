//! Residual error indicators and data oscillations.
//!
//! For a discrete function u and a right-hand side s (either λu or a source f)
//! the element residual is R_T = s + ∇·(A∇u) − cu and the edge jump is
//! J_E = [[A∇u]]·ν. The local indicator is
//!
//!   η²(u, T) = h_T²‖R_T‖²_T + Σ_{E⊂∂T} h_E‖J_E‖²_E,
//!
//! so every interior edge counts fully toward both neighbours. Oscillations
//! replace R_T and J_E by their distances to P_{k−1}(T) and P_k(E).

use std::path::Path;

use serde::Serialize;

use crate::eigsolve::EigenCluster;
use crate::fem::{Coefficients, ElementGeometry, FeSpace};
use crate::quadrature::{gauss_legendre, shifted_legendre, triangle_rule, TriangleRule};
use crate::{Error, Result, ScalarFn};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IndicatorField {
    pub eta2: Vec<f64>,
    pub osc2: Vec<f64>,
    pub total_eta2: f64,
    pub total_osc2: f64,
}

#[derive(Serialize)]
struct IndicatorRow {
    element_id: usize,
    eta2: f64,
    osc2: f64,
}

impl IndicatorField {
    fn zeros(n: usize) -> Self {
        Self {
            eta2: vec![0.0; n],
            osc2: vec![0.0; n],
            total_eta2: 0.0,
            total_osc2: 0.0,
        }
    }

    fn finish(mut self) -> Self {
        self.total_eta2 = self.eta2.iter().sum();
        self.total_osc2 = self.osc2.iter().sum();
        self
    }

    pub fn len(&self) -> usize {
        self.eta2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta2.is_empty()
    }

    /// Per-element CSV with columns element_id, eta2, osc2.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for (element_id, (&eta2, &osc2)) in self.eta2.iter().zip(&self.osc2).enumerate() {
            w.serialize(IndicatorRow { element_id, eta2, osc2 })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Right-hand side entering the element residual.
#[derive(Clone)]
enum Rhs<'a> {
    /// s = λ u
    Eigen(f64),
    Source(&'a ScalarFn),
}

/// Squared residual and jump contributions of one function.
struct Contribution {
    /// h_T²‖R‖², h_T²‖R − ΠR‖²
    element: Vec<(f64, f64)>,
    /// h_E‖J‖², h_E‖J − ΠJ‖² (zero on boundary edges)
    edge: Vec<(f64, f64)>,
}

fn element_rule(space: &FeSpace, coeffs: &Coefficients) -> &'static TriangleRule {
    triangle_rule(2 * space.degree() + 2 + 2 * coeffs.reaction.degree())
}

fn apply(a: [[f64; 2]; 2], g: [f64; 2]) -> [f64; 2] {
    [a[0][0] * g[0] + a[0][1] * g[1], a[1][0] * g[0] + a[1][1] * g[1]]
}

/// ∇·(A∇u) on element t; constant since A is constant per element.
fn divergence(space: &FeSpace, u: &[f64], t: usize, geo: &ElementGeometry, a: [[f64; 2]; 2]) -> f64 {
    let hess = space.basis().hessians(&geo.grad_bary);
    let mut h = [[0.0; 2]; 2];
    for (k, &d) in space.element_dofs(t).iter().enumerate() {
        for r in 0..2 {
            for c in 0..2 {
                h[r][c] += u[d] * hess[k][r][c];
            }
        }
    }
    a[0][0] * h[0][0] + a[0][1] * h[1][0] + a[1][0] * h[0][1] + a[1][1] * h[1][1]
}

fn element_terms(space: &FeSpace, coeffs: &Coefficients, u: &[f64], rhs: &Rhs, rule: &TriangleRule) -> Result<Vec<(f64, f64)>> {
    let mesh = space.mesh();
    let k = space.degree();
    let mut out = Vec::with_capacity(mesh.n_elements());
    let mut values = vec![0.0; rule.len()];
    for t in 0..mesh.n_elements() {
        let geo = space.geometry(t);
        let a = coeffs.diffusion.tensor(mesh.elements()[t].region_tag);
        let div = divergence(space, u, t, &geo, a);
        // moments b_i = ∫ R λ_i for the projection onto P_{k-1}
        let mut moments = [0.0; 3];
        let mut norm2 = 0.0;
        for (q, (bary, w)) in rule.barycentric().enumerate() {
            let p = geo.point(bary);
            let (uv, _) = space.eval_local(u, t, &geo, bary);
            let s = match rhs {
                Rhs::Eigen(lambda) => lambda * uv,
                Rhs::Source(f) => {
                    let v = f(p);
                    if !v.is_finite() {
                        return Err(Error::NonFiniteCoefficient { x: p[0], y: p[1] });
                    }
                    v
                }
            };
            let r = s + div - coeffs.reaction_at(p)? * uv;
            values[q] = r;
            let wq = w * geo.det;
            norm2 += wq * r * r;
            for i in 0..3 {
                moments[i] += wq * r * bary[i];
            }
        }
        let area = geo.area();
        let proj = |bary: [f64; 3]| -> f64 {
            if k == 1 {
                (moments[0] + moments[1] + moments[2]) / area
            } else {
                let mean = (moments[0] + moments[1] + moments[2]) / 4.0;
                (0..3).map(|i| 12.0 / area * (moments[i] - mean) * bary[i]).sum()
            }
        };
        let mut osc2 = 0.0;
        for (q, (bary, w)) in rule.barycentric().enumerate() {
            let d = values[q] - proj(bary);
            osc2 += w * geo.det * d * d;
        }
        let h2 = mesh.element_diameter(t).powi(2);
        out.push((h2 * norm2, h2 * osc2));
    }
    Ok(out)
}

/// Barycentric coordinates in element `t` of the point at parameter `s` along
/// global edge a → b.
fn edge_bary(space: &FeSpace, t: usize, a: usize, b: usize, s: f64) -> [f64; 3] {
    let verts = space.mesh().elements()[t].vertices;
    let mut bary = [0.0; 3];
    for i in 0..3 {
        if verts[i] == a {
            bary[i] = 1.0 - s;
        } else if verts[i] == b {
            bary[i] = s;
        }
    }
    bary
}

fn edge_terms(space: &FeSpace, coeffs: &Coefficients, u: &[f64]) -> Vec<(f64, f64)> {
    let mesh = space.mesh();
    let k = space.degree();
    let (nodes, weights) = gauss_legendre(k + 2);
    let mut jumps = vec![0.0; nodes.len()];
    mesh.edges()
        .iter()
        .enumerate()
        .map(|(id, edge)| {
            let (Some((t1, _)), Some((t2, _))) = (edge.owners[0], edge.owners[1]) else {
                return (0.0, 0.0);
            };
            let [a, b] = edge.vertices;
            let (pa, pb) = (mesh.vertices()[a].coords(), mesh.vertices()[b].coords());
            let len = mesh.edge_length(id);
            // normal pointing from t1 into t2
            let mut nu = [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len];
            let c1 = mesh.element_coords(t1);
            let centroid = [(c1[0][0] + c1[1][0] + c1[2][0]) / 3.0, (c1[0][1] + c1[1][1] + c1[2][1]) / 3.0];
            if (centroid[0] - pa[0]) * nu[0] + (centroid[1] - pa[1]) * nu[1] > 0.0 {
                nu = [-nu[0], -nu[1]];
            }
            let (g1, g2) = (space.geometry(t1), space.geometry(t2));
            let a1 = coeffs.diffusion.tensor(mesh.elements()[t1].region_tag);
            let a2 = coeffs.diffusion.tensor(mesh.elements()[t2].region_tag);
            let mut norm2 = 0.0;
            let mut moments = vec![0.0; k + 1];
            for (q, (&s, &w)) in nodes.iter().zip(&weights).enumerate() {
                let (_, d1) = space.eval_local(u, t1, &g1, edge_bary(space, t1, a, b, s));
                let (_, d2) = space.eval_local(u, t2, &g2, edge_bary(space, t2, a, b, s));
                let (f1, f2) = (apply(a1, d1), apply(a2, d2));
                let j = (f1[0] - f2[0]) * nu[0] + (f1[1] - f2[1]) * nu[1];
                jumps[q] = j;
                norm2 += w * len * j * j;
                for (m, p) in moments.iter_mut().zip(shifted_legendre(k, s)) {
                    *m += w * j * p;
                }
            }
            let mut osc2 = 0.0;
            for (q, (&s, &w)) in nodes.iter().zip(&weights).enumerate() {
                let proj: f64 = shifted_legendre(k, s)
                    .iter()
                    .enumerate()
                    .map(|(n, p)| (2 * n + 1) as f64 * moments[n] * p)
                    .sum();
                let d = jumps[q] - proj;
                osc2 += w * len * d * d;
            }
            (len * norm2, len * osc2)
        })
        .collect()
}

fn contribution(space: &FeSpace, coeffs: &Coefficients, u: &[f64], rhs: &Rhs) -> Result<Contribution> {
    space.check_len(u)?;
    Ok(Contribution {
        element: element_terms(space, coeffs, u, rhs, element_rule(space, coeffs))?,
        edge: edge_terms(space, coeffs, u),
    })
}

fn accumulate(space: &FeSpace, field: &mut IndicatorField, c: &Contribution) {
    let mesh = space.mesh();
    for t in 0..mesh.n_elements() {
        let (e, o) = c.element[t];
        field.eta2[t] += e;
        field.osc2[t] += o;
        for edge in mesh.element_edges(t) {
            let (e, o) = c.edge[edge];
            field.eta2[t] += e;
            field.osc2[t] += o;
        }
    }
}

/// Cluster indicators η²_h(U_h, T) = Σ_l η²_h(u_{h,l}, T), each member using
/// its own discrete eigenvalue.
pub fn eigen_indicators(space: &FeSpace, coeffs: &Coefficients, cluster: &EigenCluster) -> Result<IndicatorField> {
    if cluster.values.len() != cluster.vectors.len() {
        return Err(Error::DimensionMismatch("cluster values and vectors differ in length".into()));
    }
    let mut field = IndicatorField::zeros(space.mesh().n_elements());
    for (&lambda, u) in cluster.values.iter().zip(&cluster.vectors) {
        let c = contribution(space, coeffs, u, &Rhs::Eigen(lambda))?;
        accumulate(space, &mut field, &c);
    }
    Ok(field.finish())
}

/// Indicators of the source problems L u_i = f_i, summed over i.
pub fn source_indicators(space: &FeSpace, coeffs: &Coefficients, solutions: &[Vec<f64>], sources: &[ScalarFn]) -> Result<IndicatorField> {
    if solutions.len() != sources.len() {
        return Err(Error::DimensionMismatch(format!("{} solutions for {} sources", solutions.len(), sources.len())));
    }
    let mut field = IndicatorField::zeros(space.mesh().n_elements());
    for (u, f) in solutions.iter().zip(sources) {
        let c = contribution(space, coeffs, u, &Rhs::Source(f))?;
        accumulate(space, &mut field, &c);
    }
    Ok(field.finish())
}

/// Per-element oscillation osc_h(V, T)² of the linear residual
/// v ↦ λv + ∇·(A∇v) − cv, summed over the members of V.
pub fn oscillation(space: &FeSpace, coeffs: &Coefficients, lambda: f64, v: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut field = IndicatorField::zeros(space.mesh().n_elements());
    for u in v {
        let c = contribution(space, coeffs, u, &Rhs::Eigen(lambda))?;
        accumulate(space, &mut field, &c);
    }
    Ok(field.osc2)
}

/// ‖v‖²_{1,T} per element.
pub fn element_h1_squared(space: &FeSpace, v: &[f64]) -> Result<Vec<f64>> {
    space.check_len(v)?;
    let rule = triangle_rule(2 * space.degree());
    Ok((0..space.mesh().n_elements())
        .map(|t| {
            let geo = space.geometry(t);
            rule.barycentric()
                .map(|(bary, w)| {
                    let (val, g) = space.eval_local(v, t, &geo, bary);
                    w * geo.det * (val * val + g[0] * g[0] + g[1] * g[1])
                })
                .sum()
        })
        .collect())
}

/// osc_h(V, T) − osc_h(W, T) − c_est·‖V − W‖_{1,ω_T} for every element, where
/// ω_T is the element patch. Nonpositive entries confirm the Lipschitz bound.
pub fn oscillation_lipschitz_check(
    space: &FeSpace,
    coeffs: &Coefficients,
    lambda: f64,
    v: &[Vec<f64>],
    w: &[Vec<f64>],
    c_est: f64,
) -> Result<Vec<f64>> {
    if v.len() != w.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} functions", v.len(), w.len())));
    }
    let osc_v = oscillation(space, coeffs, lambda, v)?;
    let osc_w = oscillation(space, coeffs, lambda, w)?;
    let n = space.mesh().n_elements();
    let mut diff_h1 = vec![0.0; n];
    for (a, b) in v.iter().zip(w) {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        for (acc, x) in diff_h1.iter_mut().zip(element_h1_squared(space, &d)?) {
            *acc += x;
        }
    }
    (0..n)
        .map(|t| {
            let patch: f64 = space.mesh().element_patch(t)?.iter().map(|&s| diff_h1[s]).sum();
            Ok(osc_v[t].sqrt() - osc_w[t].sqrt() - c_est * patch.sqrt())
        })
        .collect()
}
