use super::{Coefficients, FeSpace};
use crate::linalg::SparseSym;
use crate::quadrature::triangle_rule;
use crate::{Error, Result, ScalarFn};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Form {
    Stiffness,
    Mass,
}

fn assemble(space: &FeSpace, coeffs: Option<&Coefficients>, form: Form, constrained: bool) -> Result<SparseSym> {
    let k = space.degree();
    let extra = coeffs.map_or(0, |c| if form == Form::Stiffness { c.reaction.degree() } else { 0 });
    let rule = triangle_rule(2 * k + extra);
    let basis = space.basis();
    let nb = basis.len();
    let mesh = space.mesh();
    let n = if constrained { space.n_free() } else { space.n_dofs() };
    let mut triplets = Vec::with_capacity(mesh.n_elements() * nb * nb);
    let mut local = vec![0.0; nb * nb];

    for t in 0..mesh.n_elements() {
        let geo = space.geometry(t);
        local.iter_mut().for_each(|v| *v = 0.0);
        let a = coeffs.map(|c| c.diffusion.tensor(mesh.elements()[t].region_tag));
        for (bary, w) in rule.barycentric() {
            let wq = w * geo.det;
            let phi = basis.values(bary);
            match form {
                Form::Mass => {
                    for i in 0..nb {
                        for j in 0..nb {
                            local[i * nb + j] += wq * phi[i] * phi[j];
                        }
                    }
                }
                Form::Stiffness => {
                    let a = a.expect("stiffness needs coefficients");
                    let c = coeffs.unwrap().reaction_at(geo.point(bary))?;
                    let grads = basis.gradients(bary, &geo.grad_bary);
                    for j in 0..nb {
                        let ag = [
                            a[0][0] * grads[j][0] + a[0][1] * grads[j][1],
                            a[1][0] * grads[j][0] + a[1][1] * grads[j][1],
                        ];
                        for i in 0..nb {
                            local[i * nb + j] +=
                                wq * (ag[0] * grads[i][0] + ag[1] * grads[i][1] + c * phi[i] * phi[j]);
                        }
                    }
                }
            }
        }
        let dofs = space.element_dofs(t);
        for i in 0..nb {
            let gi = if constrained { space.free_index(dofs[i]) } else { Some(dofs[i]) };
            let Some(gi) = gi else { continue };
            for j in 0..nb {
                let gj = if constrained { space.free_index(dofs[j]) } else { Some(dofs[j]) };
                if let Some(gj) = gj {
                    triplets.push((gi, gj, local[i * nb + j]));
                }
            }
        }
    }
    SparseSym::from_triplets(n, triplets)
}

/// K_ij = a(φ_j, φ_i) over free dofs.
pub fn assemble_stiffness(space: &FeSpace, coeffs: &Coefficients) -> Result<SparseSym> {
    assemble(space, Some(coeffs), Form::Stiffness, true)
}

/// M_ij = (φ_j, φ_i) over free dofs.
pub fn assemble_mass(space: &FeSpace) -> Result<SparseSym> {
    assemble(space, None, Form::Mass, true)
}

/// Stiffness matrix over all dofs, without constraint elimination.
pub fn assemble_stiffness_full(space: &FeSpace, coeffs: &Coefficients) -> Result<SparseSym> {
    assemble(space, Some(coeffs), Form::Stiffness, false)
}

pub fn assemble_mass_full(space: &FeSpace) -> Result<SparseSym> {
    assemble(space, None, Form::Mass, false)
}

/// F_i = (f, φ_i) over free dofs.
pub fn assemble_load(space: &FeSpace, f: &ScalarFn) -> Result<Vec<f64>> {
    let rule = triangle_rule(2 * space.degree() + 2);
    let basis = space.basis();
    let mut load = vec![0.0; space.n_free()];
    for t in 0..space.mesh().n_elements() {
        let geo = space.geometry(t);
        let dofs = space.element_dofs(t);
        for (bary, w) in rule.barycentric() {
            let p = geo.point(bary);
            let fv = f(p);
            if !fv.is_finite() {
                return Err(Error::NonFiniteCoefficient { x: p[0], y: p[1] });
            }
            let phi = basis.values(bary);
            for (i, &d) in dofs.iter().enumerate() {
                if let Some(gi) = space.free_index(d) {
                    load[gi] += w * geo.det * fv * phi[i];
                }
            }
        }
    }
    Ok(load)
}

/// Value and gradient of a finite element function at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointValue {
    pub element: usize,
    pub value: f64,
    pub gradient: [f64; 2],
}

/// Evaluates `u` at each point; points outside the domain give `None`.
pub fn evaluate(space: &FeSpace, u: &[f64], points: &[[f64; 2]]) -> Result<Vec<Option<PointValue>>> {
    space.check_len(u)?;
    let mut hint = 0;
    Ok(points
        .iter()
        .map(|&p| {
            let (t, bary) = space.mesh().locate(p, hint)?;
            hint = t;
            let (value, gradient) = space.eval_local(u, t, &space.geometry(t), bary);
            Some(PointValue {
                element: t,
                value,
                gradient,
            })
        })
        .collect())
}

/// Nodal interpolant of `f` at every dof (constrained dofs included).
pub fn interpolate(space: &FeSpace, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    space.dof_coords().iter().map(|&p| f(p)).collect()
}

/// Nodal interpolant with the homogeneous Dirichlet condition imposed.
pub fn interpolate_dirichlet(space: &FeSpace, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    let mut u = interpolate(space, f);
    space.apply_dirichlet(&mut u);
    u
}

fn element_quadratic_form(space: &FeSpace, coeffs: Option<&Coefficients>, u: &[f64]) -> Result<f64> {
    space.check_len(u)?;
    let extra = coeffs.map_or(0, |c| c.reaction.degree());
    let rule = triangle_rule(2 * space.degree() + extra);
    let mut total = 0.0;
    for t in 0..space.mesh().n_elements() {
        let geo = space.geometry(t);
        let a = coeffs.map(|c| c.diffusion.tensor(space.mesh().elements()[t].region_tag));
        for (bary, w) in rule.barycentric() {
            let (v, g) = space.eval_local(u, t, &geo, bary);
            let density = match (coeffs, a) {
                (Some(c), Some(a)) => {
                    let ag = [a[0][0] * g[0] + a[0][1] * g[1], a[1][0] * g[0] + a[1][1] * g[1]];
                    ag[0] * g[0] + ag[1] * g[1] + c.reaction_at(geo.point(bary))? * v * v
                }
                _ => v * v,
            };
            total += w * geo.det * density;
        }
    }
    Ok(total)
}

fn checked_sqrt(q: f64, scale: f64) -> Result<f64> {
    if q < -1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotPositiveDefinite { pivot: 0, value: q });
    }
    Ok(q.max(0.0).sqrt())
}

/// ‖u‖_a = √a(u, u)
pub fn energy_norm(space: &FeSpace, coeffs: &Coefficients, u: &[f64]) -> Result<f64> {
    let q = element_quadratic_form(space, Some(coeffs), u)?;
    checked_sqrt(q, u.iter().map(|v| v * v).sum())
}

/// ‖u‖_b = √(u, u)
pub fn b_norm(space: &FeSpace, u: &[f64]) -> Result<f64> {
    let q = element_quadratic_form(space, None, u)?;
    checked_sqrt(q, u.iter().map(|v| v * v).sum())
}

/// Transfers `u` from `coarse` to `fine`, where `parent_map[t]` is the coarse
/// element containing fine element `t`. Exact for nested spaces.
pub fn prolongate(coarse: &FeSpace, fine: &FeSpace, parent_map: &[usize], u: &[f64]) -> Result<Vec<f64>> {
    coarse.check_len(u)?;
    if parent_map.len() != fine.mesh().n_elements() || coarse.degree() != fine.degree() {
        return Err(Error::DimensionMismatch("parent map does not match the fine mesh".into()));
    }
    let mut out = vec![0.0; fine.n_dofs()];
    let nodes = fine.basis().nodes();
    for (t, &parent) in parent_map.iter().enumerate() {
        let geo = fine.geometry(t);
        let coarse_geo = coarse.geometry(parent);
        for (k, &d) in fine.element_dofs(t).iter().enumerate() {
            let p = geo.point(nodes[k]);
            let bary = coarse.mesh().barycentric(parent, p);
            out[d] = coarse.eval_local(u, parent, &coarse_geo, bary).0;
        }
    }
    Ok(out)
}
