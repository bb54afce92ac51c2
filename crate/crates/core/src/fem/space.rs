use crate::mesh::Mesh;
use crate::{Error, Result};

const NONE: usize = usize::MAX;

/// Affine map of one triangle and its constant barycentric gradients.
#[derive(Clone, Copy, Debug)]
pub struct ElementGeometry {
    pub vertices: [[f64; 2]; 3],
    /// |det J| = 2 · area
    pub det: f64,
    pub grad_bary: [[f64; 2]; 3],
}

impl ElementGeometry {
    pub fn new(vertices: [[f64; 2]; 3]) -> Self {
        let [a, b, c] = vertices;
        let j = [[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        // rows of J^{-1} are ∇ξ and ∇η
        let g1 = [j[1][1] / det, -j[0][1] / det];
        let g2 = [-j[1][0] / det, j[0][0] / det];
        Self {
            vertices,
            det: det.abs(),
            grad_bary: [[-g1[0] - g2[0], -g1[1] - g2[1]], g1, g2],
        }
    }

    pub fn area(&self) -> f64 {
        0.5 * self.det
    }

    pub fn point(&self, bary: [f64; 3]) -> [f64; 2] {
        let v = &self.vertices;
        [
            bary[0] * v[0][0] + bary[1] * v[1][0] + bary[2] * v[2][0],
            bary[0] * v[0][1] + bary[1] * v[1][1] + bary[2] * v[2][1],
        ]
    }
}

/// Local Lagrange basis of degree 1 or 2. Local dofs are the three vertices,
/// then (degree 2) the midpoints of local edges 0, 1, 2 (edge e opposite vertex e).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LocalBasis {
    pub degree: usize,
}

impl LocalBasis {
    pub fn len(&self) -> usize {
        if self.degree == 1 {
            3
        } else {
            6
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self, l: [f64; 3]) -> [f64; 6] {
        if self.degree == 1 {
            [l[0], l[1], l[2], 0.0, 0.0, 0.0]
        } else {
            [
                l[0] * (2.0 * l[0] - 1.0),
                l[1] * (2.0 * l[1] - 1.0),
                l[2] * (2.0 * l[2] - 1.0),
                4.0 * l[1] * l[2],
                4.0 * l[2] * l[0],
                4.0 * l[0] * l[1],
            ]
        }
    }

    pub fn gradients(&self, l: [f64; 3], g: &[[f64; 2]; 3]) -> [[f64; 2]; 6] {
        let mut out = [[0.0; 2]; 6];
        if self.degree == 1 {
            out[..3].copy_from_slice(g);
        } else {
            for i in 0..3 {
                let s = 4.0 * l[i] - 1.0;
                out[i] = [s * g[i][0], s * g[i][1]];
            }
            for e in 0..3 {
                let (a, b) = ((e + 1) % 3, (e + 2) % 3);
                out[3 + e] = [
                    4.0 * (l[a] * g[b][0] + l[b] * g[a][0]),
                    4.0 * (l[a] * g[b][1] + l[b] * g[a][1]),
                ];
            }
        }
        out
    }

    /// Hessians (constant on the element).
    pub fn hessians(&self, g: &[[f64; 2]; 3]) -> [[[f64; 2]; 2]; 6] {
        let mut out = [[[0.0; 2]; 2]; 6];
        if self.degree == 2 {
            let outer = |a: [f64; 2], b: [f64; 2]| [[a[0] * b[0], a[0] * b[1]], [a[1] * b[0], a[1] * b[1]]];
            for i in 0..3 {
                let h = outer(g[i], g[i]);
                out[i] = h.map(|r| r.map(|v| 4.0 * v));
            }
            for e in 0..3 {
                let (a, b) = ((e + 1) % 3, (e + 2) % 3);
                let h1 = outer(g[a], g[b]);
                let h2 = outer(g[b], g[a]);
                for r in 0..2 {
                    for c in 0..2 {
                        out[3 + e][r][c] = 4.0 * (h1[r][c] + h2[r][c]);
                    }
                }
            }
        }
        out
    }

    /// Barycentric coordinates of the local dof nodes.
    pub fn nodes(&self) -> Vec<[f64; 3]> {
        let mut n = vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        if self.degree == 2 {
            n.extend([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]]);
        }
        n
    }
}

/// Continuous Lagrange space S^{h,k} on a mesh. Vertex dofs come first, then
/// one dof per edge (k = 2). Coefficient vectors are full-length; constrained
/// (Dirichlet) dofs are eliminated from assembled systems.
#[derive(Clone, Debug)]
pub struct FeSpace<'m> {
    mesh: &'m Mesh,
    basis: LocalBasis,
    element_dofs: Vec<[usize; 6]>,
    dof_coords: Vec<[f64; 2]>,
    dirichlet: Vec<bool>,
    free_index: Vec<usize>,
    free_dofs: Vec<usize>,
}

impl<'m> FeSpace<'m> {
    pub fn new(mesh: &'m Mesh, degree: usize) -> Result<Self> {
        if !(1..=2).contains(&degree) {
            return Err(Error::InvalidArgument(format!("unsupported polynomial degree {degree}")));
        }
        let nv = mesh.n_vertices();
        let n_dofs = if degree == 1 { nv } else { nv + mesh.n_edges() };
        let mut dof_coords: Vec<[f64; 2]> = mesh.vertices().iter().map(|v| v.coords()).collect();
        let mut dirichlet = vec![false; n_dofs];
        if degree == 2 {
            for edge in mesh.edges() {
                let [a, b] = edge.vertices.map(|v| mesh.vertices()[v]);
                dof_coords.push([0.5 * (a.x + b.x), 0.5 * (a.y + b.y)]);
            }
        }
        for (id, edge) in mesh.edges().iter().enumerate() {
            if edge.marker.is_some() {
                dirichlet[edge.vertices[0]] = true;
                dirichlet[edge.vertices[1]] = true;
                if degree == 2 {
                    dirichlet[nv + id] = true;
                }
            }
        }
        let element_dofs = (0..mesh.n_elements())
            .map(|t| {
                let v = mesh.elements()[t].vertices;
                let e = mesh.element_edges(t);
                if degree == 1 {
                    [v[0], v[1], v[2], NONE, NONE, NONE]
                } else {
                    [v[0], v[1], v[2], nv + e[0], nv + e[1], nv + e[2]]
                }
            })
            .collect();
        let mut free_index = vec![NONE; n_dofs];
        let mut free_dofs = Vec::new();
        for d in 0..n_dofs {
            if !dirichlet[d] {
                free_index[d] = free_dofs.len();
                free_dofs.push(d);
            }
        }
        Ok(Self {
            mesh,
            basis: LocalBasis { degree },
            element_dofs,
            dof_coords,
            dirichlet,
            free_index,
            free_dofs,
        })
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    pub fn degree(&self) -> usize {
        self.basis.degree
    }

    pub fn basis(&self) -> LocalBasis {
        self.basis
    }

    pub fn n_dofs(&self) -> usize {
        self.dof_coords.len()
    }

    pub fn n_free(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn dof_coords(&self) -> &[[f64; 2]] {
        &self.dof_coords
    }

    pub fn is_dirichlet(&self, dof: usize) -> bool {
        self.dirichlet[dof]
    }

    pub fn dirichlet_dofs(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_dofs()).filter(|&d| self.dirichlet[d])
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free_dofs
    }

    /// Free-system index of `dof`, if it is not constrained.
    pub fn free_index(&self, dof: usize) -> Option<usize> {
        let i = self.free_index[dof];
        (i != NONE).then_some(i)
    }

    pub fn element_dofs(&self, t: usize) -> &[usize] {
        &self.element_dofs[t][..self.basis.len()]
    }

    pub fn geometry(&self, t: usize) -> ElementGeometry {
        ElementGeometry::new(self.mesh.element_coords(t))
    }

    /// Full-length vector from free-dof values (constrained dofs set to zero).
    pub fn extend(&self, free: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_dofs()];
        for (i, &d) in self.free_dofs.iter().enumerate() {
            full[d] = free[i];
        }
        full
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free_dofs.iter().map(|&d| full[d]).collect()
    }

    pub fn apply_dirichlet(&self, full: &mut [f64]) {
        for (v, &c) in full.iter_mut().zip(&self.dirichlet) {
            if c {
                *v = 0.0;
            }
        }
    }

    pub(crate) fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n_dofs() {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for a space with {} dofs",
                v.len(),
                self.n_dofs()
            )));
        }
        Ok(())
    }

    /// Value and gradient of the finite element function `u` at barycentric
    /// point `bary` of element `t`.
    pub fn eval_local(&self, u: &[f64], t: usize, geo: &ElementGeometry, bary: [f64; 3]) -> (f64, [f64; 2]) {
        let vals = self.basis.values(bary);
        let grads = self.basis.gradients(bary, &geo.grad_bary);
        let mut value = 0.0;
        let mut grad = [0.0; 2];
        for (k, &d) in self.element_dofs(t).iter().enumerate() {
            value += u[d] * vals[k];
            grad[0] += u[d] * grads[k][0];
            grad[1] += u[d] * grads[k][1];
        }
        (value, grad)
    }
}
