use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Mesh;
use crate::Result;

/// Mesh exchange format with 0-based indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshJson {
    pub vertices: Vec<[f64; 2]>,
    pub elements: Vec<[usize; 3]>,
    pub boundary: Vec<[usize; 2]>,
}

impl MeshJson {
    pub fn into_mesh(self) -> Result<Mesh> {
        Mesh::build_initial(&self.vertices, &self.elements, &self.boundary)
    }
}

impl Mesh {
    pub fn to_json(&self) -> MeshJson {
        MeshJson {
            vertices: self.vertices.iter().map(|v| v.coords()).collect(),
            elements: self.elements.iter().map(|e| e.vertices).collect(),
            boundary: self
                .boundary_edges()
                .keys()
                .map(|&(a, b)| [a, b])
                .collect(),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Mesh> {
        serde_json::from_str::<MeshJson>(s)?.into_mesh()
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Mesh> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(&self.to_json())?)?;
        Ok(())
    }

    /// Legacy ASCII VTK unstructured grid. `cell_data` entries are written as
    /// scalar cell fields.
    pub fn to_vtk(&self, cell_data: &[(&str, &[f64])]) -> String {
        let mut out = String::new();
        out.push_str("# vtk DataFile Version 3.0\nafem mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n");
        let _ = writeln!(out, "POINTS {} double", self.n_vertices());
        for v in &self.vertices {
            let _ = writeln!(out, "{} {} 0", v.x, v.y);
        }
        let n = self.n_elements();
        let _ = writeln!(out, "CELLS {} {}", n, 4 * n);
        for el in &self.elements {
            let [a, b, c] = el.vertices;
            let _ = writeln!(out, "3 {a} {b} {c}");
        }
        let _ = writeln!(out, "CELL_TYPES {n}");
        for _ in 0..n {
            out.push_str("5\n");
        }
        let _ = writeln!(out, "CELL_DATA {n}");
        out.push_str("SCALARS generation int 1\nLOOKUP_TABLE default\n");
        for el in &self.elements {
            let _ = writeln!(out, "{}", el.generation);
        }
        for (name, values) in cell_data {
            let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for v in values.iter() {
                let _ = writeln!(out, "{v}");
            }
        }
        out
    }

    pub fn write_vtk(&self, path: impl AsRef<Path>, cell_data: &[(&str, &[f64])]) -> Result<()> {
        std::fs::write(path, self.to_vtk(cell_data))?;
        Ok(())
    }
}
