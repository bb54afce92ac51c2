//! Conforming triangulations with newest-vertex bisection.
//!
//! Local edge `e` of an element is the edge opposite local vertex `e`. The
//! refinement edge of every element produced by bisection is edge 0, i.e. the
//! newest vertex is stored in local slot 0.

mod io;
mod refine;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use io::MeshJson;
pub use refine::RefineResult;

/// Marker attached to Dirichlet boundary edges when the input does not supply one.
pub const DIRICHLET: i32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub x: f64,
    pub y: f64,
}

impl Vertex {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn coords(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    fn midpoint(&self, other: &Vertex) -> Vertex {
        Vertex::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Element {
    pub vertices: [usize; 3],
    /// Local index of the edge to bisect (the edge opposite that local vertex).
    pub refinement_edge: u8,
    pub generation: u32,
    pub region_tag: i32,
}

impl Element {
    pub fn new(vertices: [usize; 3]) -> Self {
        Self {
            vertices,
            refinement_edge: 0,
            generation: 0,
            region_tag: 0,
        }
    }

    /// Global vertex pair of local edge `e` (opposite local vertex `e`).
    pub fn edge(&self, e: usize) -> (usize, usize) {
        (self.vertices[(e + 1) % 3], self.vertices[(e + 2) % 3])
    }

    pub fn refinement_edge_key(&self) -> (usize, usize) {
        let (a, b) = self.edge(self.refinement_edge as usize);
        edge_key(a, b)
    }
}

/// One mesh edge with its (one or two) owning elements and local edge indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    /// Sorted global vertex indices.
    pub vertices: [usize; 2],
    pub owners: [Option<(usize, u8)>; 2],
    pub marker: Option<i32>,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.owners[1].is_none()
    }
}

pub(crate) fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Conforming triangulation of a polygon.
#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Vertex>,
    elements: Vec<Element>,
    edges: Vec<Edge>,
    element_edges: Vec<[usize; 3]>,
    edge_index: HashMap<(usize, usize), usize>,
}

fn signed_area(p: &[Vertex; 3]) -> f64 {
    0.5 * ((p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[2].x - p[0].x) * (p[1].y - p[0].y))
}

fn dist(a: &Vertex, b: &Vertex) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

impl Mesh {
    /// Builds a mesh from raw arrays, assigning a compatible initial
    /// refinement-edge labeling.
    ///
    /// `boundary` must list exactly the edges owned by a single triangle; every
    /// listed edge is a Dirichlet edge.
    pub fn build_initial(
        vertices: &[[f64; 2]],
        triangles: &[[usize; 3]],
        boundary: &[[usize; 2]],
    ) -> Result<Mesh> {
        let tags = vec![0; triangles.len()];
        Self::build_initial_tagged(vertices, triangles, &tags, boundary)
    }

    pub fn build_initial_tagged(
        vertices: &[[f64; 2]],
        triangles: &[[usize; 3]],
        region_tags: &[i32],
        boundary: &[[usize; 2]],
    ) -> Result<Mesh> {
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("no elements".into()));
        }
        if region_tags.len() != triangles.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} region tags for {} elements",
                region_tags.len(),
                triangles.len()
            )));
        }
        let verts: Vec<Vertex> = vertices.iter().map(|p| Vertex::new(p[0], p[1])).collect();
        if let Some(i) = verts.iter().position(|v| !v.x.is_finite() || !v.y.is_finite()) {
            return Err(Error::InvalidMesh(format!("vertex {i} has non-finite coordinates")));
        }
        let mut elements = Vec::with_capacity(triangles.len());
        for (t, (tri, &tag)) in triangles.iter().zip(region_tags).enumerate() {
            if tri.iter().any(|&v| v >= verts.len()) {
                return Err(Error::InvalidMesh(format!("element {t} references a missing vertex")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("element {t} repeats a vertex")));
            }
            let mut el = Element::new(*tri);
            el.region_tag = tag;
            el.refinement_edge = longest_edge(&verts, &el) as u8;
            elements.push(el);
        }

        let mut boundary_map = BTreeMap::new();
        for b in boundary {
            if b[0] >= verts.len() || b[1] >= verts.len() || b[0] == b[1] {
                return Err(Error::InvalidMesh(format!("invalid boundary edge {b:?}")));
            }
            boundary_map.insert(edge_key(b[0], b[1]), DIRICHLET);
        }

        let mesh = Mesh::from_parts(verts, elements, boundary_map)?;
        mesh.check_no_hanging_vertices()?;
        mesh.repair_labeling()
    }

    /// Assembles adjacency and validates orientation and edge ownership.
    pub(crate) fn from_parts(
        vertices: Vec<Vertex>,
        elements: Vec<Element>,
        boundary: BTreeMap<(usize, usize), i32>,
    ) -> Result<Mesh> {
        for (t, el) in elements.iter().enumerate() {
            let p = el.vertices.map(|v| vertices[v]);
            let area = signed_area(&p);
            let scale = dist(&p[0], &p[1]).max(dist(&p[1], &p[2])).max(dist(&p[2], &p[0]));
            if !(area > 1e-14 * scale * scale) {
                return Err(Error::DegenerateElement(t));
            }
            if el.refinement_edge > 2 {
                return Err(Error::InvalidMesh(format!("element {t} has refinement edge {}", el.refinement_edge)));
            }
        }

        let mut edge_index: HashMap<(usize, usize), usize> = HashMap::with_capacity(elements.len() * 2);
        let mut edges: Vec<Edge> = Vec::with_capacity(elements.len() * 2);
        let mut element_edges = Vec::with_capacity(elements.len());
        for (t, el) in elements.iter().enumerate() {
            let mut local = [0; 3];
            for (e, slot) in local.iter_mut().enumerate() {
                let (a, b) = el.edge(e);
                let key = edge_key(a, b);
                let id = *edge_index.entry(key).or_insert_with(|| {
                    edges.push(Edge {
                        vertices: [key.0, key.1],
                        owners: [None, None],
                        marker: None,
                    });
                    edges.len() - 1
                });
                let edge = &mut edges[id];
                if edge.owners[0].is_none() {
                    edge.owners[0] = Some((t, e as u8));
                } else if edge.owners[1].is_none() {
                    edge.owners[1] = Some((t, e as u8));
                } else {
                    return Err(Error::InvalidMesh(format!(
                        "edge ({}, {}) is shared by more than two elements",
                        key.0, key.1
                    )));
                }
                *slot = id;
            }
            element_edges.push(local);
        }

        for (&key, &marker) in &boundary {
            match edge_index.get(&key) {
                Some(&id) if edges[id].is_boundary() => edges[id].marker = Some(marker),
                Some(_) => {
                    return Err(Error::InvalidMesh(format!(
                        "boundary edge ({}, {}) is interior",
                        key.0, key.1
                    )))
                }
                None => {
                    return Err(Error::InvalidMesh(format!(
                        "boundary edge ({}, {}) is not an element edge",
                        key.0, key.1
                    )))
                }
            }
        }
        if let Some(edge) = edges.iter().find(|e| e.is_boundary() && e.marker.is_none()) {
            return Err(Error::InvalidMesh(format!(
                "open boundary: edge ({}, {}) has one owner but is not a boundary edge",
                edge.vertices[0], edge.vertices[1]
            )));
        }

        Ok(Mesh {
            vertices,
            elements,
            edges,
            element_edges,
            edge_index,
        })
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Global edge ids of the three local edges of element `t`.
    pub fn element_edges(&self, t: usize) -> [usize; 3] {
        self.element_edges[t]
    }

    pub fn edge_id(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_index.get(&edge_key(a, b)).copied()
    }

    pub fn boundary_edges(&self) -> BTreeMap<(usize, usize), i32> {
        self.edges
            .iter()
            .filter_map(|e| e.marker.map(|m| ((e.vertices[0], e.vertices[1]), m)))
            .collect()
    }

    pub fn element_coords(&self, t: usize) -> [[f64; 2]; 3] {
        self.elements[t].vertices.map(|v| self.vertices[v].coords())
    }

    pub fn element_area(&self, t: usize) -> f64 {
        signed_area(&self.elements[t].vertices.map(|v| self.vertices[v]))
    }

    /// Element diameter (longest edge).
    pub fn element_diameter(&self, t: usize) -> f64 {
        let p = self.elements[t].vertices.map(|v| self.vertices[v]);
        dist(&p[0], &p[1]).max(dist(&p[1], &p[2])).max(dist(&p[2], &p[0]))
    }

    pub fn edge_length(&self, edge: usize) -> f64 {
        let [a, b] = self.edges[edge].vertices;
        dist(&self.vertices[a], &self.vertices[b])
    }

    pub fn area(&self) -> f64 {
        (0..self.n_elements()).map(|t| self.element_area(t)).sum()
    }

    /// Neighbor across local edge `e` of element `t`.
    pub fn neighbor(&self, t: usize, e: usize) -> Option<usize> {
        let edge = &self.edges[self.element_edges[t][e]];
        match edge.owners {
            [Some((a, _)), Some((b, _))] => Some(if a == t { b } else { a }),
            _ => None,
        }
    }

    /// `t` together with every element sharing an edge with it.
    pub fn element_patch(&self, t: usize) -> Result<BTreeSet<usize>> {
        if t >= self.n_elements() {
            return Err(Error::InvalidElement(t));
        }
        let mut patch = BTreeSet::from([t]);
        patch.extend((0..3).filter_map(|e| self.neighbor(t, e)));
        Ok(patch)
    }

    /// Max over elements of diameter / inscribed-circle diameter.
    pub fn shape_regularity(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (t, el) in self.elements.iter().enumerate() {
            let p = el.vertices.map(|v| self.vertices[v]);
            let lens = [dist(&p[1], &p[2]), dist(&p[2], &p[0]), dist(&p[0], &p[1])];
            let area = signed_area(&p);
            let perimeter: f64 = lens.iter().sum();
            if !(area > 0.0) || !perimeter.is_finite() {
                return Err(Error::DegenerateElement(t));
            }
            let inradius = 2.0 * area / perimeter;
            let diameter = lens[0].max(lens[1]).max(lens[2]);
            worst = worst.max(diameter / (2.0 * inradius));
        }
        Ok(worst)
    }

    /// Edge-ownership scan: every edge has one or two owners, single-owner edges
    /// are exactly the boundary edges, and every element is positively oriented.
    pub fn check_conformity(&self) -> Result<()> {
        for t in 0..self.n_elements() {
            if !(self.element_area(t) > 0.0) {
                return Err(Error::DegenerateElement(t));
            }
        }
        for edge in &self.edges {
            if edge.owners[0].is_none() {
                return Err(Error::InvalidMesh(format!("orphan edge {:?}", edge.vertices)));
            }
            if edge.is_boundary() != edge.marker.is_some() {
                return Err(Error::InvalidMesh(format!(
                    "edge {:?} ownership does not match boundary marking",
                    edge.vertices
                )));
            }
        }
        let mut degree = vec![0usize; self.n_vertices()];
        for edge in self.edges.iter().filter(|e| e.is_boundary()) {
            degree[edge.vertices[0]] += 1;
            degree[edge.vertices[1]] += 1;
        }
        if let Some(v) = degree.iter().position(|d| d % 2 == 1) {
            return Err(Error::InvalidMesh(format!("boundary is not closed at vertex {v}")));
        }
        Ok(())
    }

    /// A boundary vertex lying strictly inside another boundary edge is a hanging vertex.
    fn check_no_hanging_vertices(&self) -> Result<()> {
        self.check_conformity()?;
        let boundary: Vec<&Edge> = self.edges.iter().filter(|e| e.is_boundary()).collect();
        let boundary_vertices: BTreeSet<usize> = boundary.iter().flat_map(|e| e.vertices).collect();
        for edge in &boundary {
            let a = self.vertices[edge.vertices[0]];
            let b = self.vertices[edge.vertices[1]];
            let len = dist(&a, &b);
            for &v in &boundary_vertices {
                if edge.vertices.contains(&v) {
                    continue;
                }
                let p = self.vertices[v];
                let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
                let along = ((p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y)) / (len * len);
                if cross.abs() <= 1e-12 * len * len && along > 1e-12 && along < 1.0 - 1e-12 {
                    return Err(Error::InvalidMesh(format!(
                        "hanging vertex {v} on edge {:?}",
                        edge.vertices
                    )));
                }
            }
        }
        Ok(())
    }

    /// Repairs cycles in the refinement-edge dependency graph, then checks that
    /// a full sweep of bisections terminates. Falls back to a barycentric split
    /// (which yields matched refinement edges) when it does not.
    fn repair_labeling(mut self) -> Result<Mesh> {
        loop {
            match self.find_dependency_cycle() {
                None => break,
                Some(cycle) => {
                    // cycle[i] -> cycle[i + 1]: the refinement edge of cycle[i] is shared
                    // with cycle[i + 1] but is not its refinement edge.
                    let (pos, &first) = cycle.iter().enumerate().min_by_key(|(_, &t)| t).unwrap();
                    let pred = cycle[(pos + cycle.len() - 1) % cycle.len()];
                    let shared = self.elements[pred].refinement_edge_key();
                    let el = &mut self.elements[first];
                    let e = (0..3)
                        .find(|&e| {
                            let (a, b) = el.edge(e);
                            edge_key(a, b) == shared
                        })
                        .expect("dependency edge must be shared");
                    el.refinement_edge = e as u8;
                }
            }
        }
        let all: BTreeSet<usize> = (0..self.n_elements()).collect();
        match self.refine(&all, 1) {
            Ok(_) => Ok(self),
            Err(Error::RefinementFailed(_)) => {
                log::warn!("initial labeling is not compatible; splitting elements at their barycenters");
                self.barycentric_split()
            }
            Err(e) => Err(e),
        }
    }

    fn dependency(&self, t: usize) -> Option<usize> {
        let el = &self.elements[t];
        let key = el.refinement_edge_key();
        let n = self.neighbor(t, el.refinement_edge as usize)?;
        (self.elements[n].refinement_edge_key() != key).then_some(n)
    }

    fn find_dependency_cycle(&self) -> Option<Vec<usize>> {
        // 0 = unvisited, 1 = on current path, 2 = done
        let mut state = vec![0u8; self.n_elements()];
        for start in 0..self.n_elements() {
            let mut path = Vec::new();
            let mut cur = Some(start);
            while let Some(t) = cur {
                match state[t] {
                    0 => {
                        state[t] = 1;
                        path.push(t);
                        cur = self.dependency(t);
                    }
                    1 => {
                        let pos = path.iter().position(|&p| p == t).unwrap();
                        return Some(path[pos..].to_vec());
                    }
                    _ => break,
                }
            }
            for t in path {
                state[t] = 2;
            }
        }
        None
    }

    fn barycentric_split(&self) -> Result<Mesh> {
        let mut vertices = self.vertices.clone();
        let mut elements = Vec::with_capacity(3 * self.n_elements());
        for el in &self.elements {
            let p = el.vertices.map(|v| self.vertices[v]);
            vertices.push(Vertex::new((p[0].x + p[1].x + p[2].x) / 3.0, (p[0].y + p[1].y + p[2].y) / 3.0));
            let g = vertices.len() - 1;
            for e in 0..3 {
                let (a, b) = el.edge(e);
                elements.push(Element {
                    vertices: [g, a, b],
                    refinement_edge: 0,
                    generation: el.generation,
                    region_tag: el.region_tag,
                });
            }
        }
        Mesh::from_parts(vertices, elements, self.boundary_edges())
    }

    /// `rounds` uniform refinements; each round bisects every element twice.
    pub fn refine_uniform(&self, rounds: usize) -> Result<Mesh> {
        let mut mesh = self.clone();
        for _ in 0..rounds {
            let all: BTreeSet<usize> = (0..mesh.n_elements()).collect();
            mesh = mesh.refine(&all, 2)?.mesh;
        }
        Ok(mesh)
    }

    /// Bisects a single element (with conforming completion).
    pub fn bisect(&self, element: usize) -> Result<Mesh> {
        if element >= self.n_elements() {
            return Err(Error::InvalidElement(element));
        }
        Ok(self.refine(&BTreeSet::from([element]), 1)?.mesh)
    }

    /// Locates the element containing `p`, walking from `hint`. Returns the
    /// element and barycentric coordinates.
    pub fn locate(&self, p: [f64; 2], hint: usize) -> Option<(usize, [f64; 3])> {
        const TOL: f64 = 1e-12;
        let mut t = hint.min(self.n_elements().saturating_sub(1));
        for _ in 0..self.n_elements() {
            let bary = self.barycentric(t, p);
            let (worst, &lowest) = bary
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .unwrap();
            if lowest >= -TOL {
                return Some((t, bary));
            }
            match self.neighbor(t, worst) {
                Some(n) => t = n,
                None => break,
            }
        }
        (0..self.n_elements()).find_map(|t| {
            let bary = self.barycentric(t, p);
            bary.iter().all(|&l| l >= -TOL).then_some((t, bary))
        })
    }

    pub fn barycentric(&self, t: usize, p: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.element_coords(t);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
        let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
        [1.0 - l1 - l2, l1, l2]
    }
}

/// Longest edge, ties broken by lowest local index.
fn longest_edge(vertices: &[Vertex], el: &Element) -> usize {
    let mut best = 0;
    let mut best_len = -1.0;
    for e in 0..3 {
        let (a, b) = el.edge(e);
        let len = dist(&vertices[a], &vertices[b]);
        if len > best_len * (1.0 + 1e-12) {
            best = e;
            best_len = len;
        }
    }
    best
}
