use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{edge_key, Element, Mesh, Vertex};
use crate::{Error, Result};

const NONE: usize = usize::MAX;

#[derive(Clone, Debug)]
pub struct RefineResult {
    pub mesh: Mesh,
    /// Ids (in the old mesh) of elements that no longer exist.
    pub refined_set: BTreeSet<usize>,
    /// For every element of the new mesh, the id of the old element containing
    /// it (itself, for elements that were not refined).
    pub parent_map: Vec<usize>,
}

struct Node {
    el: Element,
    alive: bool,
    origin: usize,
    target_generation: Option<u32>,
}

/// Mutable working copy of a mesh during bisection.
struct Forest {
    vertices: Vec<Vertex>,
    nodes: Vec<Node>,
    owners: HashMap<(usize, usize), [usize; 2]>,
    boundary: BTreeMap<(usize, usize), i32>,
    step_cap: usize,
}

impl Forest {
    fn new(mesh: &Mesh) -> Self {
        let nodes = mesh
            .elements
            .iter()
            .enumerate()
            .map(|(t, &el)| Node {
                el,
                alive: true,
                origin: t,
                target_generation: None,
            })
            .collect();
        let owners = mesh
            .edges
            .iter()
            .map(|e| {
                let o = e.owners.map(|o| o.map_or(NONE, |(t, _)| t));
                ((e.vertices[0], e.vertices[1]), o)
            })
            .collect();
        let max_generation = mesh.elements.iter().map(|e| e.generation).max().unwrap_or(0) as usize;
        Self {
            vertices: mesh.vertices.clone(),
            nodes,
            owners,
            boundary: mesh.boundary_edges(),
            step_cap: 4 * (max_generation + 64) + mesh.n_elements(),
        }
    }

    fn other_owner(&self, key: (usize, usize), t: usize) -> Option<usize> {
        let o = self.owners.get(&key)?;
        let other = if o[0] == t { o[1] } else { o[0] };
        (other != NONE).then_some(other)
    }

    fn detach(&mut self, key: (usize, usize), t: usize) {
        if let Some(o) = self.owners.get_mut(&key) {
            if o[0] == t {
                o[0] = o[1];
            }
            o[1] = NONE;
            if o[0] == NONE {
                self.owners.remove(&key);
            }
        }
    }

    fn attach(&mut self, a: usize, b: usize, t: usize) {
        let o = self.owners.entry(edge_key(a, b)).or_insert([NONE, NONE]);
        if o[0] == NONE {
            o[0] = t;
        } else {
            o[1] = t;
        }
    }

    fn midpoint(&mut self, key: (usize, usize)) -> usize {
        let m = self.vertices[key.0].midpoint(&self.vertices[key.1]);
        self.vertices.push(m);
        let id = self.vertices.len() - 1;
        if let Some(marker) = self.boundary.remove(&key) {
            self.boundary.insert(edge_key(key.0, id), marker);
            self.boundary.insert(edge_key(id, key.1), marker);
        }
        id
    }

    /// Replaces `t` by its two children across the refinement edge, using the
    /// existing midpoint vertex `m`.
    fn split(&mut self, t: usize, m: usize) {
        let node = &self.nodes[t];
        let el = node.el;
        let r = el.refinement_edge as usize;
        let p0 = el.vertices[r];
        let p1 = el.vertices[(r + 1) % 3];
        let p2 = el.vertices[(r + 2) % 3];
        let origin = node.origin;
        let target = node.target_generation;
        self.nodes[t].alive = false;

        for (a, b) in [(p0, p1), (p1, p2), (p2, p0)] {
            self.detach(edge_key(a, b), t);
        }
        let child = |vertices| Node {
            el: Element {
                vertices,
                refinement_edge: 0,
                generation: el.generation + 1,
                region_tag: el.region_tag,
            },
            alive: true,
            origin,
            target_generation: target,
        };
        let c1 = self.nodes.len();
        self.nodes.push(child([m, p0, p1]));
        let c2 = self.nodes.len();
        self.nodes.push(child([m, p2, p0]));
        self.attach(m, p0, c1);
        self.attach(p0, p1, c1);
        self.attach(p1, m, c1);
        self.attach(m, p2, c2);
        self.attach(p2, p0, c2);
        self.attach(p0, m, c2);
    }

    /// Bisects `t` and every element needed to keep the mesh conforming.
    fn bisect(&mut self, t: usize) -> Result<()> {
        let mut stack = vec![t];
        let mut steps = 0usize;
        while let Some(&cur) = stack.last() {
            if !self.nodes[cur].alive {
                stack.pop();
                continue;
            }
            steps += 1;
            if stack.len() > self.step_cap || steps > 64 * self.step_cap {
                return Err(Error::RefinementFailed(format!(
                    "completion chain from element {t} exceeded {} steps",
                    self.step_cap
                )));
            }
            let key = self.nodes[cur].el.refinement_edge_key();
            match self.other_owner(key, cur) {
                None => {
                    let m = self.midpoint(key);
                    self.split(cur, m);
                    stack.pop();
                }
                Some(n) if self.nodes[n].el.refinement_edge_key() == key => {
                    let m = self.midpoint(key);
                    self.split(cur, m);
                    self.split(n, m);
                    stack.pop();
                }
                Some(n) => stack.push(n),
            }
        }
        Ok(())
    }

    fn pending(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.alive && n.target_generation.is_some_and(|g| n.el.generation < g))
            .map(|(t, _)| t)
            .collect()
    }
}

impl Mesh {
    /// Bisects every marked element `bisections` times and completes the mesh
    /// to a conforming one.
    pub fn refine(&self, marked: &BTreeSet<usize>, bisections: u32) -> Result<RefineResult> {
        if let Some(&bad) = marked.iter().find(|&&t| t >= self.n_elements()) {
            return Err(Error::InvalidElement(bad));
        }
        if bisections == 0 {
            return Err(Error::InvalidArgument("number of bisections must be positive".into()));
        }
        if marked.is_empty() {
            return Ok(RefineResult {
                mesh: self.clone(),
                refined_set: BTreeSet::new(),
                parent_map: (0..self.n_elements()).collect(),
            });
        }

        let mut forest = Forest::new(self);
        for &t in marked {
            forest.nodes[t].target_generation = Some(self.elements[t].generation + bisections);
        }
        loop {
            let todo = forest.pending();
            if todo.is_empty() {
                break;
            }
            for t in todo {
                if forest.nodes[t].alive {
                    forest.bisect(t)?;
                }
            }
        }

        let n_old = self.n_elements();
        let refined_set = (0..n_old).filter(|&t| !forest.nodes[t].alive).collect();
        let mut elements = Vec::new();
        let mut parent_map = Vec::new();
        for node in forest.nodes.iter().filter(|n| n.alive) {
            elements.push(node.el);
            parent_map.push(node.origin);
        }
        let mesh = Mesh::from_parts(forest.vertices, elements, forest.boundary)?;
        Ok(RefineResult {
            mesh,
            refined_set,
            parent_map,
        })
    }
}
