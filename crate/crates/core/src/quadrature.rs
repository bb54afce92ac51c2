//! Quadrature on the reference triangle {(ξ, η): ξ, η ≥ 0, ξ + η ≤ 1} and on [0, 1].

use std::sync::OnceLock;

/// Points are reference coordinates (ξ, η); weights sum to the reference area 1/2.
#[derive(Clone, Debug)]
pub struct TriangleRule {
    pub degree: usize,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Barycentric coordinates (1 − ξ − η, ξ, η) of every point.
    pub fn barycentric(&self) -> impl Iterator<Item = ([f64; 3], f64)> + '_ {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, &w)| ([1.0 - p[0] - p[1], p[0], p[1]], w))
    }

    /// The rule replicated on the 4^levels congruent sub-triangles of midpoint subdivision.
    pub fn subdivided(&self, levels: u32) -> TriangleRule {
        let mut tris = vec![[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]];
        for _ in 0..levels {
            tris = tris
                .into_iter()
                .flat_map(|[a, b, c]| {
                    let mid = |p: [f64; 2], q: [f64; 2]| [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
                    let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
                    [[a, ab, ca], [ab, b, bc], [ca, bc, c], [bc, ca, ab]]
                })
                .collect();
        }
        let mut points = Vec::with_capacity(tris.len() * self.len());
        let mut weights = Vec::with_capacity(tris.len() * self.len());
        for [a, b, c] in tris {
            let det = ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs();
            for (p, &w) in self.points.iter().zip(&self.weights) {
                points.push([
                    a[0] + (b[0] - a[0]) * p[0] + (c[0] - a[0]) * p[1],
                    a[1] + (b[1] - a[1]) * p[0] + (c[1] - a[1]) * p[1],
                ]);
                weights.push(w * det);
            }
        }
        TriangleRule {
            degree: self.degree,
            points,
            weights,
        }
    }
}

fn symmetric_rule(degree: usize, orbits: &[(f64, &[f64])]) -> TriangleRule {
    // each orbit: (weight on the unit-area triangle, barycentric generator of length 1, 2 or 3)
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for &(w, gen) in orbits {
        let bary: Vec<[f64; 3]> = match gen.len() {
            1 => vec![[1.0 / 3.0; 3]],
            2 => {
                let (a, b) = (gen[0], gen[1]);
                vec![[a, a, b], [a, b, a], [b, a, a]]
            }
            _ => {
                let (a, b, c) = (gen[0], gen[1], gen[2]);
                vec![[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]]
            }
        };
        for l in bary {
            points.push([l[1], l[2]]);
            weights.push(0.5 * w);
        }
    }
    TriangleRule { degree, points, weights }
}

/// Collapsed (Duffy) Gauss–Legendre product rule, exact to degree 2n − 2.
pub fn collapsed_rule(n: usize) -> TriangleRule {
    let (x, w) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let u = x[i];
            let v = x[j];
            points.push([u, v * (1.0 - u)]);
            weights.push(w[i] * w[j] * (1.0 - u));
        }
    }
    TriangleRule {
        degree: 2 * n - 2,
        points,
        weights,
    }
}

/// A rule exact for polynomials of total degree ≤ `degree`.
pub fn triangle_rule(degree: usize) -> &'static TriangleRule {
    static RULES: OnceLock<Vec<TriangleRule>> = OnceLock::new();
    let rules = RULES.get_or_init(|| {
        let mut rules = vec![
            symmetric_rule(1, &[(1.0, &[1.0 / 3.0])]),
            symmetric_rule(2, &[(1.0 / 3.0, &[1.0 / 6.0, 2.0 / 3.0])]),
            symmetric_rule(
                4,
                &[
                    (0.223381589678011, &[0.445948490915965, 0.108103018168070]),
                    (0.109951743655322, &[0.091576213509771, 0.816847572980459]),
                ],
            ),
            symmetric_rule(
                5,
                &[
                    (0.225, &[1.0 / 3.0]),
                    (0.132394152788506, &[0.470142064105115, 0.059715871789770]),
                    (0.125939180544827, &[0.101286507323456, 0.797426985353087]),
                ],
            ),
            symmetric_rule(
                6,
                &[
                    (0.116786275726379, &[0.249286745170910, 0.501426509658179]),
                    (0.050844906370207, &[0.063089014491502, 0.873821971016996]),
                    (0.082851075618374, &[0.053145049844817, 0.310352451033784, 0.636502499121399]),
                ],
            ),
        ];
        for n in 5..=8 {
            rules.push(collapsed_rule(n));
        }
        rules
    });
    rules
        .iter()
        .find(|r| r.degree >= degree)
        .unwrap_or_else(|| rules.last().unwrap())
}

/// Gauss–Legendre nodes and weights on [0, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = 0.5 * (1.0 - z);
        w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Shifted Legendre polynomials on [0, 1] up to degree `n`, evaluated at `s`.
/// They are orthogonal with ∫ P_j² = 1 / (2j + 1).
pub fn shifted_legendre(n: usize, s: f64) -> Vec<f64> {
    let t = 2.0 * s - 1.0;
    let mut p = vec![1.0; n + 1];
    if n >= 1 {
        p[1] = t;
    }
    for k in 2..=n {
        p[k] = ((2 * k - 1) as f64 * t * p[k - 1] - (k - 1) as f64 * p[k - 2]) / k as f64;
    }
    p
}
