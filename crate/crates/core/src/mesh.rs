//! Conforming triangulations of the unit square refined by newest-vertex
//! bisection.
//!
//! Every triangle stores its vertices as `[a, b, c]` where `c` is the newest
//! vertex, so the refinement edge is always `a-b` (local edge 2). Local edge
//! `i` is the edge opposite local vertex `i`.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Boundary condition type carried by a facet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FacetTag {
    Interior,
    Dirichlet,
    Neumann,
}

impl FacetTag {
    fn code(self) -> char {
        match self {
            FacetTag::Interior => 'I',
            FacetTag::Dirichlet => 'D',
            FacetTag::Neumann => 'N',
        }
    }

    fn from_code(c: &str) -> Option<Self> {
        match c {
            "I" => Some(FacetTag::Interior),
            "D" => Some(FacetTag::Dirichlet),
            "N" => Some(FacetTag::Neumann),
            _ => None,
        }
    }
}

/// An edge of the triangulation. `vertices` is sorted ascending, which also
/// fixes the global orientation of the facet.
#[derive(Clone, Debug, PartialEq)]
pub struct Facet {
    pub vertices: [usize; 2],
    pub triangles: [usize; 2],
    pub n_triangles: usize,
    pub tag: FacetTag,
}

impl Facet {
    pub fn is_boundary(&self) -> bool {
        self.n_triangles == 1
    }
}

/// Sides of the unit square.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
            Side::Bottom => 2,
            Side::Top => 3,
        }
    }

    fn endpoints(self) -> (Point, Point) {
        match self {
            Side::Left => ([0.0, 0.0], [0.0, 1.0]),
            Side::Right => ([1.0, 0.0], [1.0, 1.0]),
            Side::Bottom => ([0.0, 0.0], [1.0, 0.0]),
            Side::Top => ([0.0, 1.0], [1.0, 1.0]),
        }
    }

    fn contains(self, p: Point) -> bool {
        const EPS: f64 = 1e-12;
        match self {
            Side::Left => p[0].abs() < EPS,
            Side::Right => (p[0] - 1.0).abs() < EPS,
            Side::Bottom => p[1].abs() < EPS,
            Side::Top => (p[1] - 1.0).abs() < EPS,
        }
    }
}

/// A straight piece of the boundary given by its end points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundarySegment {
    pub start: Point,
    pub end: Point,
}

/// Splits the boundary of the unit square into a Neumann part (a union of
/// whole sides) and its closed complement, the Dirichlet part.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct BoundarySpec {
    neumann: [bool; 4],
}

impl BoundarySpec {
    /// Pure Dirichlet boundary.
    pub fn dirichlet() -> Self {
        Self::default()
    }

    pub fn with_neumann(sides: &[Side]) -> Self {
        let mut spec = Self::default();
        for s in sides {
            spec.neumann[s.index()] = true;
        }
        spec
    }

    /// Neumann part = `{0} x [0,1]`.
    pub fn left_neumann() -> Self {
        Self::with_neumann(&[Side::Left])
    }

    /// Builds the Neumann part from segments; each segment must coincide with
    /// a whole side of the square.
    pub fn from_segments(segments: &[BoundarySegment]) -> Result<Self> {
        let mut spec = Self::default();
        for seg in segments {
            let side = Side::ALL.iter().copied().find(|s| {
                let (a, b) = s.endpoints();
                (close(seg.start, a) && close(seg.end, b))
                    || (close(seg.start, b) && close(seg.end, a))
            });
            match side {
                Some(s) => spec.neumann[s.index()] = true,
                None => {
                    return Err(Error::Config(format!(
                        "Neumann segment {:?} -> {:?} is not a side of the unit square",
                        seg.start, seg.end
                    )))
                }
            }
        }
        Ok(spec)
    }

    /// Parses a comma separated list of side names (`left`, `right`,
    /// `bottom`, `top`), or `none`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() || text.eq_ignore_ascii_case("none") {
            return Ok(Self::default());
        }
        let mut sides = Vec::new();
        for name in text.split(',') {
            let side = match name.trim().to_ascii_lowercase().as_str() {
                "left" => Side::Left,
                "right" => Side::Right,
                "bottom" => Side::Bottom,
                "top" => Side::Top,
                other => {
                    return Err(Error::Config(format!("unknown boundary side `{other}`")));
                }
            };
            sides.push(side);
        }
        Ok(Self::with_neumann(&sides))
    }

    pub fn is_neumann(&self, side: Side) -> bool {
        self.neumann[side.index()]
    }

    pub fn neumann_sides(&self) -> Vec<Side> {
        Side::ALL
            .iter()
            .copied()
            .filter(|s| self.is_neumann(*s))
            .collect()
    }

    /// Tag of a boundary edge of the unit square.
    fn tag_of(&self, a: Point, b: Point) -> FacetTag {
        for side in Side::ALL {
            if side.contains(a) && side.contains(b) {
                return if self.is_neumann(side) {
                    FacetTag::Neumann
                } else {
                    FacetTag::Dirichlet
                };
            }
        }
        FacetTag::Dirichlet
    }
}

fn close(a: Point, b: Point) -> bool {
    (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12
}

/// Set of triangles selected for bisection.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MarkSet {
    indices: Vec<usize>,
}

impl MarkSet {
    pub fn new(mut indices: Vec<usize>, n_triangles: usize) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= n_triangles) {
            return Err(Error::OutOfRange {
                index: bad,
                len: n_triangles,
            });
        }
        indices.sort_unstable();
        indices.dedup();
        Ok(Self { indices })
    }

    pub fn all(n_triangles: usize) -> Self {
        Self {
            indices: (0..n_triangles).collect(),
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Immutable conforming triangulation with facet adjacency and tags.
#[derive(Clone, Debug)]
pub struct Triangulation {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    generations: Vec<u32>,
    facets: Vec<Facet>,
    triangle_facets: Vec<[usize; 3]>,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Local edge `i` of `[v0, v1, v2]`, traversed counter-clockwise.
pub fn local_edge(tri: &[usize; 3], i: usize) -> (usize, usize) {
    (tri[(i + 1) % 3], tri[(i + 2) % 3])
}

/// The unit square cut along both diagonals, with the center as newest
/// vertex of all four triangles.
pub fn initial_square_mesh(boundary: &BoundarySpec) -> Triangulation {
    let vertices = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]];
    let triangles = vec![[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]];
    let mut tags = HashMap::new();
    for (a, b) in [(0, 1), (1, 2), (2, 3), (3, 0)] {
        tags.insert(edge_key(a, b), boundary.tag_of(vertices[a], vertices[b]));
    }
    Triangulation::from_parts(vertices, triangles, vec![0; 4], &tags)
}

impl Triangulation {
    /// Builds facets and adjacency. `boundary_tags` must contain every
    /// boundary edge.
    fn from_parts(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        generations: Vec<u32>,
        boundary_tags: &HashMap<(usize, usize), FacetTag>,
    ) -> Self {
        let mut index: HashMap<(usize, usize), usize> = HashMap::with_capacity(triangles.len() * 2);
        let mut facets: Vec<Facet> = Vec::with_capacity(triangles.len() * 3 / 2 + 4);
        let mut triangle_facets = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut tf = [0usize; 3];
            for (i, slot) in tf.iter_mut().enumerate() {
                let (a, b) = local_edge(tri, i);
                let key = edge_key(a, b);
                let f = *index.entry(key).or_insert_with(|| {
                    facets.push(Facet {
                        vertices: [key.0, key.1],
                        triangles: [t, usize::MAX],
                        n_triangles: 0,
                        tag: FacetTag::Interior,
                    });
                    facets.len() - 1
                });
                let facet = &mut facets[f];
                if facet.n_triangles == 1 {
                    facet.triangles[1] = t;
                }
                facet.n_triangles += 1;
                *slot = f;
            }
            triangle_facets.push(tf);
        }
        for facet in facets.iter_mut() {
            if facet.n_triangles == 1 {
                let key = (facet.vertices[0], facet.vertices[1]);
                facet.tag = *boundary_tags
                    .get(&key)
                    .unwrap_or_else(|| panic!("boundary edge {key:?} has no tag"));
            }
        }
        Self {
            vertices,
            triangles,
            generations,
            facets,
            triangle_facets,
        }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    /// Facet indices of the three local edges of triangle `t`.
    pub fn triangle_facets(&self, t: usize) -> [usize; 3] {
        self.triangle_facets[t]
    }

    pub fn generation(&self, t: usize) -> u32 {
        self.generations[t]
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_facets(&self) -> usize {
        self.facets.len()
    }

    pub fn n_boundary_facets(&self) -> usize {
        self.facets.iter().filter(|f| f.is_boundary()).count()
    }

    pub fn count_tag(&self, tag: FacetTag) -> usize {
        self.facets.iter().filter(|f| f.tag == tag).count()
    }

    pub fn corners(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Signed area of triangle `t`.
    pub fn area(&self, t: usize) -> f64 {
        let [p0, p1, p2] = self.corners(t);
        0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.area(t)).sum()
    }

    /// `h_K = |K|^{1/2}` for every triangle.
    pub fn element_size(&self) -> Vec<f64> {
        (0..self.n_triangles())
            .map(|t| self.area(t).sqrt())
            .collect()
    }

    pub fn facet_length(&self, f: usize) -> f64 {
        let [a, b] = self.facets[f].vertices;
        let (p, q) = (self.vertices[a], self.vertices[b]);
        (q[0] - p[0]).hypot(q[1] - p[1])
    }

    /// Smallest interior angle over all triangles, in degrees.
    pub fn min_angle_degrees(&self) -> f64 {
        let mut min = f64::INFINITY;
        for t in 0..self.n_triangles() {
            let p = self.corners(t);
            for i in 0..3 {
                let o = p[i];
                let u = [p[(i + 1) % 3][0] - o[0], p[(i + 1) % 3][1] - o[1]];
                let v = [p[(i + 2) % 3][0] - o[0], p[(i + 2) % 3][1] - o[1]];
                let cos = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
                min = min.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        min
    }

    /// Checks orientation, conformity, tagging and the facet-count identity
    /// `3 #T = 2 #F - #boundary facets`.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for t in 0..self.n_triangles() {
            if self.area(t) <= 0.0 {
                return Err(format!(
                    "triangle {t} has non-positive area {}",
                    self.area(t)
                ));
            }
        }
        for (f, facet) in self.facets.iter().enumerate() {
            match facet.n_triangles {
                1 => {
                    if facet.tag == FacetTag::Interior {
                        return Err(format!("boundary facet {f} tagged interior"));
                    }
                }
                2 => {
                    if facet.tag != FacetTag::Interior {
                        return Err(format!("interior facet {f} tagged {:?}", facet.tag));
                    }
                }
                n => return Err(format!("facet {f} has {n} incident triangles")),
            }
        }
        // A hanging vertex would sit in the interior of some facet.
        let mut on_boundary = vec![false; self.n_vertices()];
        for facet in self.facets.iter().filter(|f| f.is_boundary()) {
            on_boundary[facet.vertices[0]] = true;
            on_boundary[facet.vertices[1]] = true;
        }
        for (v, p) in self.vertices.iter().enumerate() {
            let on_square = p[0].abs() < 1e-14
                || p[1].abs() < 1e-14
                || (p[0] - 1.0).abs() < 1e-14
                || (p[1] - 1.0).abs() < 1e-14;
            if on_boundary[v] != on_square {
                return Err(format!("vertex {v} at {p:?} breaks conformity"));
            }
        }
        let lhs = 3 * self.n_triangles();
        let rhs = 2 * self.n_facets() - self.n_boundary_facets();
        if lhs != rhs {
            return Err(format!(
                "facet count identity fails: 3#T = {lhs}, 2#F - #Fb = {rhs}"
            ));
        }
        Ok(())
    }

    /// Plain-text dump: `ntri nvert nfacet`, vertex lines, triangle lines
    /// (`a b c newest`), facet lines (`a b tag`).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {}",
            self.n_triangles(),
            self.n_vertices(),
            self.n_facets()
        );
        for p in &self.vertices {
            let _ = writeln!(out, "{:?} {:?}", p[0], p[1]);
        }
        for tri in &self.triangles {
            let _ = writeln!(out, "{} {} {} 2", tri[0], tri[1], tri[2]);
        }
        for f in &self.facets {
            let _ = writeln!(out, "{} {} {}", f.vertices[0], f.vertices[1], f.tag.code());
        }
        out
    }

    /// Parses the format written by [`Triangulation::to_text`]. The newest
    /// vertex position may be any of 0, 1, 2.
    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidInput(format!("mesh dump: {msg}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<usize> = lines
            .next()
            .ok_or_else(|| bad("empty input"))?
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| bad("bad header")))
            .collect::<Result<_>>()?;
        let [nt, nv, nf] = header[..] else {
            return Err(bad("header must have three fields"));
        };
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let l = lines.next().ok_or_else(|| bad("missing vertex line"))?;
            let xy: Vec<f64> = l
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| bad("bad coordinate")))
                .collect::<Result<_>>()?;
            if xy.len() != 2 {
                return Err(bad("vertex line needs two coordinates"));
            }
            vertices.push([xy[0], xy[1]]);
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let l = lines.next().ok_or_else(|| bad("missing triangle line"))?;
            let v: Vec<usize> = l
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| bad("bad triangle index")))
                .collect::<Result<_>>()?;
            if v.len() != 4 || v[3] > 2 || v[..3].iter().any(|&i| i >= nv) {
                return Err(bad("malformed triangle line"));
            }
            // rotate so the newest vertex comes last; rotation keeps orientation
            let k = v[3];
            triangles.push([v[(k + 1) % 3], v[(k + 2) % 3], v[k]]);
        }
        let mut tags = HashMap::new();
        for _ in 0..nf {
            let l = lines.next().ok_or_else(|| bad("missing facet line"))?;
            let parts: Vec<&str> = l.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(bad("malformed facet line"));
            }
            let a: usize = parts[0].parse().map_err(|_| bad("bad facet index"))?;
            let b: usize = parts[1].parse().map_err(|_| bad("bad facet index"))?;
            let tag = FacetTag::from_code(parts[2]).ok_or_else(|| bad("bad facet tag"))?;
            if tag != FacetTag::Interior {
                tags.insert(edge_key(a, b), tag);
            }
        }
        let mesh = Self::from_parts(vertices, triangles, vec![0; nt], &tags);
        if mesh.n_facets() != nf {
            return Err(bad("facet count does not match triangles"));
        }
        Ok(mesh)
    }
}

/// Newest-vertex bisection of the marked triangles, followed by the closure
/// that restores conformity.
pub fn bisect(mesh: &Triangulation, marked: &MarkSet) -> Triangulation {
    if marked.is_empty() {
        return mesh.clone();
    }
    let nf = mesh.n_facets();
    let mut split = vec![false; nf];
    for &t in marked.indices() {
        split[mesh.triangle_facets[t][2]] = true;
    }
    // closure: any triangle with a split edge must split its refinement edge
    loop {
        let mut changed = false;
        for tf in &mesh.triangle_facets {
            if (split[tf[0]] || split[tf[1]]) && !split[tf[2]] {
                split[tf[2]] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut vertices = mesh.vertices.clone();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut tags: HashMap<(usize, usize), FacetTag> = HashMap::new();
    for (f, facet) in mesh.facets.iter().enumerate() {
        let [a, b] = facet.vertices;
        if split[f] {
            let (p, q) = (vertices[a], vertices[b]);
            vertices.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
            let m = vertices.len() - 1;
            midpoint.insert((a, b), m);
            if facet.is_boundary() {
                tags.insert(edge_key(a, m), facet.tag);
                tags.insert(edge_key(m, b), facet.tag);
            }
        } else if facet.is_boundary() {
            tags.insert((a, b), facet.tag);
        }
    }

    let mut triangles = Vec::with_capacity(mesh.n_triangles() * 2);
    let mut generations = Vec::with_capacity(mesh.n_triangles() * 2);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        refine_recursive(
            *tri,
            mesh.generations[t],
            &midpoint,
            &mut triangles,
            &mut generations,
        );
    }
    Triangulation::from_parts(vertices, triangles, generations, &tags)
}

fn refine_recursive(
    tri: [usize; 3],
    generation: u32,
    midpoint: &HashMap<(usize, usize), usize>,
    triangles: &mut Vec<[usize; 3]>,
    generations: &mut Vec<u32>,
) {
    let [a, b, c] = tri;
    match midpoint.get(&edge_key(a, b)) {
        None => {
            triangles.push(tri);
            generations.push(generation);
        }
        Some(&m) => {
            refine_recursive([c, a, m], generation + 1, midpoint, triangles, generations);
            refine_recursive([b, c, m], generation + 1, midpoint, triangles, generations);
        }
    }
}

/// Two full bisection sweeps, which halves every element diameter.
pub fn uniform_refine(mesh: &Triangulation) -> Triangulation {
    let once = bisect(mesh, &MarkSet::all(mesh.n_triangles()));
    bisect(&once, &MarkSet::all(once.n_triangles()))
}
