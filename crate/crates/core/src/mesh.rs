//! Triangle meshes: text I/O, built-in initial triangulations, uniform red
//! refinement and the per-cell geometry behind the explicit constants.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("{what} index {index} out of range (have {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("edge ({0}, {1}) is shared by more than two cells")]
    NonManifoldEdge(usize, usize),
    #[error("cells sharing edge ({0}, {1}) overlap")]
    OverlappingCells(usize, usize),
    #[error("cell {0} is degenerate")]
    DegenerateCell(usize),
    #[error("boundary edge ({0}, {1}) carries no label")]
    MissingBoundaryLabel(usize, usize),
    #[error("facet ({0}, {1}) is not a boundary edge of the mesh")]
    NotABoundaryEdge(usize, usize),
    #[error("facet ({0}, {1}) is listed twice")]
    DuplicateFacet(usize, usize),
    #[error("mesh is not connected")]
    Disconnected,
    #[error("vertex {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("reference point is not strictly inside the polygon")]
    PointNotInside,
    #[error("polygon needs at least three vertices")]
    PolygonTooSmall,
    #[error("unknown builtin mesh '{0}'")]
    UnknownBuiltin(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, o: Point2) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    pub fn midpoint(self, o: Point2) -> Point2 {
        Point2::new(0.5 * (self.x + o.x), 0.5 * (self.y + o.y))
    }
}

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FacetLabel {
    Dirichlet,
    Neumann,
    Steklov,
}

impl FacetLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            FacetLabel::Dirichlet => "dirichlet",
            FacetLabel::Neumann => "neumann",
            FacetLabel::Steklov => "steklov",
        }
    }
}

impl fmt::Display for FacetLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FacetLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dirichlet" => Ok(FacetLabel::Dirichlet),
            "neumann" => Ok(FacetLabel::Neumann),
            "steklov" => Ok(FacetLabel::Steklov),
            other => Err(format!("unknown facet label '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    /// Counterclockwise vertex indices.
    pub vertices: [usize; 3],
    pub region: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryFacet {
    pub vertices: [usize; 2],
    pub label: FacetLabel,
}

/// Validated triangle mesh with its edge table.
///
/// Edges are stored once, oriented from the lower to the higher vertex
/// index. The unit normal of an edge is its tangent rotated clockwise.
/// Local edge `k` of a cell is the one opposite local vertex `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    points: Vec<Point2>,
    cells: Vec<Cell>,
    boundary: Vec<BoundaryFacet>,
    edges: Vec<[usize; 2]>,
    cell_edges: Vec<[usize; 3]>,
    cell_signs: Vec<[f64; 3]>,
    edge_cells: Vec<[Option<usize>; 2]>,
    facet_edges: Vec<usize>,
    level: usize,
}

impl Mesh {
    /// Validates and indexes a mesh. Clockwise cells are reoriented.
    pub fn new(
        points: Vec<Point2>,
        mut cells: Vec<Cell>,
        boundary: Vec<BoundaryFacet>,
        level: usize,
    ) -> Result<Self, MeshError> {
        let nv = points.len();
        for (i, p) in points.iter().enumerate() {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(MeshError::NonFinite(i));
            }
        }
        for (t, c) in cells.iter_mut().enumerate() {
            for &v in &c.vertices {
                if v >= nv {
                    return Err(MeshError::IndexOutOfRange {
                        what: "vertex",
                        index: v,
                        len: nv,
                    });
                }
            }
            let [a, b, d] = c.vertices;
            if a == b || b == d || a == d {
                return Err(MeshError::DegenerateCell(t));
            }
            let area2 = cross(points[a], points[b], points[d]);
            let scale = points[a]
                .dist(points[b])
                .max(points[b].dist(points[d]))
                .max(points[a].dist(points[d]));
            if !(area2.abs() > 1e-14 * scale * scale) {
                return Err(MeshError::DegenerateCell(t));
            }
            if area2 < 0.0 {
                c.vertices.swap(1, 2);
            }
        }

        let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut edge_cells: Vec<[Option<usize>; 2]> = Vec::new();
        // direction in which the owning cell traverses the edge, for overlap detection
        let mut edge_dir: Vec<[bool; 2]> = Vec::new();
        let mut cell_edges = Vec::with_capacity(cells.len());
        let mut cell_signs = Vec::with_capacity(cells.len());
        for (t, c) in cells.iter().enumerate() {
            let v = c.vertices;
            let mut ce = [0usize; 3];
            let mut cs = [0.0f64; 3];
            for k in 0..3 {
                let a = v[(k + 1) % 3];
                let b = v[(k + 2) % 3];
                let key = (a.min(b), a.max(b));
                let e = *edge_index.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edge_cells.push([None, None]);
                    edge_dir.push([false, false]);
                    edges.len() - 1
                });
                let forward = a < b;
                match edge_cells[e] {
                    [None, _] => {
                        edge_cells[e][0] = Some(t);
                        edge_dir[e][0] = forward;
                    }
                    [Some(_), None] => {
                        if edge_dir[e][0] == forward {
                            return Err(MeshError::OverlappingCells(key.0, key.1));
                        }
                        edge_cells[e][1] = Some(t);
                        edge_dir[e][1] = forward;
                    }
                    _ => return Err(MeshError::NonManifoldEdge(key.0, key.1)),
                }
                ce[k] = e;
                cs[k] = if forward { 1.0 } else { -1.0 };
            }
            cell_edges.push(ce);
            cell_signs.push(cs);
        }

        let mut facet_edges = Vec::with_capacity(boundary.len());
        let mut labelled = vec![false; edges.len()];
        for f in &boundary {
            let [a, b] = f.vertices;
            for &v in &[a, b] {
                if v >= nv {
                    return Err(MeshError::IndexOutOfRange {
                        what: "vertex",
                        index: v,
                        len: nv,
                    });
                }
            }
            let key = (a.min(b), a.max(b));
            let e = match edge_index.get(&key) {
                Some(&e) if edge_cells[e][1].is_none() => e,
                _ => return Err(MeshError::NotABoundaryEdge(a, b)),
            };
            if labelled[e] {
                return Err(MeshError::DuplicateFacet(a, b));
            }
            labelled[e] = true;
            facet_edges.push(e);
        }
        for (e, ec) in edge_cells.iter().enumerate() {
            if ec[1].is_none() && !labelled[e] {
                return Err(MeshError::MissingBoundaryLabel(edges[e][0], edges[e][1]));
            }
        }

        if !cells.is_empty() {
            let mut seen = vec![false; cells.len()];
            let mut stack = vec![0usize];
            seen[0] = true;
            let mut count = 1;
            while let Some(t) = stack.pop() {
                for &e in &cell_edges[t] {
                    for &nb in edge_cells[e].iter().flatten() {
                        if !seen[nb] {
                            seen[nb] = true;
                            count += 1;
                            stack.push(nb);
                        }
                    }
                }
            }
            if count != cells.len() {
                return Err(MeshError::Disconnected);
            }
        }

        Ok(Self {
            points,
            cells,
            boundary,
            edges,
            cell_edges,
            cell_signs,
            edge_cells,
            facet_edges,
            level,
        })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn boundary(&self) -> &[BoundaryFacet] {
        &self.boundary
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn num_vertices(&self) -> usize {
        self.points.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Global edge indices of a cell; entry `k` is opposite local vertex `k`.
    pub fn cell_edges(&self, t: usize) -> [usize; 3] {
        self.cell_edges[t]
    }

    /// `+1` where the global edge normal points out of the cell, else `-1`.
    pub fn cell_edge_signs(&self, t: usize) -> [f64; 3] {
        self.cell_signs[t]
    }

    /// Cells adjacent to an edge; the second slot is empty on the boundary.
    pub fn edge_cells(&self, e: usize) -> [Option<usize>; 2] {
        self.edge_cells[e]
    }

    /// Edge index of boundary facet `f`.
    pub fn facet_edge(&self, f: usize) -> usize {
        self.facet_edges[f]
    }

    /// The unique cell containing boundary facet `f`.
    pub fn facet_cell(&self, f: usize) -> usize {
        self.edge_cells[self.facet_edges[f]][0].expect("boundary edge has a cell")
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        self.points[a].dist(self.points[b])
    }

    pub fn cell_points(&self, t: usize) -> [Point2; 3] {
        let v = self.cells[t].vertices;
        [self.points[v[0]], self.points[v[1]], self.points[v[2]]]
    }

    pub fn cell_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.cell_points(t);
        0.5 * cross(a, b, c)
    }

    pub fn cell_diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.cell_points(t);
        a.dist(b).max(b.dist(c)).max(c.dist(a))
    }

    /// Largest cell diameter.
    pub fn max_diameter(&self) -> f64 {
        (0..self.num_cells())
            .map(|t| self.cell_diameter(t))
            .fold(0.0, f64::max)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_cells()).map(|t| self.cell_area(t)).sum()
    }

    pub fn has_label(&self, label: FacetLabel) -> bool {
        self.boundary.iter().any(|f| f.label == label)
    }

    /// Indices of the boundary facets with the given label.
    pub fn facets_with_label(&self, label: FacetLabel) -> Vec<usize> {
        (0..self.boundary.len())
            .filter(|&f| self.boundary[f].label == label)
            .collect()
    }

    /// Same mesh with every boundary facet carrying `label`.
    pub fn with_boundary_label(&self, label: FacetLabel) -> Mesh {
        let mut m = self.clone();
        for f in &mut m.boundary {
            f.label = label;
        }
        m
    }

    /// Uniformly scaled copy.
    pub fn scaled(&self, s: f64) -> Mesh {
        let mut m = self.clone();
        for p in &mut m.points {
            p.x *= s;
            p.y *= s;
        }
        m
    }
}

/// Splits every triangle into four congruent children through its edge
/// midpoints. New vertex `num_vertices + e` is the midpoint of edge `e`.
pub fn refine_red(m: &Mesh) -> Mesh {
    let nv = m.num_vertices();
    let mut points = m.points.clone();
    points.reserve(m.num_edges());
    for &[a, b] in &m.edges {
        points.push(m.points[a].midpoint(m.points[b]));
    }
    let mut cells = Vec::with_capacity(4 * m.num_cells());
    for (t, c) in m.cells.iter().enumerate() {
        let [a, b, d] = c.vertices;
        let ce = m.cell_edges[t];
        // midpoints opposite a, b, d
        let (ma, mb, md) = (nv + ce[0], nv + ce[1], nv + ce[2]);
        let r = c.region;
        cells.push(Cell {
            vertices: [a, md, mb],
            region: r,
        });
        cells.push(Cell {
            vertices: [md, b, ma],
            region: r,
        });
        cells.push(Cell {
            vertices: [mb, ma, d],
            region: r,
        });
        cells.push(Cell {
            vertices: [md, ma, mb],
            region: r,
        });
    }
    let mut boundary = Vec::with_capacity(2 * m.boundary.len());
    for (f, bf) in m.boundary.iter().enumerate() {
        let mid = nv + m.facet_edges[f];
        let [a, b] = bf.vertices;
        boundary.push(BoundaryFacet {
            vertices: [a, mid],
            label: bf.label,
        });
        boundary.push(BoundaryFacet {
            vertices: [mid, b],
            label: bf.label,
        });
    }
    Mesh::new(points, cells, boundary, m.level + 1)
        .expect("red refinement of a valid mesh is valid")
}

/// Applies [`refine_red`] `k` times.
pub fn refine_times(m: &Mesh, k: usize) -> Mesh {
    let mut out = m.clone();
    for _ in 0..k {
        out = refine_red(&out);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellGeometry {
    pub area: f64,
    pub diameter: f64,
    /// Entry `k` is the length of the edge opposite local vertex `k`.
    pub edge_lengths: [f64; 3],
    pub incenter: Point2,
    pub inradius: f64,
}

pub fn cell_geometry(m: &Mesh, t: usize) -> Result<CellGeometry, MeshError> {
    if t >= m.num_cells() {
        return Err(MeshError::IndexOutOfRange {
            what: "cell",
            index: t,
            len: m.num_cells(),
        });
    }
    let [p0, p1, p2] = m.cell_points(t);
    triangle_geometry([p0, p1, p2]).ok_or(MeshError::DegenerateCell(t))
}

/// Geometry of a single triangle; `None` if it is degenerate.
pub fn triangle_geometry(p: [Point2; 3]) -> Option<CellGeometry> {
    let l = [p[1].dist(p[2]), p[2].dist(p[0]), p[0].dist(p[1])];
    let area = 0.5 * cross(p[0], p[1], p[2]).abs();
    if !(area > 0.0) {
        return None;
    }
    let perim = l[0] + l[1] + l[2];
    let incenter = Point2::new(
        (l[0] * p[0].x + l[1] * p[1].x + l[2] * p[2].x) / perim,
        (l[0] * p[0].y + l[1] * p[1].y + l[2] * p[2].y) / perim,
    );
    Some(CellGeometry {
        area,
        diameter: l[0].max(l[1]).max(l[2]),
        edge_lengths: l,
        incenter,
        inradius: 2.0 * area / perim,
    })
}

/// Ratio of the distance from `x0` to the polygon boundary over the largest
/// distance from `x0` to a vertex. The polygon must be convex.
pub fn inscribed_param_d(polygon: &[Point2], x0: Point2) -> Result<f64, MeshError> {
    let n = polygon.len();
    if n < 3 {
        return Err(MeshError::PolygonTooSmall);
    }
    let orient: f64 = (0..n)
        .map(|i| cross(Point2::new(0.0, 0.0), polygon[i], polygon[(i + 1) % n]))
        .sum::<f64>()
        .signum();
    let mut dist = f64::INFINITY;
    for i in 0..n {
        let a = polygon[i];
        let b = polygon[(i + 1) % n];
        let len = a.dist(b);
        let signed = orient * cross(a, b, x0) / len;
        if !(signed > 0.0) {
            return Err(MeshError::PointNotInside);
        }
        dist = dist.min(signed);
    }
    let far = polygon.iter().map(|&z| z.dist(x0)).fold(0.0, f64::max);
    Ok(dist / far)
}

/// [`inscribed_param_d`] for a triangle at its incenter, which reduces to
/// inradius over the largest incenter-to-vertex distance.
pub fn triangle_param_d(g: &CellGeometry, p: [Point2; 3]) -> f64 {
    let far = p.iter().map(|&z| z.dist(g.incenter)).fold(0.0, f64::max);
    g.inradius / far
}

pub fn parse_mesh(text: &str) -> Result<Mesh, MeshError> {
    #[derive(PartialEq)]
    enum Section {
        Header,
        Vertices,
        Cells,
        Boundary,
    }
    let mut section = Section::Header;
    let mut remaining = 0usize;
    let mut level = 0usize;
    let mut points = Vec::new();
    let mut cells = Vec::new();
    let mut boundary = Vec::new();
    let mut seen_boundary = false;

    fn num<T: FromStr>(tok: &str, line: usize, what: &str) -> Result<T, MeshError> {
        tok.parse().map_err(|_| MeshError::Syntax {
            line,
            msg: format!("cannot parse {what} from '{tok}'"),
        })
    }

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        if remaining == 0 {
            let expect_count = |toks: &[&str]| -> Result<usize, MeshError> {
                if toks.len() != 2 {
                    return Err(MeshError::Syntax {
                        line,
                        msg: format!("expected '{} <count>'", toks[0]),
                    });
                }
                num(toks[1], line, "count")
            };
            match (toks[0], &section) {
                ("level", Section::Header) => {
                    level = expect_count(&toks)?;
                    continue;
                }
                ("vertices", Section::Header) => {
                    section = Section::Vertices;
                    remaining = expect_count(&toks)?;
                }
                ("cells", Section::Vertices) => {
                    section = Section::Cells;
                    remaining = expect_count(&toks)?;
                }
                ("boundary", Section::Cells) => {
                    section = Section::Boundary;
                    seen_boundary = true;
                    remaining = expect_count(&toks)?;
                }
                (tok, _) => {
                    return Err(MeshError::Syntax {
                        line,
                        msg: format!("unexpected '{tok}'"),
                    })
                }
            }
            continue;
        }
        match section {
            Section::Vertices => {
                if toks.len() != 2 {
                    return Err(MeshError::Syntax {
                        line,
                        msg: "vertex line needs 'x y'".into(),
                    });
                }
                let x: f64 = num(toks[0], line, "x")?;
                let y: f64 = num(toks[1], line, "y")?;
                points.push(Point2::new(x, y));
            }
            Section::Cells => {
                if toks.len() != 4 {
                    return Err(MeshError::Syntax {
                        line,
                        msg: "cell line needs 'v0 v1 v2 region'".into(),
                    });
                }
                cells.push(Cell {
                    vertices: [
                        num(toks[0], line, "vertex index")?,
                        num(toks[1], line, "vertex index")?,
                        num(toks[2], line, "vertex index")?,
                    ],
                    region: num(toks[3], line, "region")?,
                });
            }
            Section::Boundary => {
                if toks.len() != 3 {
                    return Err(MeshError::Syntax {
                        line,
                        msg: "boundary line needs 'v0 v1 label'".into(),
                    });
                }
                let label = toks[2]
                    .parse()
                    .map_err(|msg| MeshError::Syntax { line, msg })?;
                boundary.push(BoundaryFacet {
                    vertices: [
                        num(toks[0], line, "vertex index")?,
                        num(toks[1], line, "vertex index")?,
                    ],
                    label,
                });
            }
            Section::Header => unreachable!(),
        }
        remaining -= 1;
    }
    if remaining != 0 {
        return Err(MeshError::Syntax {
            line: text.lines().count(),
            msg: "unexpected end of input".into(),
        });
    }
    if !seen_boundary {
        return Err(MeshError::Syntax {
            line: text.lines().count(),
            msg: "missing 'boundary' section".into(),
        });
    }
    Mesh::new(points, cells, boundary, level)
}

pub fn write_mesh(m: &Mesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "level {}", m.level);
    let _ = writeln!(s, "vertices {}", m.points.len());
    for p in &m.points {
        let _ = writeln!(s, "{:.16e} {:.16e}", p.x, p.y);
    }
    let _ = writeln!(s, "cells {}", m.cells.len());
    for c in &m.cells {
        let [a, b, d] = c.vertices;
        let _ = writeln!(s, "{a} {b} {d} {}", c.region);
    }
    let _ = writeln!(s, "boundary {}", m.boundary.len());
    for f in &m.boundary {
        let _ = writeln!(s, "{} {} {}", f.vertices[0], f.vertices[1], f.label);
    }
    s
}

/// Initial triangulations shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuiltinMesh {
    /// L-shaped domain `(-1,1)^2 \ [0,1]^2`, Dirichlet boundary.
    LshapeFig1,
    /// The same triangulation with the whole boundary labelled Steklov.
    LshapeFig1Steklov,
    /// Square `(-1,1)^2` with region tags for the piecewise coefficients.
    SquareFig3,
    /// Cook's membrane, clamped on the left edge.
    CookFig4,
}

impl BuiltinMesh {
    pub const ALL: [BuiltinMesh; 4] = [
        BuiltinMesh::LshapeFig1,
        BuiltinMesh::LshapeFig1Steklov,
        BuiltinMesh::SquareFig3,
        BuiltinMesh::CookFig4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinMesh::LshapeFig1 => "lshape_fig1",
            BuiltinMesh::LshapeFig1Steklov => "lshape_fig1_steklov",
            BuiltinMesh::SquareFig3 => "square_fig3",
            BuiltinMesh::CookFig4 => "cook_fig4",
        }
    }
}

impl FromStr for BuiltinMesh {
    type Err = MeshError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BuiltinMesh::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| MeshError::UnknownBuiltin(s.to_string()))
    }
}

const LSHAPE_FIG1: &str = include_str!("../data/lshape_fig1.mesh");
const SQUARE_FIG3: &str = include_str!("../data/square_fig3.mesh");
const COOK_FIG4: &str = include_str!("../data/cook_fig4.mesh");

pub fn builtin_mesh(name: BuiltinMesh) -> Mesh {
    let parse = |s: &str| parse_mesh(s).expect("shipped mesh file is valid");
    match name {
        BuiltinMesh::LshapeFig1 => parse(LSHAPE_FIG1),
        BuiltinMesh::LshapeFig1Steklov => {
            parse(LSHAPE_FIG1).with_boundary_label(FacetLabel::Steklov)
        }
        BuiltinMesh::SquareFig3 => parse(SQUARE_FIG3),
        BuiltinMesh::CookFig4 => parse(COOK_FIG4),
    }
}
