//! SVG pictures of two-dimensional partitions.
//!
//! Each counted region is drawn as the box clipped by the closed halfplanes of
//! its pattern. Clipping runs in exact rational arithmetic on the (exactly
//! representable) float rows, and every vertex is the meet of two original
//! lines, so coordinates never accumulate rounding from earlier clips.

use std::fmt::Write as _;

use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::counter::{count_regions_maxout, CounterOptions, Witness};
use crate::error::{Error, Result};
use crate::network::{ActivationPattern, InputDomain, LayerActivation, Network};

/// Canvas width in SVG user units; the height follows the box aspect ratio.
const CANVAS: f64 = 600.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RegionPolygon {
    pub pattern: ActivationPattern,
    /// Counter-clockwise vertices, without the closing repeat.
    pub vertices: Vec<[f64; 2]>,
}

/// `a·x + c ≥ 0` with exact coefficients.
#[derive(Clone)]
struct HalfPlane {
    a: [BigRational; 2],
    c: BigRational,
}

impl HalfPlane {
    fn new(a: [f64; 2], c: f64) -> Result<Self> {
        let q = |v: f64| BigRational::from_float(v).ok_or(Error::NonFinite("region row"));
        Ok(HalfPlane {
            a: [q(a[0])?, q(a[1])?],
            c: q(c)?,
        })
    }

    fn value(&self, p: &[BigRational; 2]) -> BigRational {
        &self.a[0] * &p[0] + &self.a[1] * &p[1] + &self.c
    }

    /// Meet of the two boundary lines; `None` when parallel.
    fn meet(&self, other: &HalfPlane) -> Option<[BigRational; 2]> {
        let det = &self.a[0] * &other.a[1] - &self.a[1] * &other.a[0];
        if det.is_zero() {
            return None;
        }
        let x = (&self.a[1] * &other.c - &other.a[1] * &self.c) / &det;
        let y = (&other.a[0] * &self.c - &self.a[0] * &other.c) / &det;
        Some([x, y])
    }
}

/// Polygon whose edge `i` runs from `vertices[i]` to `vertices[i + 1]` along
/// `lines[i]`.
struct Cell {
    vertices: Vec<[BigRational; 2]>,
    lines: Vec<HalfPlane>,
}

impl Cell {
    fn rect(lower: [f64; 2], upper: [f64; 2]) -> Result<Self> {
        let lines = vec![
            HalfPlane::new([0.0, 1.0], -lower[1])?,
            HalfPlane::new([-1.0, 0.0], upper[0])?,
            HalfPlane::new([0.0, -1.0], upper[1])?,
            HalfPlane::new([1.0, 0.0], -lower[0])?,
        ];
        let mut vertices = Vec::with_capacity(4);
        for i in 0..4 {
            let prev = &lines[(i + 3) % 4];
            vertices.push(prev.meet(&lines[i]).expect("box sides meet"));
        }
        Ok(Cell { vertices, lines })
    }

    /// Sutherland–Hodgman step against one halfplane.
    fn clip(&mut self, h: &HalfPlane) {
        let n = self.vertices.len();
        if n == 0 {
            return;
        }
        let values: Vec<BigRational> = self.vertices.iter().map(|v| h.value(v)).collect();
        if values.iter().all(|v| !v.is_negative()) {
            return;
        }
        let mut vertices = Vec::new();
        let mut lines = Vec::new();
        for i in 0..n {
            let j = (i + 1) % n;
            let (vi, vj) = (&values[i], &values[j]);
            if !vi.is_negative() {
                vertices.push(self.vertices[i].clone());
                lines.push(self.lines[i].clone());
            }
            if vi.is_negative() != vj.is_negative() && !vi.is_zero() && !vj.is_zero() {
                let p = self.lines[i].meet(h).expect("crossing edge is not parallel");
                if vi.is_negative() {
                    // entering: the new vertex starts the rest of edge i
                    vertices.push(p);
                    lines.push(self.lines[i].clone());
                } else {
                    // leaving: edge i ends here, then follow the clip line
                    vertices.push(p);
                    lines.push(h.clone());
                }
            } else if !vi.is_negative() && vj.is_negative() {
                // vi lies on the clip line: leave along it
                *lines.last_mut().expect("vertex pushed above") = h.clone();
            }
        }
        self.vertices = vertices;
        self.lines = lines;
        self.dedup();
    }

    fn dedup(&mut self) {
        let mut i = 0;
        while self.vertices.len() > 1 && i < self.vertices.len() {
            let j = (i + 1) % self.vertices.len();
            if self.vertices[i] == self.vertices[j] {
                self.vertices.remove(j);
                let line = self.lines.remove(j);
                // the surviving vertex starts the edge that began at the removed one
                let keep = if j < i { i - 1 } else { i };
                self.lines[keep] = line;
            } else {
                i += 1;
            }
        }
    }

    fn area_twice(&self) -> BigRational {
        let n = self.vertices.len();
        let mut s = BigRational::zero();
        for i in 0..n {
            let (p, q) = (&self.vertices[i], &self.vertices[(i + 1) % n]);
            s += &p[0] * &q[1] - &p[1] * &q[0];
        }
        s
    }
}

/// Closed halfplanes of the region with this pattern: active rows ≥ 0,
/// inactive rows ≤ 0, maxout winners ≥ every other piece.
fn region_halfplanes(net: &Network, pattern: &ActivationPattern) -> Result<Vec<HalfPlane>> {
    let mut out = Vec::new();
    for (l, act) in pattern.layers().iter().enumerate() {
        let pre = net.compose_region_map(&pattern.truncated(l), l + 1)?;
        let row = |r: usize| ([pre.matrix[r][0], pre.matrix[r][1]], pre.offset[r]);
        match act {
            LayerActivation::Relu(active) => {
                for (i, &on) in active.iter().enumerate() {
                    let (a, c) = row(i);
                    let s = if on { 1.0 } else { -1.0 };
                    out.push(HalfPlane::new([s * a[0], s * a[1]], s * c)?);
                }
            }
            LayerActivation::Maxout(winners) => {
                let k = net.layers[l].rank().unwrap_or(1);
                for (i, &w) in winners.iter().enumerate() {
                    let (aw, cw) = row(i * k + w);
                    for j in (0..k).filter(|&j| j != w) {
                        let (aj, cj) = row(i * k + j);
                        out.push(HalfPlane::new([aw[0] - aj[0], aw[1] - aj[1]], cw - cj)?);
                    }
                }
            }
        }
    }
    Ok(out)
}

fn box_corners(domain: &InputDomain) -> Result<([f64; 2], [f64; 2])> {
    match domain {
        InputDomain::Box { lower, upper } if lower.len() == 2 && upper.len() == 2 => {
            Ok(([lower[0], lower[1]], [upper[0], upper[1]]))
        }
        InputDomain::Box { lower, .. } => Err(Error::DimensionMismatch {
            expected: 2,
            got: lower.len(),
        }),
        InputDomain::Unrestricted => Err(Error::UnboundedDomain),
    }
}

/// One polygon per counted region, in the counter's witness order.
pub fn region_polygons(net: &Network, opts: &CounterOptions) -> Result<Vec<RegionPolygon>> {
    if net.input_dim != 2 {
        return Err(Error::precondition(format!(
            "rendering needs a two-dimensional input, got {}",
            net.input_dim
        )));
    }
    let (lower, upper) = box_corners(&opts.domain)?;
    let mut opts = opts.clone();
    opts.collect_witnesses = true;
    let result = count_regions_maxout(net, &opts)?;
    if result.capped {
        return Err(Error::SizeGuard(format!("region cap reached at {}", result.count)));
    }
    let witnesses: Vec<Witness> = result.witnesses.unwrap_or_default();
    let mut polygons = Vec::with_capacity(witnesses.len());
    for w in witnesses {
        let mut cell = Cell::rect(lower, upper)?;
        for h in region_halfplanes(net, &w.pattern)? {
            cell.clip(&h);
        }
        if cell.vertices.len() < 3 || !cell.area_twice().is_positive() {
            return Err(Error::Numerical(format!(
                "counted region {} clips to a degenerate polygon",
                w.pattern
            )));
        }
        let vertices = cell
            .vertices
            .iter()
            .map(|p| [p[0].to_f64().unwrap_or(f64::NAN), p[1].to_f64().unwrap_or(f64::NAN)])
            .collect();
        polygons.push(RegionPolygon {
            pattern: w.pattern,
            vertices,
        });
    }
    Ok(polygons)
}

/// Golden-angle hue walk so neighbouring indices get distinct colours.
fn fill(index: usize) -> String {
    let h = (index as f64 * 137.507_764) % 360.0;
    let (s, l) = (0.55, 0.72);
    let c = (1.0 - (2.0 * l - 1.0f64).abs()) * s;
    let x = c * (1.0 - ((h / 60.0) % 2.0 - 1.0).abs());
    let m = l - c / 2.0;
    let (r, g, b) = match (h / 60.0) as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let byte = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    format!("#{:02x}{:02x}{:02x}", byte(r), byte(g), byte(b))
}

/// SVG 1.1 document with one `<polygon>` per region. The `y` axis points up.
pub fn polygons_to_svg(polygons: &[RegionPolygon], lower: [f64; 2], upper: [f64; 2]) -> String {
    let span = [upper[0] - lower[0], upper[1] - lower[1]];
    let height = if span[0] > 0.0 {
        CANVAS * span[1] / span[0]
    } else {
        CANVAS
    };
    let px = |p: &[f64; 2]| {
        (
            (p[0] - lower[0]) / span[0] * CANVAS,
            (upper[1] - p[1]) / span[1] * height,
        )
    };
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{CANVAS:.0}" height="{height:.2}" viewBox="0 0 {CANVAS:.0} {height:.2}">"#
    );
    let _ = writeln!(
        svg,
        r#"<desc>{} regions on [{}, {}] x [{}, {}]</desc>"#,
        polygons.len(),
        lower[0],
        upper[0],
        lower[1],
        upper[1]
    );
    let _ = writeln!(
        svg,
        r##"<g stroke="#333333" stroke-width="0.8" stroke-linejoin="round">"##
    );
    for (i, poly) in polygons.iter().enumerate() {
        let points: Vec<String> = poly
            .vertices
            .iter()
            .map(|p| {
                let (x, y) = px(p);
                format!("{x:.4},{y:.4}")
            })
            .collect();
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="{}"><title>{}</title></polygon>"#,
            points.join(" "),
            fill(i),
            poly.pattern
        );
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(svg, "</svg>");
    svg
}

/// Counts the regions of `net` on a 2D box and draws them.
pub fn render_svg(net: &Network, opts: &CounterOptions) -> Result<(Vec<RegionPolygon>, String)> {
    let polygons = region_polygons(net, opts)?;
    let (lower, upper) = box_corners(&opts.domain)?;
    let svg = polygons_to_svg(&polygons, lower, upper);
    Ok((polygons, svg))
}
