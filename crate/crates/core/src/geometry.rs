//! Floating-point inversive geometry of Descartes configurations.
//!
//! A configuration is stored as the augmented curvature-center matrix `W` whose
//! rows are `(b̄, b, b·x, b·y)`: co-curvature, signed curvature and curvature
//! times center. Flipping slot `i` acts on `W` by the same integer matrix `Sᵢ`
//! that acts on curvature quadruples, so whole packings can be drawn by walking
//! the same tree as the exact enumerator.
//!
//! Lines have `b = 0` and carry their unit normal `n` (pointing away from the
//! packing) in the last two columns. Their co-curvature is `b̄ = 2h` where
//! `{z : n·z = h}` is the line, so a line through the origin has `b̄ = 0` and the
//! row still propagates linearly.

use std::collections::HashSet;
use std::fmt::Write as _;

use nalgebra::Matrix4;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::descartes::{Curvature, PackingKind, Quadruple, RootQuadruple};
use crate::error::{Error, Result};

/// Relative tolerance for row identities and tangency.
pub const TOLERANCE: f64 = 1e-9;

/// Default cap on the number of SVG elements.
pub const DEFAULT_ELEMENT_CAP: usize = 100_000;

/// One row `(b̄, b, b·x, b·y)` of an augmented curvature-center matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientedCircle {
    pub cocurv: f64,
    pub curv: f64,
    pub cx: f64,
    pub cy: f64,
}

/// A generalized circle in the plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    /// `inward` marks a circle whose interior is its outside (negative curvature).
    Circle {
        center: [f64; 2],
        radius: f64,
        inward: bool,
    },
    /// The line `{z : normal·z = offset}`.
    Line { normal: [f64; 2], offset: f64 },
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn add_scaled(a: [f64; 2], s: f64, b: [f64; 2]) -> [f64; 2] {
    [a[0] + s * b[0], a[1] + s * b[1]]
}

fn norm(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

impl OrientedCircle {
    pub fn new(cocurv: f64, curv: f64, cx: f64, cy: f64) -> Self {
        OrientedCircle {
            cocurv,
            curv,
            cx,
            cy,
        }
    }

    /// Row of the circle with signed curvature `curv` centered at `center`.
    pub fn circle(curv: f64, center: [f64; 2]) -> Self {
        let cocurv = curv * dot(center, center) - 1.0 / curv;
        OrientedCircle::new(cocurv, curv, curv * center[0], curv * center[1])
    }

    /// Row with curvature `curv` and curvature-scaled center `w = curv·z`.
    ///
    /// The co-curvature `(|w|² − 1)/curv` is exact whenever `w` is integral and
    /// `curv` a power of two times a divisor of `|w|² − 1`.
    pub fn scaled(curv: f64, w: [f64; 2]) -> Self {
        OrientedCircle::new((dot(w, w) - 1.0) / curv, curv, w[0], w[1])
    }

    /// Row of the line `{z : normal·z = offset}` with unit `normal`.
    pub fn line(normal: [f64; 2], offset: f64) -> Self {
        OrientedCircle::new(2.0 * offset, 0.0, normal[0], normal[1])
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.cocurv, self.curv, self.cx, self.cy]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        OrientedCircle::new(a[0], a[1], a[2], a[3])
    }

    pub fn is_line(&self) -> bool {
        self.curv == 0.0
    }

    fn is_finite(&self) -> bool {
        self.as_array().iter().all(|x| x.is_finite())
    }

    /// Residual of the row identity: the cocurvature relation for circles, the
    /// unit-normal condition for lines.
    pub fn identity_residual(&self) -> f64 {
        if self.is_line() {
            (self.cx.hypot(self.cy) - 1.0).abs()
        } else {
            let (x, y) = (self.cx / self.curv, self.cy / self.curv);
            let lhs = self.curv * (x * x + y * y) - 1.0 / self.curv;
            let scale = 1f64
                .max(self.cocurv.abs())
                .max((self.curv * (x * x + y * y)).abs())
                .max(1.0 / self.curv.abs());
            (lhs - self.cocurv).abs() / scale
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::Numeric);
        }
        let r = self.identity_residual();
        if r > TOLERANCE {
            return Err(Error::InvalidConfiguration(format!(
                "row ({}, {}, {}, {}) violates the cocurvature identity by {r:e}",
                self.cocurv, self.curv, self.cx, self.cy
            )));
        }
        Ok(())
    }

    /// Center and radius, or the line, described by this row.
    pub fn shape(&self) -> Result<Shape> {
        self.validate()?;
        Ok(self.shape_unchecked())
    }

    fn shape_unchecked(&self) -> Shape {
        if self.is_line() {
            Shape::Line {
                normal: [self.cx, self.cy],
                offset: self.cocurv / 2.0,
            }
        } else {
            Shape::Circle {
                center: [self.cx / self.curv, self.cy / self.curv],
                radius: 1.0 / self.curv.abs(),
                inward: self.curv < 0.0,
            }
        }
    }

    /// Center of a circle row (meaningless for lines).
    fn center(&self) -> [f64; 2] {
        [self.cx / self.curv, self.cy / self.curv]
    }
}

/// Center and radius, or line, of a validated row.
pub fn circle_from_row(row: &OrientedCircle) -> Result<Shape> {
    row.shape()
}

/// Whether two oriented circles are tangent with compatible orientations.
///
/// Circles need `‖z₁ − z₂‖ = |1/b₁ + 1/b₂|` with signed curvatures; a circle and a
/// line need the circle to sit on the side opposite the line normal at distance
/// equal to its radius; two lines must be parallel with opposite normals.
pub fn tangency_check(r1: &OrientedCircle, r2: &OrientedCircle) -> bool {
    tangency_residual(r1, r2) <= TOLERANCE
}

fn tangency_residual(r1: &OrientedCircle, r2: &OrientedCircle) -> f64 {
    match (r1.is_line(), r2.is_line()) {
        (true, true) => (dot([r1.cx, r1.cy], [r2.cx, r2.cy]) + 1.0).abs(),
        (true, false) | (false, true) => {
            let (l, c) = if r1.is_line() { (r1, r2) } else { (r2, r1) };
            if c.curv < 0.0 {
                return f64::INFINITY;
            }
            let z = c.center();
            let h = l.cocurv / 2.0;
            let gap = dot([l.cx, l.cy], z) - (h - 1.0 / c.curv);
            gap.abs() / 1f64.max(norm(z)).max(h.abs())
        }
        (false, false) => {
            let (z1, z2) = (r1.center(), r2.center());
            let gap = norm(sub(z1, z2)) - (1.0 / r1.curv + 1.0 / r2.curv).abs();
            gap.abs() / 1f64.max(norm(z1)).max(norm(z2))
        }
    }
}

/// Point where two tangent rows touch; `None` for two parallel lines.
fn tangency_point(a: &OrientedCircle, b: &OrientedCircle) -> Option<[f64; 2]> {
    match (a.is_line(), b.is_line()) {
        (true, true) => None,
        (true, false) | (false, true) => {
            let (l, c) = if a.is_line() { (a, b) } else { (b, a) };
            Some(add_scaled(c.center(), 1.0 / c.curv, [l.cx, l.cy]))
        }
        (false, false) => {
            let (ra, rb) = (1.0 / a.curv, 1.0 / b.curv);
            let (za, zb) = (a.center(), b.center());
            Some(add_scaled(za, ra / (ra + rb), sub(zb, za)))
        }
    }
}

/// The constant Wilker form `Q_W`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WilkerForm;

impl WilkerForm {
    pub const ENTRIES: [[f64; 4]; 4] = [
        [0.0, -4.0, 0.0, 0.0],
        [-4.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 2.0, 0.0],
        [0.0, 0.0, 0.0, 2.0],
    ];

    pub fn matrix() -> Matrix4<f64> {
        Matrix4::from_fn(|i, j| Self::ENTRIES[i][j])
    }

    /// Numbers of positive and negative eigenvalues.
    pub fn signature() -> (usize, usize) {
        let eig = Self::matrix().symmetric_eigen();
        let pos = eig.eigenvalues.iter().filter(|&&v| v > 0.0).count();
        let neg = eig.eigenvalues.iter().filter(|&&v| v < 0.0).count();
        (pos, neg)
    }
}

fn flip_matrix(slot: usize) -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = match (i == slot, i == j) {
                (true, true) => -1.0,
                (true, false) => 2.0,
                (false, true) => 1.0,
                (false, false) => 0.0,
            };
        }
    }
    m
}

/// Augmented curvature-center matrix of an ordered, oriented Descartes configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigMatrix {
    rows: [OrientedCircle; 4],
}

impl ConfigMatrix {
    /// Wraps four rows without checking them; see [`ConfigMatrix::validate`].
    pub fn from_rows(rows: [OrientedCircle; 4]) -> Self {
        ConfigMatrix { rows }
    }

    /// Wraps four rows after checking row identities and pairwise tangency.
    pub fn new(rows: [OrientedCircle; 4]) -> Result<Self> {
        let w = ConfigMatrix { rows };
        w.validate()?;
        Ok(w)
    }

    pub fn rows(&self) -> &[OrientedCircle; 4] {
        &self.rows
    }

    pub fn row(&self, slot: usize) -> &OrientedCircle {
        &self.rows[slot]
    }

    pub fn curvatures(&self) -> [f64; 4] {
        self.rows.map(|r| r.curv)
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|i, j| self.rows[i].as_array()[j])
    }

    pub fn validate_rows(&self) -> Result<()> {
        self.rows.iter().try_for_each(OrientedCircle::validate)
    }

    /// Row identities plus tangency of all six pairs.
    pub fn validate(&self) -> Result<()> {
        self.validate_rows()?;
        for i in 0..4 {
            for j in i + 1..4 {
                let r = tangency_residual(&self.rows[i], &self.rows[j]);
                if !(r <= TOLERANCE) {
                    return Err(Error::InvalidConfiguration(format!(
                        "rows {} and {} are not tangent (residual {r:e})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Largest row-identity and tangency residuals.
    pub fn residuals(&self) -> (f64, f64) {
        let row = self
            .rows
            .iter()
            .map(OrientedCircle::identity_residual)
            .fold(0.0, f64::max);
        let mut pair = 0f64;
        for i in 0..4 {
            for j in i + 1..4 {
                pair = pair.max(tangency_residual(&self.rows[i], &self.rows[j]));
            }
        }
        (row, pair)
    }

    /// `Sᵢ·W`: row `i` becomes twice the sum of the other rows minus itself.
    pub fn propagate(&self, slot: usize) -> Result<ConfigMatrix> {
        if slot >= 4 {
            return Err(Error::InvalidInput(format!("slot {slot} out of range")));
        }
        let mut rows = self.rows;
        let mut acc = [0.0; 4];
        for (j, r) in self.rows.iter().enumerate() {
            let a = r.as_array();
            let s = if j == slot { -1.0 } else { 2.0 };
            for k in 0..4 {
                acc[k] += s * a[k];
            }
        }
        rows[slot] = OrientedCircle::from_array(acc);
        if !rows[slot].is_finite() {
            return Err(Error::Numeric);
        }
        Ok(ConfigMatrix { rows })
    }

    /// Applies the flips in `word` from left to right.
    pub fn propagate_word(&self, word: &[usize]) -> Result<ConfigMatrix> {
        word.iter().try_fold(*self, |w, &s| w.propagate(s))
    }

    /// `maxᵢ ‖MᵢᵗQ_W Mᵢ − Q_W‖_max` with `Mᵢ = W⁻¹SᵢW`.
    ///
    /// The products are formed in exact rational arithmetic on the stored
    /// floats, so the residual measures the matrix itself rather than the
    /// conditioning of a floating-point inverse (which grows like the fourth
    /// power of the curvatures).
    pub fn conjugation_check(&self) -> Result<f64> {
        self.validate_rows()?;
        let w = Exact::from_rows(&self.rows)?;
        let (inv, det) = w
            .inverse()
            .ok_or_else(|| Error::InvalidConfiguration("singular configuration matrix".into()))?;
        let scale = 1f64.max(self.matrix().amax());
        if !(det.to_f64().ok_or(Error::Numeric)?.abs() > 1e-9 * scale) {
            return Err(Error::InvalidConfiguration(
                "singular configuration matrix".into(),
            ));
        }
        let q = Exact::from_f64(&WilkerForm::ENTRIES)?;
        let mut worst = 0f64;
        for slot in 0..4 {
            let s = Exact::from_f64(&flip_matrix(slot))?;
            let m = inv.mul(&s).mul(&w);
            let r = m.transpose().mul(&q).mul(&m).max_abs_diff(&q);
            if !r.is_finite() {
                return Err(Error::Numeric);
            }
            worst = worst.max(r);
        }
        Ok(worst)
    }

    /// The circle or line through the three tangency points of the rows other than `slot`.
    pub fn dual_circle(&self, slot: usize) -> Result<Shape> {
        let others: Vec<&OrientedCircle> = (0..4)
            .filter(|&j| j != slot)
            .map(|j| &self.rows[j])
            .collect();
        let mut points = Vec::with_capacity(3);
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            if let Some(p) = tangency_point(others[a], others[b]) {
                points.push(p);
            }
        }
        through_points(&points)
    }

    /// Rows as CSV with header `cocurv,curv,cx,cy`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["cocurv", "curv", "cx", "cy"])?;
        for r in &self.rows {
            w.serialize(r.as_array())?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}

/// A 4×4 matrix over the rationals.
#[derive(Clone)]
struct Exact([[BigRational; 4]; 4]);

impl Exact {
    fn from_f64(m: &[[f64; 4]; 4]) -> Result<Self> {
        let mut out: [[BigRational; 4]; 4] = Default::default();
        for i in 0..4 {
            for j in 0..4 {
                out[i][j] = BigRational::from_float(m[i][j]).ok_or(Error::Numeric)?;
            }
        }
        Ok(Exact(out))
    }

    fn from_rows(rows: &[OrientedCircle; 4]) -> Result<Self> {
        Self::from_f64(&rows.map(|r| r.as_array()))
    }

    fn identity() -> Self {
        let mut out: [[BigRational; 4]; 4] = Default::default();
        for (i, row) in out.iter_mut().enumerate() {
            row[i] = BigRational::one();
        }
        Exact(out)
    }

    fn mul(&self, other: &Exact) -> Exact {
        let mut out: [[BigRational; 4]; 4] = Default::default();
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    out[i][j] += &self.0[i][k] * &other.0[k][j];
                }
            }
        }
        Exact(out)
    }

    fn transpose(&self) -> Exact {
        let mut out = self.clone();
        for i in 0..4 {
            for j in 0..4 {
                out.0[i][j] = self.0[j][i].clone();
            }
        }
        out
    }

    /// Gauss–Jordan inverse and determinant; `None` when singular.
    fn inverse(&self) -> Option<(Exact, BigRational)> {
        let mut a = self.0.clone();
        let mut inv = Exact::identity().0;
        let mut det = BigRational::one();
        for col in 0..4 {
            let pivot = (col..4).find(|&r| !a[r][col].is_zero())?;
            if pivot != col {
                a.swap(pivot, col);
                inv.swap(pivot, col);
                det = -det;
            }
            let p = a[col][col].clone();
            det *= &p;
            for k in 0..4 {
                a[col][k] /= &p;
                inv[col][k] /= &p;
            }
            for r in 0..4 {
                if r != col && !a[r][col].is_zero() {
                    let f = a[r][col].clone();
                    for k in 0..4 {
                        let (x, y) = (&a[col][k] * &f, &inv[col][k] * &f);
                        a[r][k] -= x;
                        inv[r][k] -= y;
                    }
                }
            }
        }
        Some((Exact(inv), det))
    }

    fn max_abs_diff(&self, other: &Exact) -> f64 {
        let mut worst = 0f64;
        for i in 0..4 {
            for j in 0..4 {
                let d = (&self.0[i][j] - &other.0[i][j]).abs();
                worst = worst.max(d.to_f64().unwrap_or(f64::INFINITY));
            }
        }
        worst
    }
}

/// Circle through three points, or a line through two (or three collinear) points.
fn through_points(points: &[[f64; 2]]) -> Result<Shape> {
    let coincident =
        |p: [f64; 2], q: [f64; 2]| norm(sub(p, q)) <= 1e-12 * 1f64.max(norm(p)).max(norm(q));
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if coincident(points[i], points[j]) {
                return Err(Error::InvalidConfiguration(
                    "coincident tangency points".into(),
                ));
            }
        }
    }
    let line = |p: [f64; 2], q: [f64; 2]| {
        let d = sub(q, p);
        let len = norm(d);
        let normal = [-d[1] / len, d[0] / len];
        Shape::Line {
            normal,
            offset: dot(normal, p),
        }
    };
    match points {
        [p, q] => Ok(line(*p, *q)),
        [a, b, c] => {
            let (ab, ac) = (sub(*b, *a), sub(*c, *a));
            let cross = ab[0] * ac[1] - ab[1] * ac[0];
            if cross.abs() <= 1e-12 * norm(ab) * norm(ac) {
                return Ok(line(*a, *b));
            }
            let (ab2, ac2) = (dot(ab, ab), dot(ac, ac));
            let ux = (ac[1] * ab2 - ab[1] * ac2) / (2.0 * cross);
            let uy = (ab[0] * ac2 - ac[0] * ab2) / (2.0 * cross);
            Ok(Shape::Circle {
                center: [a[0] + ux, a[1] + uy],
                radius: ux.hypot(uy),
                inward: false,
            })
        }
        _ => Err(Error::InvalidConfiguration(format!(
            "need two or three tangency points, found {}",
            points.len()
        ))),
    }
}

impl Shape {
    /// Whether both describe the same point set, ignoring orientation.
    pub fn approx_eq(&self, other: &Shape, tol: f64) -> bool {
        match (self, other) {
            (
                Shape::Circle {
                    center: c1,
                    radius: r1,
                    ..
                },
                Shape::Circle {
                    center: c2,
                    radius: r2,
                    ..
                },
            ) => {
                let scale = 1f64.max(norm(*c1)).max(*r1);
                norm(sub(*c1, *c2)) <= tol * scale && (r1 - r2).abs() <= tol * scale
            }
            (
                Shape::Line {
                    normal: n1,
                    offset: h1,
                },
                Shape::Line {
                    normal: n2,
                    offset: h2,
                },
            ) => {
                let s = if dot(*n1, *n2) < 0.0 { -1.0 } else { 1.0 };
                let scale = 1f64.max(h1.abs());
                norm(sub(*n1, [s * n2[0], s * n2[1]])) <= tol && (h1 - s * h2).abs() <= tol * scale
            }
            _ => false,
        }
    }

    /// Whether `p` lies on the shape to relative tolerance `tol`.
    pub fn contains_point(&self, p: [f64; 2], tol: f64) -> bool {
        match self {
            Shape::Circle { center, radius, .. } => {
                (norm(sub(p, *center)) - radius).abs() <= tol * 1f64.max(norm(*center)).max(*radius)
            }
            Shape::Line { normal, offset } => {
                (dot(*normal, p) - offset).abs() <= tol * 1f64.max(norm(p))
            }
        }
    }
}

/// Image of `c` under inversion in `mirror`; a line mirror reflects.
pub fn invert_circle(c: &Shape, mirror: &Shape) -> Result<Shape> {
    const GUARD: f64 = 1e-12;
    let out = match *mirror {
        Shape::Line {
            normal: n,
            offset: h,
        } => {
            let reflect = |p: [f64; 2]| add_scaled(p, -2.0 * (dot(n, p) - h), n);
            match *c {
                Shape::Circle {
                    center,
                    radius,
                    inward,
                } => Shape::Circle {
                    center: reflect(center),
                    radius,
                    inward,
                },
                Shape::Line { normal, offset } => {
                    let p = reflect([normal[0] * offset, normal[1] * offset]);
                    let n2 = add_scaled(normal, -2.0 * dot(n, normal), n);
                    Shape::Line {
                        normal: n2,
                        offset: dot(n2, p),
                    }
                }
            }
        }
        Shape::Circle {
            center: m,
            radius: big_r,
            ..
        } => {
            let r2 = big_r * big_r;
            match *c {
                Shape::Circle {
                    center,
                    radius,
                    inward,
                } => {
                    let d = sub(center, m);
                    let dd = dot(d, d);
                    let pow = dd - radius * radius;
                    if pow.abs() <= GUARD * 1f64.max(dd) {
                        let len = dd.sqrt();
                        if len <= GUARD {
                            return Err(Error::InvalidConfiguration(
                                "circle degenerates to a point under inversion".into(),
                            ));
                        }
                        let u = [d[0] / len, d[1] / len];
                        Shape::Line {
                            normal: u,
                            offset: dot(u, m) + r2 / (2.0 * len),
                        }
                    } else {
                        Shape::Circle {
                            center: add_scaled(m, r2 / pow, d),
                            radius: r2 * radius / pow.abs(),
                            inward: inward ^ (pow < 0.0),
                        }
                    }
                }
                Shape::Line { normal, offset } => {
                    let s = offset - dot(normal, m);
                    if s.abs() <= GUARD * 1f64.max(offset.abs()) {
                        *c
                    } else {
                        Shape::Circle {
                            center: add_scaled(m, r2 / (2.0 * s), normal),
                            radius: r2 / (2.0 * s.abs()),
                            inward: false,
                        }
                    }
                }
            }
        }
    };
    let finite = match out {
        Shape::Circle { center, radius, .. } => {
            center.iter().all(|x| x.is_finite()) && radius.is_finite()
        }
        Shape::Line { normal, offset } => {
            normal.iter().all(|x| x.is_finite()) && offset.is_finite()
        }
    };
    if finite {
        Ok(out)
    } else {
        Err(Error::Numeric)
    }
}

fn cmul(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] * b[0] - a[1] * b[1], a[0] * b[1] + a[1] * b[0]]
}

fn csqrt(a: [f64; 2]) -> [f64; 2] {
    let r = norm(a);
    let re = ((r + a[0]) / 2.0).max(0.0).sqrt();
    let im = ((r - a[0]) / 2.0).max(0.0).sqrt();
    [re, if a[1] < 0.0 { -im } else { im }]
}

trait Upper {
    fn max_by_y(self, other: Self) -> Self;
}

impl Upper for [f64; 2] {
    fn max_by_y(self, other: Self) -> Self {
        if other[1] > self[1] {
            other
        } else {
            self
        }
    }
}

/// Intersections of the circles `|z − p0| = r0` and `|z − p1| = r1`.
fn intersect(p0: [f64; 2], r0: f64, p1: [f64; 2], r1: f64) -> Result<[[f64; 2]; 2]> {
    let d = sub(p1, p0);
    let len = norm(d);
    if len == 0.0 {
        return Err(Error::InvalidConfiguration("concentric circles".into()));
    }
    let a = (r0 * r0 - r1 * r1 + len * len) / (2.0 * len);
    let h2 = r0 * r0 - a * a;
    let h = if h2 <= 1e-12 * r0 * r0 {
        0.0
    } else {
        h2.sqrt()
    };
    let u = [d[0] / len, d[1] / len];
    let base = add_scaled(p0, a, u);
    let perp = [-u[1], u[0]];
    Ok([add_scaled(base, h, perp), add_scaled(base, -h, perp)])
}

/// Canonical embedding of a root quadruple, rows in the root's sorted order.
///
/// Bounded roots put the bounding circle at the origin, the next circle on the
/// negative x-axis and the third in the upper half plane. `(−1,2,2,3)` lands on
/// the curvature-2 circles at `(±½, 0)`. Strip roots `(0,0,c,c)` use the lines
/// `y = 0` and `y = 2/c` with circles at `(0, 1/c)` and `(2/c, 1/c)`.
pub fn standard_embedding(root: &RootQuadruple) -> Result<ConfigMatrix> {
    let [a, b, c, d] = root.quad().0.map(|x| x as f64);
    let rows = match root.kind() {
        PackingKind::Strip => [
            OrientedCircle::line([0.0, -1.0], 0.0),
            OrientedCircle::line([0.0, 1.0], 2.0 / c),
            OrientedCircle::circle(c, [0.0, 1.0 / c]),
            OrientedCircle::circle(d, [2.0 / c, 1.0 / c]),
        ],
        PackingKind::Bounded if b > 0.0 => {
            let big = -1.0 / a;
            let (rb, rc) = (1.0 / b, 1.0 / c);
            let wb = [-(b * big - 1.0), 0.0];
            let [p, q] = intersect([0.0, 0.0], big - rc, [wb[0] / b, 0.0], rb + rc)?;
            let zc = p.max_by_y(q);
            let wc = [c * zc[0], c * zc[1]];
            // Complex Descartes relation with the bounding circle at the origin:
            // d·z_d = b·z_b + c·z_c ± 2·sqrt(b·z_b · c·z_c).
            let root2 = csqrt(cmul(wb, wc));
            let sum = [wb[0] + wc[0], wb[1] + wc[1]];
            let cands = [add_scaled(sum, 2.0, root2), add_scaled(sum, -2.0, root2)];
            let miss = |w: [f64; 2]| (norm(sub([w[0] / d, w[1] / d], zc)) - (rc + 1.0 / d)).abs();
            let tol = TOLERANCE * big;
            let wd = match (miss(cands[0]) <= tol, miss(cands[1]) <= tol) {
                (true, true) => cands[0].max_by_y(cands[1]),
                _ if miss(cands[0]) <= miss(cands[1]) => cands[0],
                _ => cands[1],
            };
            [
                OrientedCircle::scaled(a, [0.0, 0.0]),
                OrientedCircle::scaled(b, wb),
                OrientedCircle::scaled(c, wc),
                OrientedCircle::scaled(d, wd),
            ]
        }
        _ => {
            return Err(Error::Unsupported(format!(
                "no standard embedding for root {}",
                root.quad()
            )))
        }
    };
    ConfigMatrix::new(rows)
}

/// A configuration reached by a walk, with its exact curvatures.
#[derive(Clone, Debug)]
pub struct ConfigVisit {
    pub quad: Quadruple,
    pub config: ConfigMatrix,
    /// Slot of the newly created circle; `None` for the root.
    pub slot: Option<usize>,
    pub depth: u32,
}

/// Depth-first walk of non-returning flip words carrying both the exact
/// quadruple and its configuration matrix.
///
/// Children whose new curvature reaches `bound` are pruned, as are nodes deeper
/// than `max_depth`. The strip stabilizer and duplicate quadruples are skipped
/// exactly as in the exact enumerator, so the visits below the root correspond
/// one-to-one with counted circles.
pub fn walk_configurations<F>(
    root: &RootQuadruple,
    bound: Option<Curvature>,
    max_depth: Option<u32>,
    mut visit: F,
) -> Result<()>
where
    F: FnMut(&ConfigVisit) -> Result<()>,
{
    if bound.is_none() && max_depth.is_none() {
        return Err(Error::InvalidInput(
            "walk needs a curvature bound or a depth limit".into(),
        ));
    }
    let bound = bound.unwrap_or(Curvature::MAX);
    let quad = root.quad();
    let strip = root.kind() == PackingKind::Strip;
    let mut skip = [false; 4];
    if strip {
        for (s, k) in skip.iter_mut().enumerate() {
            *k = quad.flip(s).map(|f| f == quad).unwrap_or(false);
        }
    }
    let mut seen: Option<HashSet<Quadruple>> = strip.then(|| HashSet::from([quad]));
    let start = ConfigVisit {
        quad,
        config: standard_embedding(root)?,
        slot: None,
        depth: 0,
    };
    visit(&start)?;
    let mut stack = vec![start];
    while let Some(node) = stack.pop() {
        if max_depth.is_some_and(|m| node.depth >= m) {
            continue;
        }
        for slot in (0..4).rev() {
            if Some(slot) == node.slot || (node.slot.is_none() && skip[slot]) {
                continue;
            }
            let q = node.quad.flip(slot)?;
            if q.get(slot) >= bound {
                continue;
            }
            if let Some(seen) = seen.as_mut() {
                if !seen.insert(q) {
                    continue;
                }
            }
            let child = ConfigVisit {
                quad: q,
                config: node.config.propagate(slot)?,
                slot: Some(slot),
                depth: node.depth + 1,
            };
            visit(&child)?;
            stack.push(child);
        }
    }
    Ok(())
}

/// Stop rule and styling for [`render_svg`].
#[derive(Clone, Debug, PartialEq)]
pub struct RenderOptions {
    /// Draw circles of curvature `< bound`.
    pub bound: Option<Curvature>,
    /// Draw circles created by at most this many flips.
    pub max_depth: Option<u32>,
    pub labels: bool,
    pub element_cap: usize,
    /// Width and height of the SVG viewport in pixels.
    pub size: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            bound: None,
            max_depth: None,
            labels: false,
            element_cap: DEFAULT_ELEMENT_CAP,
            size: 800.0,
        }
    }
}

fn num(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    match s {
        "-0" | "" => "0".to_string(),
        _ => s.to_string(),
    }
}

/// Renders the packing of `root` in its standard embedding.
///
/// Emits one `<circle>` per circle and one `<line>` per straight line, in walk
/// order, so the element count equals the circle count for the same bound.
pub fn render_svg(root: &RootQuadruple, opts: &RenderOptions) -> Result<String> {
    let mut items: Vec<(Curvature, Shape)> = Vec::new();
    let bound = opts.bound.unwrap_or(Curvature::MAX);
    walk_configurations(root, opts.bound, opts.max_depth, |v| {
        let slots: Vec<usize> = match v.slot {
            None => (0..4).filter(|&s| v.quad.get(s) < bound).collect(),
            Some(s) => vec![s],
        };
        for s in slots {
            if items.len() == opts.element_cap {
                return Err(Error::Resource(format!(
                    "more than {} SVG elements",
                    opts.element_cap
                )));
            }
            items.push((v.quad.get(s), v.config.row(s).shape()?));
        }
        Ok(())
    })?;

    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for (_, shape) in &items {
        if let Shape::Circle { center, radius, .. } = shape {
            for k in 0..2 {
                lo[k] = lo[k].min(center[k] - radius);
                hi[k] = hi[k].max(center[k] + radius);
            }
        }
    }
    if !lo[0].is_finite() {
        lo = [-1.0, -1.0];
        hi = [1.0, 1.0];
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let pad = 0.02 * span;
    let (x0, y0, side) = (lo[0] - pad, lo[1] - pad, span + 2.0 * pad);
    let stroke = side / 1000.0;

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{}" viewBox="{} {} {} {}">"#,
        num(opts.size),
        num(opts.size),
        num(x0),
        num(y0),
        num(side),
        num(side)
    );
    // Flip y so the picture matches the usual orientation of the plane.
    let _ = writeln!(
        out,
        r#"<g transform="translate(0 {}) scale(1 -1)" fill="none" stroke="black" stroke-width="{}">"#,
        num(2.0 * y0 + side),
        num(stroke)
    );
    for (curv, shape) in &items {
        match shape {
            Shape::Circle { center, radius, .. } => {
                let _ = writeln!(
                    out,
                    r#"<circle cx="{}" cy="{}" r="{}" data-curvature="{curv}"/>"#,
                    num(center[0]),
                    num(center[1]),
                    num(*radius)
                );
            }
            Shape::Line { normal, offset } => {
                let p = [normal[0] * offset, normal[1] * offset];
                let dir = [-normal[1], normal[0]];
                let (t0, t1) = if dir[0].abs() >= dir[1].abs() {
                    ((x0 - p[0]) / dir[0], (x0 + side - p[0]) / dir[0])
                } else {
                    ((y0 - p[1]) / dir[1], (y0 + side - p[1]) / dir[1])
                };
                let (a, b) = (add_scaled(p, t0, dir), add_scaled(p, t1, dir));
                let _ = writeln!(
                    out,
                    r#"<line x1="{}" y1="{}" x2="{}" y2="{}" data-curvature="0"/>"#,
                    num(a[0]),
                    num(a[1]),
                    num(b[0]),
                    num(b[1])
                );
            }
        }
    }
    let _ = writeln!(out, "</g>");
    if opts.labels {
        let _ = writeln!(
            out,
            r#"<g font-family="sans-serif" text-anchor="middle" dominant-baseline="central">"#
        );
        for (curv, shape) in &items {
            if let Shape::Circle {
                center,
                radius,
                inward: false,
            } = shape
            {
                let _ = writeln!(
                    out,
                    r#"<text x="{}" y="{}" font-size="{}">{curv}</text>"#,
                    num(center[0]),
                    num(2.0 * y0 + side - center[1]),
                    num(radius * 0.6)
                );
            }
        }
        let _ = writeln!(out, "</g>");
    }
    let _ = writeln!(out, "</svg>");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbit::{count_circles, EnumerationOptions};
    use proptest::prelude::*;

    fn root(a: i128, b: i128, c: i128, d: i128) -> RootQuadruple {
        RootQuadruple::new(Quadruple::new(a, b, c, d)).unwrap()
    }

    fn elements(svg: &str) -> (usize, usize) {
        (svg.matches("<circle").count(), svg.matches("<line").count())
    }

    #[test]
    fn wilker_form_shape() {
        let q = WilkerForm::matrix();
        assert_eq!(q, q.transpose());
        assert_eq!(WilkerForm::signature(), (3, 1));
    }

    #[test]
    fn standard_embedding_of_basic_root() {
        let w = standard_embedding(&root(-1, 2, 2, 3)).unwrap();
        let expect = [
            [1.0, -1.0, 0.0, 0.0],
            [0.0, 2.0, -1.0, 0.0],
            [0.0, 2.0, 1.0, 0.0],
            [1.0, 3.0, 0.0, 2.0],
        ];
        for (r, e) in w.rows().iter().zip(expect) {
            for (x, y) in r.as_array().iter().zip(e) {
                assert!((x - y).abs() < 1e-12, "{r:?} vs {e:?}");
            }
        }
    }

    #[test]
    fn circle_from_row_examples() {
        let Shape::Circle {
            center,
            radius,
            inward,
        } = circle_from_row(&OrientedCircle::new(0.0, 2.0, 1.0, 0.0)).unwrap()
        else {
            panic!()
        };
        assert_eq!((center, radius, inward), ([0.5, 0.0], 0.5, false));
        let Shape::Circle {
            center,
            radius,
            inward,
        } = circle_from_row(&OrientedCircle::new(1.0, -1.0, 0.0, 0.0)).unwrap()
        else {
            panic!()
        };
        assert_eq!((center, radius, inward), ([0.0, 0.0], 1.0, true));
        assert_eq!(
            circle_from_row(&OrientedCircle::new(0.0, 0.0, 0.0, 1.0)).unwrap(),
            Shape::Line {
                normal: [0.0, 1.0],
                offset: 0.0
            }
        );
        assert!(matches!(
            circle_from_row(&OrientedCircle::new(5.0, 2.0, 1.0, 0.0)),
            Err(Error::InvalidConfiguration(_))
        ));
    }

    #[test]
    fn tangency_examples() {
        let a = OrientedCircle::circle(2.0, [-0.5, 0.0]);
        let b = OrientedCircle::circle(2.0, [0.5, 0.0]);
        let outer = OrientedCircle::circle(-1.0, [0.0, 0.0]);
        assert!(tangency_check(&a, &b));
        assert!(tangency_check(&outer, &b));
        let u = OrientedCircle::circle(1.0, [0.0, 0.0]);
        let v = OrientedCircle::circle(1.0, [3.0, 0.0]);
        assert!(!tangency_check(&u, &v));
        // Same circles with the wrong orientation are not compatible.
        assert!(!tangency_check(
            &OrientedCircle::circle(1.0, [0.0, 0.0]),
            &b
        ));
    }

    #[test]
    fn propagation_examples() {
        let w = standard_embedding(&root(-1, 2, 2, 3)).unwrap();
        let p = w.propagate(0).unwrap();
        assert_eq!(p.curvatures(), [15.0, 2.0, 2.0, 3.0]);
        p.validate().unwrap();
        for i in 0..4 {
            let back = w.propagate(i).unwrap().propagate(i).unwrap();
            for (r, s) in back.rows().iter().zip(w.rows()) {
                for (x, y) in r.as_array().iter().zip(s.as_array()) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
        let strip = standard_embedding(&root(0, 0, 1, 1)).unwrap();
        for slot in [2, 3] {
            let p = strip.propagate(slot).unwrap();
            assert_eq!(p.row(0), strip.row(0));
            assert_eq!(p.row(1), strip.row(1));
            p.validate().unwrap();
        }
    }

    #[test]
    fn conjugation_examples() {
        let w = standard_embedding(&root(-1, 2, 2, 3)).unwrap();
        assert!(w.conjugation_check().unwrap() < 1e-8);
        let strip = standard_embedding(&root(0, 0, 1, 1)).unwrap();
        assert!(strip.conjugation_check().unwrap() < 1e-8);
        let identity = ConfigMatrix::from_rows([
            OrientedCircle::new(1.0, 0.0, 0.0, 0.0),
            OrientedCircle::new(0.0, 1.0, 0.0, 0.0),
            OrientedCircle::new(0.0, 0.0, 1.0, 0.0),
            OrientedCircle::new(0.0, 0.0, 0.0, 1.0),
        ]);
        assert!(matches!(
            identity.conjugation_check(),
            Err(Error::InvalidConfiguration(_))
        ));
    }

    #[test]
    fn dual_circle_and_inversion() {
        for r in [root(-1, 2, 2, 3), root(0, 0, 1, 1), root(-6, 11, 14, 15)] {
            let w = standard_embedding(&r).unwrap();
            for i in 0..4 {
                let dual = w.dual_circle(i).unwrap();
                let rows: Vec<_> = (0..4).filter(|&j| j != i).collect();
                for (a, b) in [(0, 1), (0, 2), (1, 2)] {
                    if let Some(p) = tangency_point(w.row(rows[a]), w.row(rows[b])) {
                        assert!(dual.contains_point(p, 1e-9));
                    }
                }
                let image = invert_circle(&w.row(i).shape().unwrap(), &dual).unwrap();
                let target = w.propagate(i).unwrap().row(i).shape().unwrap();
                assert!(
                    image.approx_eq(&target, 1e-7),
                    "{r} slot {i}: {image:?} vs {target:?}"
                );
                for &j in &rows {
                    let s = w.row(j).shape().unwrap();
                    assert!(invert_circle(&s, &dual).unwrap().approx_eq(&s, 1e-7));
                }
            }
        }
    }

    #[test]
    fn inversion_basics() {
        let unit = Shape::Circle {
            center: [0.0, 0.0],
            radius: 1.0,
            inward: false,
        };
        assert!(invert_circle(&unit, &unit).unwrap().approx_eq(&unit, 1e-12));
        let c = Shape::Circle {
            center: [0.3, -0.2],
            radius: 0.1,
            inward: false,
        };
        let twice = invert_circle(&invert_circle(&c, &unit).unwrap(), &unit).unwrap();
        assert!(twice.approx_eq(&c, 1e-10));
        let through = Shape::Circle {
            center: [0.5, 0.0],
            radius: 0.5,
            inward: false,
        };
        let line = invert_circle(&through, &unit).unwrap();
        assert!(line.approx_eq(
            &Shape::Line {
                normal: [1.0, 0.0],
                offset: 1.0
            },
            1e-12
        ));
        assert!(invert_circle(&line, &unit)
            .unwrap()
            .approx_eq(&through, 1e-12));
    }

    #[test]
    fn dual_circle_rejects_coincident_points() {
        let c = OrientedCircle::circle(1.0, [0.0, 0.0]);
        let w = ConfigMatrix::from_rows([c, c, c, c]);
        assert!(matches!(
            w.dual_circle(0),
            Err(Error::InvalidConfiguration(_))
        ));
    }

    #[test]
    fn walk_invariants_to_depth_six() {
        for r in [root(-1, 2, 2, 3), root(0, 0, 1, 1), root(-2, 3, 6, 7)] {
            let mut visits = 0;
            walk_configurations(&r, None, Some(6), |v| {
                visits += 1;
                let exact = v.quad.0.map(|x| x as f64);
                assert_eq!(v.config.curvatures(), exact);
                let (row, pair) = v.config.residuals();
                assert!(
                    row <= 1e-9 && pair <= 1e-9,
                    "{} at depth {}: {row:e} {pair:e}",
                    v.quad,
                    v.depth
                );
                assert!(v.config.conjugation_check()? < 1e-6);
                Ok(())
            })
            .unwrap();
            assert!(visits > 1);
        }
    }

    #[test]
    fn svg_examples() {
        let basic = root(-1, 2, 2, 3);
        let svg = render_svg(
            &basic,
            &RenderOptions {
                bound: Some(10),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(elements(&svg), (9, 0));
        let n = count_circles(&basic, 10, &EnumerationOptions::default()).unwrap();
        assert_eq!(n, 9);
        let svg0 = render_svg(
            &basic,
            &RenderOptions {
                max_depth: Some(0),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(elements(&svg0), (4, 0));
        let strip = root(0, 0, 1, 1);
        let svg = render_svg(
            &strip,
            &RenderOptions {
                bound: Some(50),
                labels: true,
                ..Default::default()
            },
        )
        .unwrap();
        let (c, l) = elements(&svg);
        assert_eq!(l, 2);
        assert_eq!(
            (c + l) as u64,
            count_circles(&strip, 50, &EnumerationOptions::default()).unwrap()
        );
        assert_eq!(
            svg,
            render_svg(
                &strip,
                &RenderOptions {
                    bound: Some(50),
                    labels: true,
                    ..Default::default()
                }
            )
            .unwrap()
        );
        let capped = RenderOptions {
            bound: Some(1000),
            element_cap: 10,
            ..Default::default()
        };
        assert!(matches!(
            render_svg(&basic, &capped),
            Err(Error::Resource(_))
        ));
        assert!(render_svg(&basic, &RenderOptions::default()).is_err());
    }

    #[test]
    fn csv_dump() {
        let w = standard_embedding(&root(-1, 2, 2, 3)).unwrap();
        let text = w.to_csv().unwrap();
        assert_eq!(text.lines().next(), Some("cocurv,curv,cx,cy"));
        assert_eq!(text.lines().count(), 5);
    }

    proptest! {
        #[test]
        fn random_propagations_stay_conjugate(word in prop::collection::vec(0usize..4, 10)) {
            let w = standard_embedding(&root(-1, 2, 2, 3)).unwrap();
            let mut q = Quadruple::new(-1, 2, 2, 3);
            let mut cur = w;
            for &s in &word {
                cur = cur.propagate(s).unwrap();
                q = q.flip(s).unwrap();
            }
            prop_assert_eq!(cur.curvatures(), q.0.map(|x| x as f64));
            prop_assert!(cur.conjugation_check().unwrap() < 1e-6);
        }

        #[test]
        fn inversion_matches_propagation(word in prop::collection::vec(0usize..4, 0..4), slot in 0usize..4) {
            let w = standard_embedding(&root(-1, 2, 2, 3)).unwrap().propagate_word(&word).unwrap();
            let image = invert_circle(&w.row(slot).shape().unwrap(), &w.dual_circle(slot).unwrap()).unwrap();
            let target = w.propagate(slot).unwrap().row(slot).shape().unwrap();
            prop_assert!(image.approx_eq(&target, 1e-7));
        }
    }
}
