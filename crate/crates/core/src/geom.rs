//! Small fixed-size linear algebra for the plane.


#[allow(unused_imports)]
use num_traits::Float;
pub type Vec2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

pub const ZERO: Vec2 = [0.0, 0.0];
pub const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

#[inline]
pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn cross(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub fn norm(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}

#[inline]
pub fn add(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn scale(a: Vec2, s: f64) -> Vec2 {
    [a[0] * s, a[1] * s]
}

#[inline]
pub fn neg(a: Vec2) -> Vec2 {
    [-a[0], -a[1]]
}

/// Counter-clockwise rotation by a quarter turn.
#[inline]
pub fn perp(a: Vec2) -> Vec2 {
    [-a[1], a[0]]
}

#[inline]
pub fn normalize(a: Vec2) -> Option<Vec2> {
    let n = norm(a);
    (n > 0.0 && n.is_finite()).then(|| scale(a, 1.0 / n))
}

#[inline]
pub fn unit(angle: f64) -> Vec2 {
    [angle.cos(), angle.sin()]
}

#[inline]
pub fn mat_vec(m: Mat2, v: Vec2) -> Vec2 {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

/// `v · M v`
#[inline]
pub fn quad(m: Mat2, v: Vec2) -> f64 {
    dot(v, mat_vec(m, v))
}

#[inline]
pub fn det(m: Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

pub fn inverse(m: Mat2) -> Option<Mat2> {
    let d = det(m);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    Some([[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]])
}

#[inline]
pub fn outer(a: Vec2, b: Vec2) -> Mat2 {
    [[a[0] * b[0], a[0] * b[1]], [a[1] * b[0], a[1] * b[1]]]
}

#[inline]
pub fn mat_scale(m: Mat2, s: f64) -> Mat2 {
    [[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]]
}

#[inline]
pub fn mat_add(a: Mat2, b: Mat2) -> Mat2 {
    [
        [a[0][0] + b[0][0], a[0][1] + b[0][1]],
        [a[1][0] + b[1][0], a[1][1] + b[1][1]],
    ]
}

/// Frobenius inner product `A : B`.
#[inline]
pub fn frobenius(a: Mat2, b: Mat2) -> f64 {
    a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
}

/// Eigen-decomposition of a symmetric 2x2 matrix: `(eigenvalues ascending, unit eigenvectors)`.
pub fn sym_eigen(m: Mat2) -> ([f64; 2], [Vec2; 2]) {
    let a = m[0][0];
    let b = 0.5 * (m[0][1] + m[1][0]);
    let c = m[1][1];
    let mean = 0.5 * (a + c);
    let r = (0.5 * (a - c)).hypot(b);
    let lo = mean - r;
    let hi = mean + r;
    let angle = 0.5 * (2.0 * b).atan2(a - c);
    let v_hi = unit(angle);
    let v_lo = perp(v_hi);
    ([lo, hi], [v_lo, v_hi])
}

/// Rotates by `−angle`.
#[inline]
pub fn rotate_inv(v: Vec2, angle: f64) -> Vec2 {
    let (s, c) = angle.sin_cos();
    [c * v[0] + s * v[1], -s * v[0] + c * v[1]]
}

/// Rotates by `angle`.
#[inline]
pub fn rotate(v: Vec2, angle: f64) -> Vec2 {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}
