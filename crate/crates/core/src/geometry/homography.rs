use super::{ConvexQuad, GeometryError, Mat2, Vec2, TOL};
use crate::linalg::DenseMatrix;

/// Plane projective map, stored as a 3×3 matrix normalized to `h[2][2] = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    h: [[f64; 3]; 3],
}

impl Homography {
    pub const IDENTITY: Homography = Homography {
        h: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Normalizes by `h[2][2]` and checks the determinant.
    pub fn from_matrix(h: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        let s = h[2][2];
        if !s.is_finite() || s.abs() <= TOL.singularity_epsilon {
            return Err(GeometryError::SingularSystem);
        }
        let mut n = h;
        n.iter_mut().flatten().for_each(|v| *v /= s);
        let out = Homography { h: n };
        if !(out.det().abs() > TOL.singularity_epsilon) {
            return Err(GeometryError::SingularSystem);
        }
        Ok(out)
    }

    pub fn translation(d: Vec2) -> Self {
        Homography { h: [[1.0, 0.0, d.x], [0.0, 1.0, d.y], [0.0, 0.0, 1.0]] }
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.h
    }

    pub fn det(&self) -> f64 {
        let h = &self.h;
        h[0][0] * (h[1][1] * h[2][2] - h[1][2] * h[2][1])
            - h[0][1] * (h[1][0] * h[2][2] - h[1][2] * h[2][0])
            + h[0][2] * (h[1][0] * h[2][1] - h[1][1] * h[2][0])
    }

    fn denominator(&self, p: Vec2) -> Result<f64, GeometryError> {
        let w = self.h[2][0] * p.x + self.h[2][1] * p.y + self.h[2][2];
        if w.abs() <= TOL.projective_epsilon {
            return Err(GeometryError::ProjectiveInfinity(w));
        }
        Ok(w)
    }

    pub fn apply(&self, p: Vec2) -> Result<Vec2, GeometryError> {
        let h = &self.h;
        let w = self.denominator(p)?;
        Ok(Vec2::new(
            (h[0][0] * p.x + h[0][1] * p.y + h[0][2]) / w,
            (h[1][0] * p.x + h[1][1] * p.y + h[1][2]) / w,
        ))
    }

    /// Inverse map, renormalized.
    pub fn invert(&self) -> Result<Homography, GeometryError> {
        let det = self.det();
        if det.abs() <= TOL.singularity_epsilon {
            return Err(GeometryError::SingularSystem);
        }
        let h = &self.h;
        let adj = [
            [
                h[1][1] * h[2][2] - h[1][2] * h[2][1],
                h[0][2] * h[2][1] - h[0][1] * h[2][2],
                h[0][1] * h[1][2] - h[0][2] * h[1][1],
            ],
            [
                h[1][2] * h[2][0] - h[1][0] * h[2][2],
                h[0][0] * h[2][2] - h[0][2] * h[2][0],
                h[0][2] * h[1][0] - h[0][0] * h[1][2],
            ],
            [
                h[1][0] * h[2][1] - h[1][1] * h[2][0],
                h[0][1] * h[2][0] - h[0][0] * h[2][1],
                h[0][0] * h[1][1] - h[0][1] * h[1][0],
            ],
        ];
        Homography::from_matrix(adj)
    }

    /// Derivative of [`apply`](Self::apply) with respect to the input point.
    pub fn jacobian(&self, p: Vec2) -> Result<Mat2, GeometryError> {
        let h = &self.h;
        let w = self.denominator(p)?;
        let nu = h[0][0] * p.x + h[0][1] * p.y + h[0][2];
        let nv = h[1][0] * p.x + h[1][1] * p.y + h[1][2];
        let w2 = w * w;
        Ok(Mat2::new(
            (h[0][0] * w - nu * h[2][0]) / w2,
            (h[0][1] * w - nu * h[2][1]) / w2,
            (h[1][0] * w - nv * h[2][0]) / w2,
            (h[1][1] * w - nv * h[2][1]) / w2,
        ))
    }
}

/// The projective map sending `src` vertex `i` to `dst` vertex `i`, from the
/// 8×8 direct linear transform system.
pub fn homography_from_quads(src: &ConvexQuad, dst: &ConvexQuad) -> Result<Homography, GeometryError> {
    homography_from_points(src.vertices(), dst.vertices())
}

pub(crate) fn homography_from_points(src: &[Vec2; 4], dst: &[Vec2; 4]) -> Result<Homography, GeometryError> {
    // Centering both point sets keeps the system well scaled for quads far
    // from the origin; the offsets are folded back into the matrix below.
    let cs = src.iter().copied().sum::<Vec2>() / 4.0;
    let cd = dst.iter().copied().sum::<Vec2>() / 4.0;
    let mut a = DenseMatrix::zeros(8);
    let mut b = vec![0.0; 8];
    for i in 0..4 {
        let (x, y) = ((src[i] - cs).x, (src[i] - cs).y);
        let (u, v) = ((dst[i] - cd).x, (dst[i] - cd).y);
        let r = 2 * i;
        a[(r, 0)] = x;
        a[(r, 1)] = y;
        a[(r, 2)] = 1.0;
        a[(r, 6)] = -x * u;
        a[(r, 7)] = -y * u;
        b[r] = u;
        a[(r + 1, 3)] = x;
        a[(r + 1, 4)] = y;
        a[(r + 1, 5)] = 1.0;
        a[(r + 1, 6)] = -x * v;
        a[(r + 1, 7)] = -y * v;
        b[r + 1] = v;
    }
    let s = a.solve(&b).map_err(|_| GeometryError::SingularSystem)?;
    if s.iter().any(|v| !v.is_finite()) {
        return Err(GeometryError::SingularSystem);
    }
    let centered = [[s[0], s[1], s[2]], [s[3], s[4], s[5]], [s[6], s[7], 1.0]];
    // H = T(cd) · H_centered · T(-cs)
    let left = [[1.0, 0.0, cd.x], [0.0, 1.0, cd.y], [0.0, 0.0, 1.0]];
    let right = [[1.0, 0.0, -cs.x], [0.0, 1.0, -cs.y], [0.0, 0.0, 1.0]];
    Homography::from_matrix(mat3_mul(&mat3_mul(&left, &centered), &right))
}

fn mat3_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}
