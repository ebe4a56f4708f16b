//! Two-dimensional closed subgroups of the plane and their dual groups.
//!
//! Three shapes are supported: the full plane (`H1`), a discrete stack of
//! lines `b Z u + R v` with orthonormal `(u, v)` (`H2`), and a genuine lattice
//! `B Z^2` (`H3`). Each carries its dual group, the short-vector constant
//! `epsilon_S`, the Haar normalization constant `c_S`, and a fundamental
//! domain for the quotient of the plane by the dual.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for deciding that a point sits on the subgroup.
const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub enum LatticeVariant {
    /// The whole plane.
    H1,
    /// `pitch * Z * u + R * v` with `(u, v)` orthonormal.
    H2 {
        pitch: f64,
        u: Vector2<f64>,
        v: Vector2<f64>,
    },
    /// `basis * Z^2` with invertible `basis`.
    H3 { basis: Matrix2<f64> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "LatticeSpecJson", into = "LatticeSpecJson")]
pub struct LatticeSpec {
    variant: LatticeVariant,
    epsilon_s: f64,
    c_s: f64,
    dual: Vec<Vector2<f64>>,
    /// `basis^{-1}`, H3 only.
    basis_inv: Option<Matrix2<f64>>,
    /// Dual basis `A = 2 pi (B^T)^{-1}`, H3 only.
    dual_basis: Option<Matrix2<f64>>,
}

impl LatticeSpec {
    /// The full plane; `epsilon_S` is fixed to 1 by convention.
    pub fn h1() -> Self {
        Self {
            variant: LatticeVariant::H1,
            epsilon_s: 1.0,
            c_s: 1.0,
            dual: Vec::new(),
            basis_inv: None,
            dual_basis: None,
        }
    }

    pub fn h2(pitch: f64, u: Vector2<f64>, v: Vector2<f64>) -> Result<Self> {
        if !(pitch > 0.0) || !pitch.is_finite() {
            return Err(Error::InvalidLattice(format!(
                "H2 pitch must be positive, got {pitch}"
            )));
        }
        let tol = 1e-9;
        if (u.norm() - 1.0).abs() > tol || (v.norm() - 1.0).abs() > tol {
            return Err(Error::InvalidLattice(
                "H2 direction vectors must be unit length".into(),
            ));
        }
        if u.dot(&v).abs() > tol {
            return Err(Error::InvalidLattice(
                "H2 direction vectors must be orthogonal".into(),
            ));
        }
        let a = 2.0 * std::f64::consts::PI / pitch;
        Ok(Self {
            variant: LatticeVariant::H2 { pitch, u, v },
            epsilon_s: pitch,
            c_s: pitch,
            dual: vec![a * u],
            basis_inv: None,
            dual_basis: None,
        })
    }

    pub fn h3(basis: Matrix2<f64>) -> Result<Self> {
        let det = basis.determinant();
        if det.abs() < 1e-12 || !det.is_finite() {
            return Err(Error::InvalidLattice(format!(
                "H3 basis is singular (det = {det:.3e})"
            )));
        }
        let basis_inv = basis
            .try_inverse()
            .ok_or_else(|| Error::InvalidLattice("H3 basis is singular".into()))?;
        let epsilon_s = shortest_vector(&basis);
        let dual_basis = 2.0 * std::f64::consts::PI * basis.transpose().try_inverse().unwrap();
        let dual = vec![dual_basis.column(0).into(), dual_basis.column(1).into()];
        Ok(Self {
            variant: LatticeVariant::H3 { basis },
            epsilon_s,
            c_s: det.abs(),
            dual,
            basis_inv: Some(basis_inv),
            dual_basis: Some(dual_basis),
        })
    }

    pub fn variant(&self) -> &LatticeVariant {
        &self.variant
    }

    pub fn variant_name(&self) -> &'static str {
        match self.variant {
            LatticeVariant::H1 => "H1",
            LatticeVariant::H2 { .. } => "H2",
            LatticeVariant::H3 { .. } => "H3",
        }
    }

    /// Shortest nonzero vector length (H3), pitch (H2), or 1 (H1).
    pub fn epsilon_s(&self) -> f64 {
        self.epsilon_s
    }

    /// Haar normalization constant entering the local-limit constant.
    pub fn c_s(&self) -> f64 {
        self.c_s
    }

    /// Generators of the dual group: empty for H1, one vector for H2, two for H3.
    pub fn dual_generators(&self) -> &[Vector2<f64>] {
        &self.dual
    }

    /// H3 basis matrix.
    pub fn basis(&self) -> Option<&Matrix2<f64>> {
        match &self.variant {
            LatticeVariant::H3 { basis } => Some(basis),
            _ => None,
        }
    }

    /// Dual basis `A = 2 pi (B^T)^{-1}` for H3.
    pub fn dual_basis(&self) -> Option<&Matrix2<f64>> {
        self.dual_basis.as_ref()
    }

    /// Distance from `p` to the nearest subgroup element.
    pub fn distance(&self, p: &Vector2<f64>) -> f64 {
        match &self.variant {
            LatticeVariant::H1 => 0.0,
            LatticeVariant::H2 { pitch, u, .. } => {
                let cu = p.dot(u);
                (cu - pitch * (cu / pitch).round()).abs()
            }
            LatticeVariant::H3 { basis } => {
                let coords = self.basis_inv.as_ref().unwrap() * p;
                let k = Vector2::new(coords.x.round(), coords.y.round());
                (p - basis * k).norm()
            }
        }
    }

    /// Membership test with tolerance `1e-9 * (1 + |p|)`.
    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        self.distance(p) < MEMBERSHIP_TOL * (1.0 + p.norm())
    }

    /// Integer coordinates of an H3 lattice point.
    pub fn integer_coords(&self, p: &Vector2<f64>) -> Result<[i64; 2]> {
        match &self.variant {
            LatticeVariant::H3 { .. } => {
                if !self.contains(p) {
                    return Err(Error::OffLattice(p.x, p.y));
                }
                let coords = self.basis_inv.as_ref().unwrap() * p;
                Ok([coords.x.round() as i64, coords.y.round() as i64])
            }
            _ => Err(Error::UnsupportedLattice(self.variant_name())),
        }
    }

    /// The H3 lattice point with integer coordinates `k`.
    pub fn point(&self, k: [i64; 2]) -> Result<Vector2<f64>> {
        match &self.variant {
            LatticeVariant::H3 { basis } => {
                Ok(basis * Vector2::new(k[0] as f64, k[1] as f64))
            }
            _ => Err(Error::UnsupportedLattice(self.variant_name())),
        }
    }

    /// Haar measure of the open ball `B(s, eps)` intersected with the
    /// subgroup: disk area for H1, segment length `2 eps` for H2, a unit atom
    /// for H3. Requires `eps < epsilon_S` for H2/H3 so the intersection has
    /// the stated shape.
    pub fn haar_ball(&self, s: &Vector2<f64>, eps: f64) -> Result<f64> {
        if !(eps > 0.0) {
            return Err(Error::Domain(format!("ball radius must be positive, got {eps}")));
        }
        if !self.contains(s) {
            return Err(Error::OffLattice(s.x, s.y));
        }
        match &self.variant {
            LatticeVariant::H1 => Ok(std::f64::consts::PI * eps * eps),
            LatticeVariant::H2 { .. } => {
                if eps >= self.epsilon_s {
                    return Err(Error::BallTooLarge {
                        eps,
                        epsilon_s: self.epsilon_s,
                    });
                }
                Ok(2.0 * eps)
            }
            LatticeVariant::H3 { .. } => {
                if eps >= self.epsilon_s {
                    return Err(Error::BallTooLarge {
                        eps,
                        epsilon_s: self.epsilon_s,
                    });
                }
                Ok(1.0)
            }
        }
    }

    /// Representative of `t` in the fundamental domain of the quotient by the
    /// dual group; the difference `t - result` lies in the dual group.
    pub fn reduce_mod_dual(&self, t: &Vector2<f64>) -> Vector2<f64> {
        match &self.variant {
            LatticeVariant::H1 => *t,
            LatticeVariant::H2 { u, .. } => {
                let a = 2.0 * std::f64::consts::PI / self.epsilon_s;
                let cu = t.dot(u);
                t - a * (cu / a).round() * u
            }
            LatticeVariant::H3 { .. } => {
                let a = self.dual_basis.as_ref().unwrap();
                let coords = a.try_inverse().unwrap() * t;
                let k = Vector2::new(coords.x.round(), coords.y.round());
                t - a * k
            }
        }
    }

    /// Local-limit constant `(2 pi)^{-1} c_S (det Gamma)^{-1/2}`.
    pub fn llt_constant(&self, gamma: &Matrix2<f64>) -> Result<f64> {
        let det = gamma.determinant();
        let scale = gamma.norm().max(1.0);
        if det <= 1e-12 * scale * scale {
            return Err(Error::DegenerateCovariance(det));
        }
        Ok(self.c_s / (2.0 * std::f64::consts::PI * det.sqrt()))
    }
}

/// Shortest nonzero vector of `B Z^2`, by enumeration over the box
/// `|k|_inf <= ceil(2 sigma_max / sigma_min)` guaranteed to contain it.
fn shortest_vector(basis: &Matrix2<f64>) -> f64 {
    let svd = basis.svd(false, false);
    let smax = svd.singular_values[0].max(svd.singular_values[1]);
    let smin = svd.singular_values[0].min(svd.singular_values[1]);
    let bound = (2.0 * smax / smin).ceil() as i64;
    let mut best = f64::INFINITY;
    for kx in -bound..=bound {
        for ky in -bound..=bound {
            if kx == 0 && ky == 0 {
                continue;
            }
            let p = basis * Vector2::new(kx as f64, ky as f64);
            let norm = p.norm();
            if norm < best {
                best = norm;
            }
        }
    }
    best
}

/// Wire format for lattice specifications.
#[derive(Serialize, Deserialize)]
struct LatticeSpecJson {
    variant: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    u: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    v: Option<[f64; 2]>,
    #[serde(rename = "Bmatrix", skip_serializing_if = "Option::is_none")]
    bmatrix: Option<[[f64; 2]; 2]>,
}

impl TryFrom<LatticeSpecJson> for LatticeSpec {
    type Error = Error;

    fn try_from(j: LatticeSpecJson) -> Result<Self> {
        match j.variant.as_str() {
            "H1" => Ok(LatticeSpec::h1()),
            "H2" => {
                let b = j
                    .b
                    .ok_or_else(|| Error::InvalidLattice("H2 requires field \"b\"".into()))?;
                let u = j
                    .u
                    .ok_or_else(|| Error::InvalidLattice("H2 requires field \"u\"".into()))?;
                let v = j
                    .v
                    .ok_or_else(|| Error::InvalidLattice("H2 requires field \"v\"".into()))?;
                LatticeSpec::h2(b, Vector2::new(u[0], u[1]), Vector2::new(v[0], v[1]))
            }
            "H3" => {
                let m = j.bmatrix.ok_or_else(|| {
                    Error::InvalidLattice("H3 requires field \"Bmatrix\"".into())
                })?;
                LatticeSpec::h3(Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1]))
            }
            other => Err(Error::InvalidLattice(format!("unknown variant {other:?}"))),
        }
    }
}

impl From<LatticeSpec> for LatticeSpecJson {
    fn from(spec: LatticeSpec) -> Self {
        match spec.variant {
            LatticeVariant::H1 => LatticeSpecJson {
                variant: "H1".into(),
                b: None,
                u: None,
                v: None,
                bmatrix: None,
            },
            LatticeVariant::H2 { pitch, u, v } => LatticeSpecJson {
                variant: "H2".into(),
                b: Some(pitch),
                u: Some([u.x, u.y]),
                v: Some([v.x, v.y]),
                bmatrix: None,
            },
            LatticeVariant::H3 { basis } => LatticeSpecJson {
                variant: "H3".into(),
                b: None,
                u: None,
                v: None,
                bmatrix: Some([
                    [basis[(0, 0)], basis[(0, 1)]],
                    [basis[(1, 0)], basis[(1, 1)]],
                ]),
            },
        }
    }
}
