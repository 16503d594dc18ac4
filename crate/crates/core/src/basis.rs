//! Linear signal dictionaries evaluated on a gradient scheme.
//!
//! The default dictionary is the isotropic SHORE basis: Gaussian-weighted
//! generalized Laguerre polynomials in q² times real, even-order spherical
//! harmonics. Rows are DW channels only; b0 channels are handled apart.
//!
//! Real SH convention: orthonormal on the sphere, no Condon–Shortley
//! phase, `m > 0` carries `cos(mφ)` and `m < 0` carries `sin(|m|φ)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradients::GradientScheme;

pub const DEFAULT_RADIAL_ORDER: usize = 6;
pub const DEFAULT_ZETA: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomLabel {
    /// Radial index.
    pub n: usize,
    /// Angular order (even).
    pub l: usize,
    pub m: i32,
}

/// How b-values map to q-space radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QMapping {
    /// `q = sqrt(b)`: diffusion time chosen so that 4π²τ = 1.
    SqrtB,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShoreParams {
    pub radial_order: usize,
    pub zeta: f64,
    pub q_mapping: QMapping,
}

impl Default for ShoreParams {
    fn default() -> Self {
        ShoreParams {
            radial_order: DEFAULT_RADIAL_ORDER,
            zeta: DEFAULT_ZETA,
            q_mapping: QMapping::SqrtB,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DictionaryParams {
    Shore(ShoreParams),
    Custom,
}

/// Design matrix with one row per DW channel and one column per atom.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    matrix: DMatrix<f64>,
    atoms: Vec<AtomLabel>,
    params: DictionaryParams,
    channels: Vec<usize>,
}

impl Dictionary {
    /// Wraps an arbitrary design matrix. `channels[i]` names the scheme
    /// channel behind row `i`.
    pub fn from_matrix(matrix: DMatrix<f64>, channels: Vec<usize>) -> Result<Self> {
        if matrix.nrows() != channels.len() {
            return Err(Error::Dimension(format!(
                "{} rows but {} channel ids",
                matrix.nrows(),
                channels.len()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite dictionary entry".into()));
        }
        Ok(Dictionary {
            atoms: (0..matrix.ncols()).map(|k| AtomLabel { n: k, l: 0, m: 0 }).collect(),
            matrix,
            params: DictionaryParams::Custom,
            channels,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn atoms(&self) -> &[AtomLabel] {
        &self.atoms
    }

    pub fn params(&self) -> &DictionaryParams {
        &self.params
    }

    /// Scheme channel index of each row.
    pub fn channels(&self) -> &[usize] {
        &self.channels
    }

    /// N_d: number of rows.
    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    /// N_a: number of atoms.
    pub fn n_atoms(&self) -> usize {
        self.matrix.ncols()
    }

    /// Plain-text dump: one line per row, space separated, full precision.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.n_rows() * self.n_atoms() * 24);
        for i in 0..self.n_rows() {
            let row: Vec<String> = (0..self.n_atoms())
                .map(|j| format!("{:e}", self.matrix[(i, j)]))
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Anything that can turn a gradient scheme into a dictionary.
pub trait Basis {
    fn dictionary(&self, scheme: &GradientScheme) -> Result<Dictionary>;
}

impl Basis for ShoreParams {
    fn dictionary(&self, scheme: &GradientScheme) -> Result<Dictionary> {
        shore_dictionary(scheme, self.radial_order, self.zeta)
    }
}

/// N_a = (N+2)(N+4)(2N+3)/24 for even radial order N.
pub fn shore_atom_count(radial_order: usize) -> usize {
    let n = radial_order;
    (n + 2) * (n + 4) * (2 * n + 3) / 24
}

/// Atom labels in column order: `l` ascending, then `n ∈ [l, (N+l)/2]`, then `m ∈ [-l, l]`.
pub fn shore_atoms(radial_order: usize) -> Vec<AtomLabel> {
    let mut atoms = Vec::with_capacity(shore_atom_count(radial_order));
    for l in (0..=radial_order).step_by(2) {
        for n in l..=(radial_order + l) / 2 {
            for m in -(l as i32)..=(l as i32) {
                atoms.push(AtomLabel { n, l, m });
            }
        }
    }
    atoms
}

pub fn shore_dictionary(scheme: &GradientScheme, radial_order: usize, zeta: f64) -> Result<Dictionary> {
    if !radial_order.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "radial order must be even, got {radial_order}"
        )));
    }
    if !(zeta > 0.0 && zeta.is_finite()) {
        return Err(Error::InvalidParameter(format!("zeta must be positive, got {zeta}")));
    }
    let channels = scheme.dw_indices();
    if channels.is_empty() {
        return Err(Error::Scheme("no DW channels to build a dictionary".into()));
    }
    let atoms = shore_atoms(radial_order);
    let mut matrix = DMatrix::zeros(channels.len(), atoms.len());

    for (row, &ch) in channels.iter().enumerate() {
        let q2 = scheme.bvalues()[ch];
        let u = scheme.directions()[ch];
        let x = q2 / zeta;
        let gauss = (-x / 2.0).exp();
        for (col, atom) in atoms.iter().enumerate() {
            let radial = shore_normalization(atom.n, atom.l, zeta)
                * x.powf(atom.l as f64 / 2.0)
                * gauss
                * generalized_laguerre(atom.n - atom.l, atom.l as f64 + 0.5, x);
            matrix[(row, col)] = radial * real_sh(atom.l, atom.m, &u);
        }
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "dictionary has non-finite entries; check zeta and b-values".into(),
        ));
    }
    Ok(Dictionary {
        matrix,
        atoms,
        params: DictionaryParams::Shore(ShoreParams {
            radial_order,
            zeta,
            q_mapping: QMapping::SqrtB,
        }),
        channels,
    })
}

/// sqrt(2 (n−l)! / (ζ^{3/2} Γ(n + 3/2)))
fn shore_normalization(n: usize, l: usize, zeta: f64) -> f64 {
    (2.0 * factorial(n - l) / (zeta.powf(1.5) * gamma_half_integer(n))).sqrt()
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Γ(n + 3/2) = sqrt(π) · Π_{j=0..=n} (j + 1/2)
fn gamma_half_integer(n: usize) -> f64 {
    PI.sqrt() * (0..=n).map(|j| j as f64 + 0.5).product::<f64>()
}

/// Real, orthonormal, even-order spherical harmonic.
pub fn evaluate_real_sh(l: usize, m: i32, direction: &[f64; 3]) -> Result<f64> {
    if !l.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("SH order {l} is odd")));
    }
    if m.unsigned_abs() as usize > l {
        return Err(Error::InvalidParameter(format!("|m| = {} > l = {l}", m.abs())));
    }
    Ok(real_sh(l, m, direction))
}

fn real_sh(l: usize, m: i32, u: &[f64; 3]) -> f64 {
    let norm = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    let cos_theta = if norm > 0.0 {
        (u[2] / norm).clamp(-1.0, 1.0)
    } else {
        1.0
    };
    let phi = u[1].atan2(u[0]);
    let am = m.unsigned_abs() as usize;

    // (l−|m|)!/(l+|m|)!
    let ratio: f64 = ((l - am + 1)..=(l + am)).map(|k| 1.0 / k as f64).product();
    let k = ((2 * l + 1) as f64 / (4.0 * PI) * ratio).sqrt();
    let p = associated_legendre(l, am, cos_theta);
    match m.cmp(&0) {
        std::cmp::Ordering::Equal => k * p,
        std::cmp::Ordering::Greater => std::f64::consts::SQRT_2 * k * p * (am as f64 * phi).cos(),
        std::cmp::Ordering::Less => std::f64::consts::SQRT_2 * k * p * (am as f64 * phi).sin(),
    }
}

/// P_l^m(x) without the Condon–Shortley phase.
fn associated_legendre(l: usize, m: usize, x: f64) -> f64 {
    let s = ((1.0 - x) * (1.0 + x)).max(0.0).sqrt();
    let mut pmm = 1.0;
    for k in 1..=m {
        pmm *= (2 * k - 1) as f64 * s;
    }
    if l == m {
        return pmm;
    }
    let mut prev = pmm;
    let mut cur = x * (2 * m + 1) as f64 * pmm;
    for ll in (m + 2)..=l {
        let next = ((2 * ll - 1) as f64 * x * cur - (ll + m - 1) as f64 * prev) / (ll - m) as f64;
        prev = cur;
        cur = next;
    }
    cur
}

/// L_k^{(α)}(x) by the three-term recurrence.
pub fn evaluate_generalized_laguerre(k: i64, alpha: f64, x: f64) -> Result<f64> {
    if k < 0 {
        return Err(Error::InvalidParameter(format!("Laguerre degree {k} < 0")));
    }
    Ok(generalized_laguerre(k as usize, alpha, x))
}

fn generalized_laguerre(k: usize, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if k == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for j in 1..k {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0 + alpha - x) * cur - (jf + alpha) * prev) / (jf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}
