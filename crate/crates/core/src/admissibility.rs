//! The admissible zone for `beta_v`: where `Re(Y) Re(K^2) - Im(Y) Im(K^2) < 0`.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Infinity {
    Plus,
    Minus,
}

/// Admittance ratio `r = Im Y / Re Y`, with the two limits kept symbolic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Ratio {
    Finite(f64),
    Limit(Infinity),
}

impl std::str::FromStr for Ratio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Ratio> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "+inf" | "infinity" | "+infinity" => Ok(Ratio::Limit(Infinity::Plus)),
            "-inf" | "-infinity" => Ok(Ratio::Limit(Infinity::Minus)),
            t => match t.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Ratio::Finite(v)),
                _ => Err(Error::InvalidParameter(format!("ratio '{s}' is not a number or +-inf"))),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZoneQuery {
    pub beta_v: Complex64,
    pub ratio: Ratio,
}

impl ZoneQuery {
    pub fn contains(&self) -> Result<bool> {
        match self.ratio {
            Ratio::Finite(r) => is_admissible(self.beta_v, r),
            Ratio::Limit(sign) => Ok(limit_membership(self.beta_v, sign)),
        }
    }
}

/// Real and imaginary parts of `K^2` written out in `x = Re beta_v`, `y = Im beta_v`.
pub fn k2_parts(beta_v: Complex64, k0: f64) -> (f64, f64) {
    let (x, y) = (beta_v.re, beta_v.im);
    let c = k0 * k0 / (4.0 * ((1.0 - x) * (1.0 - x) + y * y));
    let rho2 = x * x + y * y;
    (c * (x * x - y * y - x * rho2), c * y * (2.0 * x - rho2))
}

pub fn is_admissible(beta_v: Complex64, ratio: f64) -> Result<bool> {
    let modulus = beta_v.norm();
    if !(modulus < 1.0) {
        return Err(Error::BetaOutsideDisc { modulus });
    }
    if !ratio.is_finite() {
        return Err(Error::InvalidParameter("finite ratio required; use Ratio::Limit".into()));
    }
    if beta_v == Complex64::new(0.0, 0.0) {
        return Ok(true);
    }
    let (re, im) = k2_parts(beta_v, 1.0);
    Ok(re - ratio * im < 0.0)
}

/// Membership in the pointwise limit of the zone as `r -> +inf` or `r -> -inf`.
pub fn limit_membership(beta_v: Complex64, sign: Infinity) -> bool {
    let (x, y) = (beta_v.re, beta_v.im);
    if x * x + y * y >= 1.0 {
        return false;
    }
    let d1 = (x - 1.0) * (x - 1.0) + y * y;
    match sign {
        Infinity::Plus => (y > 0.0 && d1 <= 1.0) || (y < 0.0 && d1 >= 1.0),
        Infinity::Minus => (y < 0.0 && d1 <= 1.0) || (y > 0.0 && d1 >= 1.0),
    }
}

/// Membership flags on the cell centres of an `n x n` grid over `[-1, 1]^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct ZoneRaster {
    pub n: usize,
    pub ratio: Ratio,
    /// Row-major, `members[j * n + i]` for centre `(x_i, y_j)`.
    pub members: Vec<bool>,
}

/// Cell-centre coordinate; the integer numerator makes the grid exactly symmetric about 0.
pub fn cell_center(i: usize, n: usize) -> f64 {
    (2.0 * i as f64 + 1.0 - n as f64) / n as f64
}

pub fn rasterize_zone(ratio: Ratio, n: usize) -> Result<ZoneRaster> {
    if n < 16 {
        return Err(Error::InvalidParameter(format!("raster size n = {n} must be >= 16")));
    }
    let members = (0..n)
        .into_par_iter()
        .flat_map_iter(|j| {
            let y = cell_center(j, n);
            (0..n).map(move |i| {
                let beta = Complex64::new(cell_center(i, n), y);
                if beta.norm_sqr() >= 1.0 {
                    return false;
                }
                match ratio {
                    Ratio::Finite(r) => {
                        let (re, im) = k2_parts(beta, 1.0);
                        beta == Complex64::new(0.0, 0.0) || re - r * im < 0.0
                    }
                    Ratio::Limit(sign) => limit_membership(beta, sign),
                }
            })
        })
        .collect();
    Ok(ZoneRaster { n, ratio, members })
}

impl ZoneRaster {
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.members[j * self.n + i]
    }

    pub fn count(&self) -> usize {
        self.members.iter().filter(|&&m| m).count()
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "x,y,member")?;
        for j in 0..self.n {
            let y = cell_center(j, self.n);
            for i in 0..self.n {
                writeln!(w, "{},{},{}", cell_center(i, self.n), y, self.get(i, j) as u8)?;
            }
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(f)?;
        Ok(())
    }
}
