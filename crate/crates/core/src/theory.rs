//! Detection boundary `rho*(beta, sigma)` and minimal delay
//! `Delta*(r, beta, sigma) = ceil(rho* / r)`.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayParams {
    pub r: f64,
    pub beta: f64,
    pub sigma: f64,
}

impl DelayParams {
    pub fn new(r: f64, beta: f64, sigma: f64) -> Result<Self> {
        check(beta, sigma)?;
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Domain(format!("r must be positive, got {r}")));
        }
        Ok(Self { r, beta, sigma })
    }

    pub fn evaluate(&self) -> Result<DelayPoint> {
        delay_point(self.r, self.beta, self.sigma)
    }
}

fn check(beta: f64, sigma: f64) -> Result<()> {
    if !(beta > 0.5 && beta < 1.0) {
        return Err(Error::Domain(format!(
            "beta must lie in (1/2, 1), got {beta}"
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    Ok(())
}

pub fn rho_star(beta: f64, sigma: f64) -> Result<f64> {
    check(beta, sigma)?;
    let s2 = sigma * sigma;
    let edge = (1.0 - sigma * (1.0 - beta).sqrt()).powi(2);
    let v = if s2 < 2.0 {
        if beta < 1.0 - s2 / 4.0 {
            (2.0 - s2) * (beta - 0.5)
        } else {
            edge
        }
    } else if beta < 1.0 - 1.0 / s2 {
        0.0
    } else {
        edge
    };
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayPoint {
    pub rho_star: f64,
    pub delta_star: u64,
    /// `rho* / r` is an integer (up to rounding), where the delay limit is not
    /// guaranteed.
    pub on_integer_boundary: bool,
}

pub fn delay_point(r: f64, beta: f64, sigma: f64) -> Result<DelayPoint> {
    DelayParams::new(r, beta, sigma)?;
    let rho = rho_star(beta, sigma)?;
    let q = rho / r;
    let nearest = q.round();
    let on_integer_boundary = (q - nearest).abs() <= 1e-9 * nearest.abs().max(1.0);
    let delta_star = if on_integer_boundary {
        nearest
    } else {
        q.ceil()
    } as u64;
    Ok(DelayPoint {
        rho_star: rho,
        delta_star,
        on_integer_boundary,
    })
}

pub fn delta_star(r: f64, beta: f64, sigma: f64) -> Result<u64> {
    Ok(delay_point(r, beta, sigma)?.delta_star)
}

/// CSV over the Cartesian grid, one row per `(beta, sigma, r)`.
pub fn theory_grid_csv(betas: &[f64], sigmas: &[f64], rs: &[f64]) -> Result<String> {
    let mut out = String::from("beta,sigma,r,rho_star,delta_star,on_integer_boundary\n");
    for &beta in betas {
        for &sigma in sigmas {
            for &r in rs {
                let p = delay_point(r, beta, sigma)?;
                writeln!(
                    out,
                    "{beta},{sigma},{r},{},{},{}",
                    p.rho_star, p.delta_star, p.on_integer_boundary
                )
                .expect("write to string");
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rho_examples() {
        assert_relative_eq!(rho_star(0.7, 1.0).unwrap(), 0.2, epsilon = 1e-15);
        assert_relative_eq!(rho_star(0.8, 1.0).unwrap(), 0.305_573, epsilon = 1e-6);
        assert_eq!(rho_star(0.6, 2.0).unwrap(), 0.0);
        assert!(rho_star(0.5, 1.0).is_err());
        assert!(rho_star(1.0, 1.0).is_err());
        assert!(rho_star(0.7, 0.0).is_err());
    }

    #[test]
    fn delta_examples() {
        assert_eq!(delta_star(0.1, 0.7, 1.0).unwrap(), 2);
        assert!(delay_point(0.1, 0.7, 1.0).unwrap().on_integer_boundary);
        assert_eq!(delta_star(1.0, 0.7, 1.0).unwrap(), 1);
        assert!(!delay_point(1.0, 0.7, 1.0).unwrap().on_integer_boundary);
        assert_eq!(delta_star(0.05, 0.8, 1.0).unwrap(), 7);
        assert_eq!(delta_star(0.002, 0.7, 1.0).unwrap(), 100);
        assert!(delta_star(0.0, 0.7, 1.0).is_err());
    }

    #[test]
    fn boundary_cutoff_uses_second_branch() {
        let beta: f64 = 0.75;
        assert_relative_eq!(
            rho_star(beta, 1.0).unwrap(),
            (1.0 - (0.25f64).sqrt()).powi(2)
        );
    }

    #[test]
    fn grid_csv_shape() {
        let csv = theory_grid_csv(&[0.6, 0.7], &[1.0], &[0.1, 0.5]).unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(
            lines[0],
            "beta,sigma,r,rho_star,delta_star,on_integer_boundary"
        );
    }
}
