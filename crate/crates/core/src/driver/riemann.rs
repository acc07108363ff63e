//! Exact solution of the one-dimensional Riemann problem for an ideal gas.

use crate::error::{Error, Result};
use crate::euler::{GasModel, Primitive};

const NEWTON_TOL: f64 = 1e-14;
const NEWTON_MAX: usize = 100;

/// Star-region values and wave structure of a Riemann problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiemannSolution {
    pub left: Primitive<f64>,
    pub right: Primitive<f64>,
    pub gamma: f64,
    pub p_star: f64,
    pub u_star: f64,
    pub rho_star_left: f64,
    pub rho_star_right: f64,
}

struct Side1d {
    rho: f64,
    u: f64,
    p: f64,
    c: f64,
}

fn side(prim: &Primitive<f64>, gamma: f64) -> Side1d {
    Side1d { rho: prim.rho, u: prim.v[0], p: prim.p, c: (gamma * prim.p / prim.rho).sqrt() }
}

/// `f_K(p)` and its derivative: shock branch for `p > p_K`, rarefaction branch otherwise.
fn pressure_function(p: f64, k: &Side1d, g: f64) -> (f64, f64) {
    if p > k.p {
        let a = 2.0 / ((g + 1.0) * k.rho);
        let b = (g - 1.0) / (g + 1.0) * k.p;
        let q = (a / (p + b)).sqrt();
        ((p - k.p) * q, q * (1.0 - 0.5 * (p - k.p) / (b + p)))
    } else {
        let r = p / k.p;
        let f = 2.0 * k.c / (g - 1.0) * (r.powf((g - 1.0) / (2.0 * g)) - 1.0);
        let df = r.powf(-(g + 1.0) / (2.0 * g)) / (k.rho * k.c);
        (f, df)
    }
}

fn star_density(p: f64, k: &Side1d, g: f64) -> f64 {
    let r = p / k.p;
    if p > k.p {
        let gr = (g - 1.0) / (g + 1.0);
        k.rho * (r + gr) / (gr * r + 1.0)
    } else {
        k.rho * r.powf(1.0 / g)
    }
}

impl RiemannSolution {
    /// Solves for the star state by Newton iteration on the pressure function.
    pub fn new(left: Primitive<f64>, right: Primitive<f64>, gas: &GasModel<f64>) -> Result<Self> {
        if !left.is_admissible() || !right.is_admissible() {
            return Err(Error::InvalidState("Riemann data must have positive density and pressure".into()));
        }
        let g = gas.gamma;
        let (l, r) = (side(&left, g), side(&right, g));
        let du = r.u - l.u;
        if 2.0 * (l.c + r.c) / (g - 1.0) <= du {
            return Err(Error::InvalidState("Riemann data generate vacuum".into()));
        }
        let pvrs = 0.5 * (l.p + r.p) - 0.125 * du * (l.rho + r.rho) * (l.c + r.c);
        let mut p = pvrs.max(1e-8 * l.p.min(r.p));
        let mut converged = false;
        for _ in 0..NEWTON_MAX {
            let (fl, dfl) = pressure_function(p, &l, g);
            let (fr, dfr) = pressure_function(p, &r, g);
            let step = (fl + fr + du) / (dfl + dfr);
            let next = (p - step).max(1e-3 * p);
            let change = 2.0 * (next - p).abs() / (next + p);
            p = next;
            if change < NEWTON_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::InvalidState("Riemann pressure iteration did not converge".into()));
        }
        let (fl, _) = pressure_function(p, &l, g);
        let (fr, _) = pressure_function(p, &r, g);
        Ok(Self {
            left,
            right,
            gamma: g,
            p_star: p,
            u_star: 0.5 * (l.u + r.u) + 0.5 * (fr - fl),
            rho_star_left: star_density(p, &l, g),
            rho_star_right: star_density(p, &r, g),
        })
    }

    fn shock_speed(&self, k: &Side1d, right_side: bool) -> f64 {
        let g = self.gamma;
        let m = ((g + 1.0) / (2.0 * g) * self.p_star / k.p + (g - 1.0) / (2.0 * g)).sqrt();
        if right_side {
            k.u + k.c * m
        } else {
            k.u - k.c * m
        }
    }

    /// Positions per unit time of the left-most wave edge, contact and right-most wave edge.
    pub fn wave_speeds(&self) -> (f64, f64, f64) {
        let g = self.gamma;
        let (l, r) = (side(&self.left, g), side(&self.right, g));
        let left = if self.p_star > l.p { self.shock_speed(&l, false) } else { l.u - l.c };
        let right = if self.p_star > r.p { self.shock_speed(&r, true) } else { r.u + r.c };
        (left, self.u_star, right)
    }

    /// Relative residual of the Rankine–Hugoniot mass and momentum conditions across every shock
    /// (0 when there is none).
    pub fn rankine_hugoniot_residual(&self) -> f64 {
        let g = self.gamma;
        let mut worst: f64 = 0.0;
        for (right_side, prim, rho_star) in [(false, self.left, self.rho_star_left), (true, self.right, self.rho_star_right)] {
            let k = side(&prim, g);
            if self.p_star <= k.p {
                continue;
            }
            let s = self.shock_speed(&k, right_side);
            let m0 = k.rho * (k.u - s);
            let m1 = rho_star * (self.u_star - s);
            let mom0 = k.rho * (k.u - s).powi(2) + k.p;
            let mom1 = rho_star * (self.u_star - s).powi(2) + self.p_star;
            worst = worst.max((m0 - m1).abs() / m0.abs().max(1e-300));
            worst = worst.max((mom0 - mom1).abs() / mom0.abs());
        }
        worst
    }

    /// Solution at similarity coordinate `xi = x / t` (diaphragm at `x = 0`).
    pub fn sample(&self, xi: f64) -> Primitive<f64> {
        let g = self.gamma;
        let (l, r) = (side(&self.left, g), side(&self.right, g));
        let (ps, us) = (self.p_star, self.u_star);
        let prim = |rho: f64, u: f64, p: f64| Primitive::new(rho, &[u], p);
        if xi <= us {
            if ps > l.p {
                if xi <= self.shock_speed(&l, false) {
                    prim(l.rho, l.u, l.p)
                } else {
                    prim(self.rho_star_left, us, ps)
                }
            } else {
                let c_star = l.c * (ps / l.p).powf((g - 1.0) / (2.0 * g));
                if xi <= l.u - l.c {
                    prim(l.rho, l.u, l.p)
                } else if xi >= us - c_star {
                    prim(self.rho_star_left, us, ps)
                } else {
                    let k = 2.0 / (g + 1.0) + (g - 1.0) / ((g + 1.0) * l.c) * (l.u - xi);
                    let c = l.c * k;
                    let rho = l.rho * k.powf(2.0 / (g - 1.0));
                    let u = 2.0 / (g + 1.0) * (l.c + 0.5 * (g - 1.0) * l.u + xi);
                    let p = l.p * (c / l.c).powf(2.0 * g / (g - 1.0));
                    prim(rho, u, p)
                }
            }
        } else if ps > r.p {
            if xi >= self.shock_speed(&r, true) {
                prim(r.rho, r.u, r.p)
            } else {
                prim(self.rho_star_right, us, ps)
            }
        } else {
            let c_star = r.c * (ps / r.p).powf((g - 1.0) / (2.0 * g));
            if xi >= r.u + r.c {
                prim(r.rho, r.u, r.p)
            } else if xi <= us + c_star {
                prim(self.rho_star_right, us, ps)
            } else {
                let k = 2.0 / (g + 1.0) - (g - 1.0) / ((g + 1.0) * r.c) * (r.u - xi);
                let c = r.c * k;
                let rho = r.rho * k.powf(2.0 / (g - 1.0));
                let u = 2.0 / (g + 1.0) * (-r.c + 0.5 * (g - 1.0) * r.u + xi);
                let p = r.p * (c / r.c).powf(2.0 * g / (g - 1.0));
                prim(rho, u, p)
            }
        }
    }
}

/// Exact Riemann solution at `x / t` for one-dimensional primitive data.
pub fn exact_riemann(left: Primitive<f64>, right: Primitive<f64>, gas: &GasModel<f64>, x_over_t: f64) -> Result<Primitive<f64>> {
    Ok(RiemannSolution::new(left, right, gas)?.sample(x_over_t))
}

/// Sod's data: `(ρ, u, p) = (1, 0, 1)` and `(0.125, 0, 0.1)`.
pub fn sod_states() -> (Primitive<f64>, Primitive<f64>) {
    (Primitive::new(1.0, &[0.0], 1.0), Primitive::new(0.125, &[0.0], 0.1))
}
