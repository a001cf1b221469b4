use super::{kinetic, PolarPath};
use crate::error::{Error, Result};
use crate::roots::illinois;
use crate::params::Params;

/// Piecewise-linear interpolant of a path in `(rho, theta)`.
struct Polyline {
    rho: Vec<f64>,
    theta: Vec<f64>,
}

impl Polyline {
    fn from_path(path: &PolarPath) -> Self {
        let mut rho = vec![path.rho[0]];
        let mut theta = vec![path.theta[0]];
        for i in 1..=path.n() {
            let last = rho.len() - 1;
            if path.rho[i] != rho[last] || path.theta[i] != theta[last] {
                rho.push(path.rho[i]);
                theta.push(path.theta[i]);
            }
        }
        Polyline { rho, theta }
    }

    fn segments(&self) -> usize {
        self.rho.len() - 1
    }

    fn at(&self, sigma: f64) -> (f64, f64) {
        let m = self.segments();
        let j = (sigma.floor() as usize).min(m - 1);
        let t = sigma - j as f64;
        (
            self.rho[j] + t * (self.rho[j + 1] - self.rho[j]),
            self.theta[j] + t * (self.theta[j + 1] - self.theta[j]),
        )
    }
}

/// `d R / sqrt(pbar)` of the chord between two nodes; constant along an
/// equal-speed parametrization.
fn chord_cost(a: (f64, f64), b: (f64, f64), p: &Params) -> f64 {
    let d = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
    let r = (0.5 * ((2.0 * a.0).exp() + (2.0 * b.0).exp())).sqrt();
    let pbar = 0.5 * (kinetic(a.0, p) + kinetic(b.0, p));
    d * r / pbar.sqrt()
}

/// Place `n - 1` interior nodes so that every chord but the last costs `c`.
/// `Err(i)` reports that the curve ran out while placing node `i`.
fn march(line: &Polyline, c: f64, n: usize, p: &Params) -> std::result::Result<Vec<f64>, usize> {
    let m = line.segments();
    let mut sigmas = Vec::with_capacity(n - 1);
    let mut prev = 0.0;
    let mut j = 1usize;
    for i in 1..n {
        let a = line.at(prev);
        while j <= m && chord_cost(a, line.at(j as f64), p) < c {
            j += 1;
        }
        if j > m {
            return Err(i);
        }
        let lo = prev.max((j - 1) as f64);
        prev = illinois(|s| chord_cost(a, line.at(s), p) - c, lo, j as f64, 60);
        sigmas.push(prev);
    }
    Ok(sigmas)
}

/// Reparametrize a path on `n` segments with `|u'|^2` proportional to `h - V`,
/// keeping its geometric image. After this the discrete `L^2 = 2M`.
pub fn reparam_to(path: &PolarPath, p: &Params, n: usize) -> Result<PolarPath> {
    if n < 1 {
        return Err(Error::domain("reparametrization needs at least one segment"));
    }
    let line = Polyline::from_path(path);
    if line.segments() == 0 {
        return Err(Error::domain("degenerate path: all nodes coincide"));
    }
    let m = line.segments() as f64;
    let end = line.at(m);
    let build = |sigmas: &[f64]| {
        let mut rho = Vec::with_capacity(n + 1);
        let mut theta = Vec::with_capacity(n + 1);
        rho.push(path.rho[0]);
        theta.push(path.theta[0]);
        for &s in sigmas {
            let (r, t) = line.at(s);
            rho.push(r);
            theta.push(t);
        }
        rho.push(path.rho[path.n()]);
        theta.push(path.theta[path.n()]);
        PolarPath { rho, theta, z0: path.z0, z1: path.z1, k: path.k }
    };
    if n == 1 {
        return Ok(build(&[]));
    }

    // mismatch of the last chord; continuous and decreasing in c
    let mismatch = |c: f64| match march(&line, c, n, p) {
        Ok(s) => chord_cost(line.at(s[n - 2]), end, p) - c,
        Err(i) => -((n - i) as f64) * c,
    };
    let total: f64 = (0..line.segments())
        .map(|j| chord_cost(line.at(j as f64), line.at(j as f64 + 1.0), p))
        .sum();
    let guess = total / n as f64;
    let (mut lo, mut hi) = (0.5 * guess, 2.0 * guess);
    while mismatch(lo) <= 0.0 && lo > 1e-300 {
        lo *= 0.5;
    }
    while mismatch(hi) >= 0.0 && hi < 1e300 {
        hi *= 2.0;
    }
    let c = illinois(mismatch, lo, hi, 200);
    // the returned end keeps the sign of `hi`, where the march may fail
    for cc in [c, c * (1.0 - 4.0 * f64::EPSILON)] {
        if let Ok(s) = march(&line, cc, n, p) {
            if (chord_cost(line.at(s[n - 2]), end, p) - cc).abs() <= 1e-9 * cc {
                return Ok(build(&s));
            }
        }
    }
    // a curve that doubles back in (rho, theta) makes the march jump; fall
    // back to equal shares of the cumulative cost
    Ok(build(&equal_shares(&line, n, p)))
}

fn equal_shares(line: &Polyline, n: usize, p: &Params) -> Vec<f64> {
    let m = line.segments();
    let mut cum = vec![0.0];
    for j in 0..m {
        let c = chord_cost(line.at(j as f64), line.at(j as f64 + 1.0), p);
        cum.push(cum[j] + c);
    }
    let total = cum[m];
    let mut j = 0;
    (1..n)
        .map(|i| {
            let target = total * i as f64 / n as f64;
            while j + 1 < m && cum[j + 1] < target {
                j += 1;
            }
            let a = line.at(j as f64);
            let t = illinois(|s| chord_cost(a, line.at(s), p) - (target - cum[j]), j as f64, j as f64 + 1.0, 60);
            t.clamp(j as f64, j as f64 + 1.0)
        })
        .collect()
}

/// [`reparam_to`] keeping the number of segments.
pub fn equal_speed_reparam(path: &PolarPath, p: &Params) -> Result<PolarPath> {
    reparam_to(path, p, path.n())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::Vec2;
    use crate::variational::functionals;

    fn wobbly(n: usize) -> PolarPath {
        let mut path = PolarPath::spiral(Vec2::new(-0.5, -1.0), Vec2::new(0.8, -1.0), 1, n).unwrap();
        for j in 1..n {
            let s = j as f64 / n as f64;
            path.rho[j] -= 1.5 * (std::f64::consts::PI * s).sin();
            path.theta[j] += 0.3 * (2.0 * std::f64::consts::PI * s).sin();
        }
        path
    }

    #[test]
    fn equality_after_reparam() {
        let p = Params { h: 1.0, l: 1.0, beta: 0.05 };
        let path = wobbly(200);
        let before = functionals(&path, &p);
        let out = equal_speed_reparam(&path, &p).unwrap();
        let after = functionals(&out, &p);
        let (l, m) = (after.jacobi, after.maupertuis());
        assert!((l * l - 2.0 * m).abs() <= 1e-10 * m, "{l} {m}");
        assert!(m < before.maupertuis());
        assert!((after.jacobi - before.jacobi).abs() < 1e-2 * before.jacobi);
    }

    #[test]
    fn fixed_point() {
        let p = Params { h: 1.0, l: 1.0, beta: 0.05 };
        let once = equal_speed_reparam(&wobbly(100), &p).unwrap();
        let twice = equal_speed_reparam(&once, &p).unwrap();
        for i in 0..=100 {
            assert!((once.rho[i] - twice.rho[i]).abs() < 1e-8);
            assert!((once.theta[i] - twice.theta[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn degenerate_rejected() {
        let p = Params { h: 1.0, l: 1.0, beta: 0.05 };
        let z = Vec2::new(0.0, -1.0);
        let path = PolarPath { rho: vec![0.0; 5], theta: vec![-1.0; 5], z0: z, z1: z, k: 0 };
        assert!(equal_speed_reparam(&path, &p).is_err());
    }
}
