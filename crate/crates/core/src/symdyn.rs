//! Symbol words, the metric on the sequence space, the shift, and the
//! projection from wall states to winding words.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orbits::{find_periodic_orbit, OrbitOptions};
use crate::params::Params;
use crate::potential::State;
use crate::propagator::billiard_map;

/// A window of a bi-infinite sequence over the nonzero integers. Position `i`
/// reads `symbols[offset + i]`, cyclically when `periodic`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymbolWord {
    pub symbols: Vec<i64>,
    pub periodic: bool,
    pub offset: usize,
}

impl SymbolWord {
    pub fn new(symbols: Vec<i64>, periodic: bool) -> Result<Self> {
        Self::with_offset(symbols, periodic, 0)
    }

    pub fn periodic(symbols: Vec<i64>) -> Result<Self> {
        Self::new(symbols, true)
    }

    pub fn finite(symbols: Vec<i64>) -> Result<Self> {
        Self::new(symbols, false)
    }

    pub fn with_offset(symbols: Vec<i64>, periodic: bool, offset: usize) -> Result<Self> {
        if symbols.contains(&0) {
            return Err(Error::domain("symbols must be nonzero"));
        }
        if periodic && symbols.is_empty() {
            return Err(Error::domain("a periodic word needs at least one symbol"));
        }
        if offset > symbols.len() || (periodic && offset >= symbols.len()) {
            return Err(Error::domain("offset outside the word"));
        }
        Ok(SymbolWord { symbols, periodic, offset })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Symbol at position `i`, `None` outside a finite window.
    pub fn get(&self, i: i64) -> Option<i64> {
        let n = self.symbols.len() as i64;
        if n == 0 {
            return None;
        }
        let j = self.offset as i64 + i;
        if self.periodic {
            Some(self.symbols[j.rem_euclid(n) as usize])
        } else if (0..n).contains(&j) {
            Some(self.symbols[j as usize])
        } else {
            None
        }
    }

    /// Symbols at positions `0, 1, ...`: one period for periodic words, the
    /// rest of the window otherwise.
    pub fn forward(&self) -> Vec<i64> {
        if self.periodic {
            (0..self.len() as i64).filter_map(|i| self.get(i)).collect()
        } else {
            self.symbols[self.offset..].to_vec()
        }
    }

    /// Positions `0..n`, repeating periodic words.
    pub fn read(&self, n: usize) -> Vec<Option<i64>> {
        (0..n as i64).map(|i| self.get(i)).collect()
    }
}

impl std::fmt::Display for SymbolWord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s: Vec<String> = self.symbols.iter().map(|x| x.to_string()).collect();
        write!(f, "({})", s.join(","))?;
        if self.periodic {
            write!(f, "^inf")?;
        }
        Ok(())
    }
}

/// Parse `"1,-2,3"`.
impl std::str::FromStr for SymbolWord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let symbols = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<i64>()
                    .map_err(|e| Error::domain(format!("bad symbol {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        SymbolWord::periodic(symbols)
    }
}

/// `sigma(s)_i = s_{i+1}`. On a finite window the part at nonnegative
/// positions loses its first symbol.
pub fn shift(w: &SymbolWord) -> Result<SymbolWord> {
    if w.is_empty() {
        return Err(Error::domain("cannot shift an empty word"));
    }
    let mut out = w.clone();
    if w.periodic {
        out.offset = (w.offset + 1) % w.len();
    } else {
        if w.offset >= w.len() {
            return Err(Error::domain("nothing left to shift"));
        }
        out.offset += 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    /// Sum over `|i| <= window`.
    pub value: f64,
    /// Largest possible contribution of the omitted positions.
    pub tail_bound: f64,
}

/// `sum_{|i| <= window} delta(a_i, b_i) / lambda^|i|`. Positions outside a
/// finite window read as a blank that differs from every symbol.
pub fn omega_metric(a: &SymbolWord, b: &SymbolWord, lambda: f64, window: usize) -> Result<MetricValue> {
    if !(lambda > 3.0) {
        return Err(Error::domain(format!("lambda = {lambda} must exceed 3")));
    }
    let w = window as i64;
    let value = (-w..=w)
        .filter(|&i| a.get(i) != b.get(i))
        .map(|i| lambda.powi(-(i.abs() as i32)))
        .sum();
    Ok(MetricValue {
        value,
        tail_bound: 2.0 * lambda.powi(-(window as i32)) / (lambda - 1.0),
    })
}

fn windings(mut s: State, p: &Params, n: usize, sign: i64) -> std::result::Result<Vec<i64>, (Vec<i64>, String)> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        match billiard_map(&s, p) {
            Ok((next, arc)) => {
                if arc.winding == 0 {
                    return Err((out, "arc with zero winding".into()));
                }
                out.push(sign * arc.winding);
                s = next;
            }
            Err(e) => return Err((out, e.to_string())),
        }
    }
    Ok(out)
}

/// Windings of the next `window` arcs from `s`.
pub fn project_pi(s: &State, p: &Params, window: usize) -> Result<SymbolWord> {
    project_pi_both(s, p, window, 0)
}

/// Windings of `forward` arcs after `s` and of `backward` arcs before it. The
/// backward orbit is the forward orbit of the time-reversed state
/// `(x, -vx, vy)`, whose arcs carry the opposite winding.
pub fn project_pi_both(s: &State, p: &Params, forward: usize, backward: usize) -> Result<SymbolWord> {
    let ahead = windings(*s, p, forward, 1).map_err(|(symbols, reason)| Error::PartialWord { symbols, reason })?;
    let reversed = State::from_xy(s.pos.x, s.pos.y, -s.vel.x, s.vel.y);
    let mut behind = windings(reversed, p, backward, -1).map_err(|(symbols, reason)| Error::PartialWord {
        symbols: symbols.into_iter().rev().chain(ahead.iter().copied()).collect(),
        reason: format!("backward: {reason}"),
    })?;
    behind.reverse();
    let offset = behind.len();
    behind.extend(ahead);
    SymbolWord::with_offset(behind, false, offset)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiconjugacyReport {
    /// `shift(pi(s))` read from position 0.
    pub shifted: Vec<i64>,
    /// `pi(F(s))` read from position 0.
    pub mapped: Vec<i64>,
    pub agree: bool,
}

/// Compare `sigma(pi(s))` with `pi(F(s))` on their common window of
/// `window - 1` symbols.
pub fn check_semiconjugacy(s: &State, p: &Params, window: usize) -> Result<SemiconjugacyReport> {
    if window < 2 {
        return Err(Error::domain("the window needs at least 2 symbols"));
    }
    let shifted = shift(&project_pi(s, p, window)?)?.forward();
    let (next, _) = billiard_map(s, p).map_err(|e| Error::PartialWord { symbols: vec![], reason: e.to_string() })?;
    let mapped = project_pi(&next, p, window - 1)?.forward();
    let agree = shifted == mapped;
    Ok(SemiconjugacyReport { shifted, mapped, agree })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordCount {
    pub n: usize,
    pub attempted: usize,
    pub realized: usize,
    /// Words that did not converge, with the reason.
    pub failures: Vec<(Vec<i64>, String)>,
}

impl WordCount {
    /// `log(count) / n`.
    pub fn entropy_proxy(&self) -> f64 {
        (self.realized as f64).ln() / self.n as f64
    }
}

/// All words of length `n` over `symbols`, in lexicographic order of indices.
pub fn all_words(n: usize, symbols: &[i64]) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|w| {
                symbols.iter().map(move |&s| {
                    let mut v = w.clone();
                    v.push(s);
                    v
                })
            })
            .collect();
    }
    out
}

/// Try to realize every periodic word of length `n` over `symbols`.
pub fn count_realized_words(n: usize, symbols: &[i64], p: &Params, opts: &OrbitOptions) -> Result<WordCount> {
    if n == 0 {
        return Err(Error::domain("word length must be positive"));
    }
    if symbols.contains(&0) {
        return Err(Error::domain("symbols must be nonzero"));
    }
    let mut set = symbols.to_vec();
    set.sort_unstable();
    set.dedup();
    let words = all_words(n, &set);
    let results: Vec<_> = words
        .par_iter()
        .map(|w| {
            let word = SymbolWord::periodic(w.clone())?;
            find_periodic_orbit(&word, p, opts).and_then(|o| o.certify(opts).map(|_| ()))
        })
        .collect();
    let mut failures = Vec::new();
    for (w, r) in words.iter().zip(results) {
        if let Err(e) = r {
            failures.push((w.clone(), e.to_string()));
        }
    }
    Ok(WordCount { n, attempted: words.len(), realized: words.len() - failures.len(), failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_shift() {
        let w = SymbolWord::periodic(vec![1, 2, 3]).unwrap();
        assert_eq!(shift(&w).unwrap().forward(), vec![2, 3, 1]);
        let mut v = w.clone();
        for _ in 0..3 {
            v = shift(&v).unwrap();
        }
        assert_eq!(v, w);
    }

    #[test]
    fn finite_shift() {
        let w = SymbolWord::finite(vec![1, -2, 3]).unwrap();
        let s = shift(&w).unwrap();
        assert_eq!(s.forward(), vec![-2, 3]);
        assert_eq!(s.len(), 3);
        assert_eq!(s.get(-1), Some(1));
        let empty = shift(&shift(&s).unwrap()).unwrap();
        assert!(empty.forward().is_empty());
        assert!(shift(&empty).is_err());
        assert!(shift(&SymbolWord::finite(vec![]).unwrap()).is_err());
    }

    #[test]
    fn zero_symbol_rejected() {
        assert!(SymbolWord::periodic(vec![1, 0]).is_err());
        assert!("0".parse::<SymbolWord>().is_err());
        assert_eq!("1, -2".parse::<SymbolWord>().unwrap().symbols, vec![1, -2]);
    }

    #[test]
    fn metric_examples() {
        let a = SymbolWord::periodic(vec![1]).unwrap();
        let b = SymbolWord::periodic(vec![-1]).unwrap();
        assert_eq!(omega_metric(&a, &a, 4.0, 10).unwrap().value, 0.0);
        let c = SymbolWord::with_offset(vec![1, -1, 1], false, 1).unwrap();
        let d = SymbolWord::with_offset(vec![1, 1, 1], false, 1).unwrap();
        assert_eq!(omega_metric(&c, &d, 4.0, 5).unwrap().value, 1.0);
        let m = omega_metric(&a, &b, 4.0, 40).unwrap();
        assert!((m.value - 5.0 / 3.0).abs() < 1e-15);
        assert!(m.tail_bound < 1e-20);
        assert!(omega_metric(&a, &b, 3.0, 4).is_err());
    }

    #[test]
    fn word_enumeration() {
        let w = all_words(2, &[1, -1]);
        assert_eq!(w, vec![vec![1, 1], vec![1, -1], vec![-1, 1], vec![-1, -1]]);
        assert_eq!(all_words(3, &[1, 2, 3]).len(), 27);
    }
}
