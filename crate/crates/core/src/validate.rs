//! Exact ribbon/flag and ε-approximate flag validators, plus the canonical
//! coloring oracle.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

/// Per-agent colors in `1..=k`; `None` marks an undecided agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Coloring {
    pub k: u8,
    pub colors: Vec<Option<u8>>,
}

impl Coloring {
    pub fn new(k: u8, colors: Vec<Option<u8>>) -> Self {
        Coloring { k, colors }
    }

    pub fn decided(k: u8, colors: &[u8]) -> Self {
        Coloring { k, colors: colors.iter().map(|&c| Some(c)).collect() }
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    /// All colors, or the first undecided agent as an error.
    pub fn complete(&self) -> Result<Vec<u8>> {
        self.colors.iter().enumerate().map(|(i, c)| c.ok_or(Error::IncompleteColoring(i))).collect()
    }
}

/// Why a coloring is not a valid exact ribbon or flag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    OutOfRange { agent: usize, color: u8 },
    Decreasing { agent: usize },
    NonContiguous { color: u8 },
    Unbalanced { c1: u8, count1: usize, c2: u8, count2: usize },
    ColumnMismatch { col: usize },
    Row { row: usize, inner: Box<Violation> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::OutOfRange { agent, color } => write!(f, "agent {agent} has color {color} outside 1..k"),
            Violation::Decreasing { agent } => write!(f, "color decreases at agent {agent}"),
            Violation::NonContiguous { color } => write!(f, "color {color} is not contiguous"),
            Violation::Unbalanced { c1, count1, c2, count2 } => {
                write!(f, "count({c1})={count1} and count({c2})={count2} differ by more than 1")
            }
            Violation::ColumnMismatch { col } => write!(f, "column {col} is not monochromatic"),
            Violation::Row { row, inner } => write!(f, "row {row}: {inner}"),
        }
    }
}

pub type Verdict = std::result::Result<(), Violation>;

/// `floor(i*k/n) + 1`.
pub fn canonical_color(i: usize, n: usize, k: u8) -> Result<u8> {
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, len: n });
    }
    Ok((i * k as usize / n) as u8 + 1)
}

pub fn canonical_coloring(n: usize, k: u8) -> Vec<u8> {
    (0..n).map(|i| (i * k as usize / n) as u8 + 1).collect()
}

/// Non-decreasing, contiguous classes, and pairwise class sizes within 1
/// (colors absent from the row count as size 0).
pub fn check_ribbon(colors: &[u8], k: u8) -> Verdict {
    let mut counts = vec![0usize; k as usize + 1];
    for (i, &c) in colors.iter().enumerate() {
        if c == 0 || c > k {
            return Err(Violation::OutOfRange { agent: i, color: c });
        }
        counts[c as usize] += 1;
    }
    for (i, w) in colors.windows(2).enumerate() {
        if w[1] < w[0] {
            let color = w[1];
            return if colors[..=i].contains(&color) {
                Err(Violation::NonContiguous { color })
            } else {
                Err(Violation::Decreasing { agent: i + 1 })
            };
        }
    }
    let (mut lo, mut hi) = (1u8, 1u8);
    for c in 1..=k {
        if counts[c as usize] < counts[lo as usize] {
            lo = c;
        }
        if counts[c as usize] > counts[hi as usize] {
            hi = c;
        }
    }
    if counts[hi as usize] - counts[lo as usize] > 1 {
        let (c1, c2) = (lo.min(hi), lo.max(hi));
        return Err(Violation::Unbalanced { c1, count1: counts[c1 as usize], c2, count2: counts[c2 as usize] });
    }
    Ok(())
}

pub fn validate_exact_ribbon(coloring: &Coloring) -> Result<Verdict> {
    Ok(check_ribbon(&coloring.complete()?, coloring.k))
}

/// `coloring` is row-major over `cols` columns.
pub fn validate_exact_flag(coloring: &Coloring, cols: usize) -> Result<Verdict> {
    let colors = coloring.complete()?;
    if cols == 0 || colors.len() % cols != 0 {
        return Err(Error::InvalidSize(format!("{} agents do not fill rows of {cols}", colors.len())));
    }
    for (row, r) in colors.chunks(cols).enumerate() {
        if let Err(v) = check_ribbon(r, coloring.k) {
            return Ok(Err(Violation::Row { row, inner: Box::new(v) }));
        }
    }
    for col in 0..cols {
        if colors.iter().skip(col).step_by(cols).any(|&c| c != colors[col]) {
            return Ok(Err(Violation::ColumnMismatch { col }));
        }
    }
    Ok(Ok(()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlagSpec {
    pub k: u8,
    /// Columns.
    pub a: usize,
    /// Rows.
    pub b: usize,
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsViolation {
    pub agent: usize,
    pub x: f64,
    pub color: u8,
    /// The color this position demands, when it lies deep inside a stripe.
    pub required: Option<u8>,
}

/// The color forced at horizontal position `x` of a width-`a` flag, if any.
pub fn eps_required_color(x: f64, a: f64, k: u8, eps: f64) -> Option<u8> {
    let kf = f64::from(k);
    (1..=k).find(|&z| {
        let z = f64::from(z);
        x >= ((z - 1.0) / kf + eps) * a && x <= (z / kf - eps) * a
    })
}

/// Whether color `c` is allowed at position `x`.
pub fn eps_allows(x: f64, a: f64, k: u8, eps: f64, c: u8) -> bool {
    let (kf, z) = (f64::from(k), f64::from(c));
    x >= ((z - 1.0) / kf - eps) * a && x <= (z / kf + eps) * a
}

pub fn validate_eps_flag(coloring: &Coloring, spec: &FlagSpec) -> Result<std::result::Result<(), Vec<EpsViolation>>> {
    if !(spec.eps > 0.0 && spec.eps < 1.0) {
        return Err(Error::InvalidSpec(format!("eps must be in (0, 1), got {}", spec.eps)));
    }
    if spec.a == 0 || spec.a * spec.b != coloring.len() {
        return Err(Error::InvalidSpec(format!("{}x{} does not match {} agents", spec.a, spec.b, coloring.len())));
    }
    let colors = coloring.complete()?;
    let a = spec.a as f64;
    let mut bad = Vec::new();
    for (agent, &color) in colors.iter().enumerate() {
        let x = (agent % spec.a) as f64 + 0.5;
        let required = eps_required_color(x, a, spec.k, spec.eps);
        let ok = required.is_none_or(|z| z == color) && eps_allows(x, a, spec.k, spec.eps, color);
        if !ok {
            bad.push(EpsViolation { agent, x, color, required });
        }
    }
    Ok(if bad.is_empty() { Ok(()) } else { Err(bad) })
}

/// Convenience: ε-check of a single ribbon.
pub fn eps_ribbon_ok(colors: &[Option<u8>], k: u8, eps: f64) -> Result<bool> {
    let c = Coloring::new(k, colors.to_vec());
    let spec = FlagSpec { k, a: colors.len(), b: 1, eps };
    Ok(validate_eps_flag(&c, &spec)?.is_ok())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ribbon(colors: &[u8], k: u8) -> Verdict {
        validate_exact_ribbon(&Coloring::decided(k, colors)).unwrap()
    }

    #[test]
    fn canonical_examples() {
        assert_eq!(canonical_coloring(9, 3), vec![1, 1, 1, 2, 2, 2, 3, 3, 3]);
        assert_eq!(canonical_coloring(4, 3), vec![1, 1, 2, 3]);
        assert_eq!(canonical_color(0, 1, 3).unwrap(), 1);
        assert!(canonical_color(4, 4, 3).is_err());
    }

    /// All contiguous non-decreasing assignments of 3 colors to 4 agents with
    /// balanced counts.
    #[test]
    fn canonical_is_a_balanced_assignment() {
        let mut valid = Vec::new();
        for code in 0..81u32 {
            let mut c = [0u8; 4];
            let mut x = code;
            for slot in c.iter_mut() {
                *slot = (x % 3) as u8 + 1;
                x /= 3;
            }
            let sorted = c.windows(2).all(|w| w[0] <= w[1]);
            let counts: Vec<usize> = (1..=3).map(|z| c.iter().filter(|&&v| v == z).count()).collect();
            let spread = counts.iter().max().unwrap() - counts.iter().min().unwrap();
            if sorted && spread <= 1 {
                valid.push(c.to_vec());
            }
        }
        assert!(valid.contains(&canonical_coloring(4, 3)));
        assert_eq!(valid.len(), 3);
    }

    #[test]
    fn ribbon_examples() {
        assert!(ribbon(&[1, 1, 1, 2, 2, 2, 3, 3, 3], 3).is_ok());
        assert_eq!(ribbon(&[1, 2, 1], 3), Err(Violation::NonContiguous { color: 1 }));
        assert!(matches!(ribbon(&[1, 1, 1, 1, 2, 2, 3, 3], 3), Err(Violation::Unbalanced { .. })));
        assert!(ribbon(&[2, 1], 3).is_err());
        assert!(ribbon(&[1, 3], 3).is_ok());
        assert!(ribbon(&[1, 1], 3).is_err());
        let undecided = Coloring::new(3, vec![Some(1), None]);
        assert!(matches!(validate_exact_ribbon(&undecided), Err(Error::IncompleteColoring(1))));
    }

    #[test]
    fn flag_examples() {
        let ok = Coloring::decided(3, &[1, 2, 3, 1, 2, 3]);
        assert!(validate_exact_flag(&ok, 3).unwrap().is_ok());
        let bad = Coloring::decided(3, &[1, 2, 3, 1, 3, 2]);
        assert!(validate_exact_flag(&bad, 3).unwrap().is_err());
        let narrow = Coloring::decided(3, &[1, 2, 1, 2]);
        assert!(validate_exact_flag(&narrow, 2).unwrap().is_ok());
        let col = Coloring::decided(2, &[1, 2, 2, 1]);
        assert!(validate_exact_flag(&col, 2).unwrap().is_err());
    }

    #[test]
    fn eps_examples() {
        let spec = FlagSpec { k: 3, a: 100, b: 1, eps: 0.05 };
        let mut colors = canonical_coloring(100, 3);
        assert!(validate_eps_flag(&Coloring::decided(3, &colors), &spec).unwrap().is_ok());
        colors[40] = 1;
        let v = validate_eps_flag(&Coloring::decided(3, &colors), &spec).unwrap().unwrap_err();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].agent, 40);
        assert_eq!(v[0].required, Some(2));

        let ones = Coloring::decided(3, &[1; 9]);
        let spec9 = FlagSpec { k: 3, a: 9, b: 1, eps: 0.05 };
        let v = validate_eps_flag(&ones, &spec9).unwrap().unwrap_err();
        for agent in 6..9 {
            assert!(v.iter().any(|e| e.agent == agent && e.required == Some(3)));
        }

        let bad = FlagSpec { eps: 1.0, ..spec9 };
        assert!(matches!(validate_eps_flag(&ones, &bad), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn canonical_exhaustive() {
        for n in 1..=500 {
            for k in 2..=7u8 {
                assert!(check_ribbon(&canonical_coloring(n, k), k).is_ok(), "n={n} k={k}");
            }
        }
    }
}
