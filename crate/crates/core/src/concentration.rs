//! Noiseless power-law gradients, the exact concentration colorer and the
//! indistinguishability witness for rectangular flags.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sim::{
    self, LocalView, MemoryLayout, MessageSchema, Program, RunOptions, SchemaError, StepCtx, Trace, Wake,
};
use crate::topology::{build_line, AgentId};
use crate::validate::{eps_required_color, Coloring};

pub type Point = [f64; 2];

fn dist(p: Point, q: Point) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

/// `dist(point, source)^(-alpha)`.
pub fn concentration_at(point: Point, source: Point, alpha: f64) -> Result<f64> {
    let d = dist(point, source);
    if d == 0.0 {
        return Err(Error::Singularity);
    }
    Ok(d.powf(-alpha))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientField {
    pub sources: Vec<Point>,
    pub alpha: f64,
    pub a: f64,
    pub b: f64,
}

impl GradientField {
    /// Sources at both ends of a segment of length `a`.
    pub fn line(a: f64, alpha: f64) -> Result<Self> {
        Self::check(a, 1.0, alpha)?;
        Ok(GradientField { sources: vec![[0.0, 0.0], [a, 0.0]], alpha, a, b: 0.0 })
    }

    /// Sources at the four corners of an `a` by `b` rectangle.
    pub fn rect(a: f64, b: f64, alpha: f64) -> Result<Self> {
        Self::check(a, b, alpha)?;
        Ok(GradientField { sources: vec![[0.0, 0.0], [a, 0.0], [0.0, b], [a, b]], alpha, a, b })
    }

    fn check(a: f64, b: f64, alpha: f64) -> Result<()> {
        if !(a > 0.0 && b > 0.0 && alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("need a, b, alpha > 0 (a={a}, b={b}, alpha={alpha})")));
        }
        Ok(())
    }

    pub fn measure(&self, point: Point) -> Result<Measurement> {
        let values = self.sources.iter().map(|&s| concentration_at(point, s, self.alpha)).collect::<Result<_>>()?;
        Ok(Measurement(values))
    }
}

/// Concentrations read by one agent, one per source.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measurement(pub Vec<f64>);

/// The smallest `z` with `t <= z`, treating values within 1e-9 of an integer
/// as that integer.
fn band(t: f64, k: u8) -> u8 {
    let r = t.round();
    let t = if (t - r).abs() < 1e-9 { r } else { t };
    (t.ceil() as i64).clamp(1, i64::from(k)) as u8
}

/// Recovers the fractional position `f = x/a` and returns the `z` with
/// `(z-1)/k < f <= z/k`.
pub fn exact_concentration_color(m: &Measurement, alpha: f64, k: u8) -> Result<u8> {
    let [c1, c2] = m.0[..] else {
        return Err(Error::InvalidMeasurement(format!("expected 2 concentrations, got {}", m.0.len())));
    };
    if !(c1 > 0.0 && c2 > 0.0 && c1.is_finite() && c2.is_finite()) {
        return Err(Error::InvalidMeasurement(format!("concentrations must be finite and positive: {c1}, {c2}")));
    }
    if !(alpha > 0.0) || k < 2 {
        return Err(Error::InvalidParameter(format!("need alpha > 0 and k >= 2 (alpha={alpha}, k={k})")));
    }
    let d1 = c1.powf(-1.0 / alpha);
    let d2 = c2.powf(-1.0 / alpha);
    let f = d1 / (d1 + d2);
    Ok(band(f * f64::from(k), k))
}

/// Each agent reads the gradient at its cell center and decides at once.
struct ConcentrationRibbon {
    field: GradientField,
    n: usize,
    k: u8,
}

impl Program for ConcentrationRibbon {
    type State = Option<u8>;
    type Msg = ();

    fn schema(&self) -> MessageSchema {
        MessageSchema::new(vec![])
    }

    fn init(&self, agent: AgentId, _: &LocalView) -> Option<u8> {
        let x = (agent as f64 + 0.5) * self.field.a / self.n as f64;
        let m = self.field.measure([x, 0.0]).ok()?;
        exact_concentration_color(&m, self.field.alpha, self.k).ok()
    }

    fn step(&self, _: &mut Option<u8>, _: &mut StepCtx<'_, ()>) {}

    fn width(&self, _: &()) -> u32 {
        0
    }

    fn color(&self, s: &Option<u8>) -> Option<u8> {
        *s
    }

    fn is_halted(&self, _: &Option<u8>) -> bool {
        true
    }

    fn memory_bits(&self, s: &Option<u8>) -> std::result::Result<u64, SchemaError> {
        Ok(MemoryLayout::new().color("color", *s, self.k)?.bits())
    }
}

/// Agents at cell centers `(j + 0.5) a / n`; no messages are exchanged.
pub fn run_concentration_ribbon(n: usize, a: f64, alpha: f64, k: u8) -> Result<(Coloring, Trace)> {
    let topo = build_line(n)?;
    let field = GradientField::line(a, alpha)?;
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k must be at least 2, got {k}")));
    }
    let program = ConcentrationRibbon { field, n, k };
    let out = sim::simulate(&program, &topo, Wake::All, &RunOptions::seeded(0))?;
    Ok((Coloring::new(k, out.trace.colors.clone()), out.trace))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessPair {
    pub eps: f64,
    pub a: f64,
    pub b: f64,
    pub x: f64,
    pub y: f64,
    pub a2: f64,
    pub b2: f64,
    pub x2: f64,
    pub y2: f64,
    /// Relative residuals of the two distance equalities.
    pub residual_d1: f64,
    pub residual_d2: f64,
}

fn rel(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE)
}

/// Two flags and a point in each that see identical distances to all four
/// corners, although the ε-flag rule demands color 2 at the first point and
/// color 1 at the second.
pub fn construct_witness(a: f64, b: f64, eps: f64) -> Result<WitnessPair> {
    if !(eps > 0.0 && eps < 1.0 / 6.0) {
        return Err(Error::EpsilonTooLarge(eps));
    }
    if !(b > 0.0 && a > b) {
        return Err(Error::UnsupportedAspect { a, b });
    }
    let third = 1.0 / 3.0;
    let x = (third + eps) * a;
    let y = b / 2.0;
    let a2 = a * ((third - 2.0 * eps) / (third + 2.0 * eps)).sqrt();
    let x2 = (third - eps) * a2;
    let b2 = (4.0 * x * x + b * b - 4.0 * x2 * x2).sqrt();
    let y2 = b2 / 2.0;
    let residual_d1 = rel(x * x + b * b / 4.0, x2 * x2 + b2 * b2 / 4.0);
    let residual_d2 = rel((x - a).powi(2) + b * b / 4.0, (x2 - a2).powi(2) + b2 * b2 / 4.0);
    Ok(WitnessPair { eps, a, b, x, y, a2, b2, x2, y2, residual_d1, residual_d2 })
}

impl WitnessPair {
    pub fn first_distances(&self) -> [f64; 4] {
        corner_distances([self.x, self.y], self.a, self.b)
    }

    pub fn second_distances(&self) -> [f64; 4] {
        corner_distances([self.x2, self.y2], self.a2, self.b2)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("witness serializes")
    }
}

fn corner_distances(p: Point, a: f64, b: f64) -> [f64; 4] {
    [dist(p, [0.0, 0.0]), dist(p, [a, 0.0]), dist(p, [0.0, b]), dist(p, [a, b])]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub color_first: u8,
    pub color_second: u8,
    pub required_first: Option<u8>,
    pub required_second: Option<u8>,
    /// True when the colorer must be wrong on at least one of the two flags.
    pub contradiction: bool,
}

/// Feed both witness points to a colorer that sees only the four corner
/// concentrations and compare with what a 3-color ε-flag requires.
pub fn witness_certificate<F>(w: &WitnessPair, alpha: f64, colorer: F) -> Result<Certificate>
where
    F: Fn(&Measurement) -> u8,
{
    let m1 = GradientField::rect(w.a, w.b, alpha)?.measure([w.x, w.y])?;
    let m2 = GradientField::rect(w.a2, w.b2, alpha)?.measure([w.x2, w.y2])?;
    let color_first = colorer(&m1);
    let color_second = colorer(&m2);
    let required_first = eps_required_color(w.x, w.a, 3, w.eps);
    let required_second = eps_required_color(w.x2, w.a2, 3, w.eps);
    let contradiction = match (required_first, required_second) {
        (Some(r1), Some(r2)) => r1 != r2,
        _ => false,
    };
    Ok(Certificate { color_first, color_second, required_first, required_second, contradiction })
}
