//! The JSON run report.
//!
//! Field order is the declaration order below and floats are written with 17
//! significant digits, so identical configs give byte-identical reports.

use std::io;

use brwre_core::criteria::{LambdaInterval, RegimeReport};
use brwre_core::simulator::{FrozenProfile, SupermartingaleTrace, SurvivalEstimate};
use brwre_core::spectral::SweepPoint;
use brwre_core::{ConditionReport, LyapunovEstimate, MomentTriple};
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::config::Config;

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub config_hash: String,
    pub seeds: Seeds,
    pub config: Config,
    pub moments: Vec<MomentTriple>,
    pub condition_report: ConditionReport,
    pub lambda_set: Option<LambdaInterval>,
    pub regime_report: Option<RegimeReport>,
    pub lyapunov: Option<LyapunovSection>,
    pub rho_series: Option<Vec<SweepPoint>>,
    pub survival: Option<SurvivalSection>,
    pub frozen: Option<FrozenSection>,
    pub supermartingale: Option<SupermartingaleTrace>,
    pub crosscheck: Option<Vec<CrosscheckRow>>,
    pub notes: Vec<String>,
}

/// Seeds handed to each stage, all derived from the root seed.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Seeds {
    pub root: u64,
    /// The quenched environment shared by every stage.
    pub environment: u64,
    pub lyapunov: u64,
    pub simulate: u64,
    pub frozen: u64,
    pub supermartingale: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovSection {
    /// `E ln(mu_minus / mu_plus)`.
    pub drift: f64,
    pub gamma1: Option<LyapunovEstimate>,
    pub gamma1_tilde: Option<LyapunovEstimate>,
    /// `A_lambda` exponents at points of the feasible set.
    pub lambda_points: Vec<LambdaPoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LambdaPoint {
    pub lambda: f64,
    pub gamma1_lambda: LyapunovEstimate,
    /// From the determinant sum rule.
    pub gamma2_lambda: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SurvivalSection {
    pub estimate: SurvivalEstimate,
    /// Galton-Watson survival probability of the total population, for
    /// single-state laws.
    pub galton_watson: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FrozenSection {
    /// The profile was taken on the mirrored law (process vanishing on the left).
    pub mirrored: bool,
    pub profile: FrozenProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

/// One consistency check: `lhs relation rhs` up to `tolerance`.
#[derive(Debug, Clone, Serialize)]
pub struct CrosscheckRow {
    pub identity: String,
    pub relation: Relation,
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs - rhs|` in standard errors, for statistical rows.
    pub sigma_distance: Option<f64>,
    /// Allowed absolute deviation in the direction of the relation.
    pub tolerance: f64,
    pub pass: bool,
}

impl CrosscheckRow {
    pub fn new(identity: String, relation: Relation, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let pass = match relation {
            Relation::Eq => (lhs - rhs).abs() <= tolerance,
            Relation::Le => lhs <= rhs + tolerance,
            Relation::Ge => lhs >= rhs - tolerance,
        };
        Self {
            identity,
            relation,
            lhs,
            rhs,
            sigma_distance: None,
            tolerance,
            pass,
        }
    }

    /// Equality within `k` standard errors.
    pub fn statistical(identity: String, lhs: f64, rhs: f64, stderr: f64, k: f64) -> Self {
        let mut row = Self::new(identity, Relation::Eq, lhs, rhs, k * stderr);
        row.sigma_distance = Some(brwre_core::criteria::sigma_distance((lhs - rhs).abs(), stderr));
        row
    }
}

/// Pretty JSON with every float printed as `d.dddddddddddddddde±x`.
pub struct Fixed17(PrettyFormatter<'static>);

impl Fixed17 {
    pub fn new() -> Self {
        Self(PrettyFormatter::new())
    }
}

impl Formatter for Fixed17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> serde_json::Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Fixed17::new());
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(out)
}

/// The same float format for CSV cells.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        String::new()
    }
}
