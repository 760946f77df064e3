//! Experiment configuration: TOML sections with defaults, re-validated
//! against the module preconditions at load.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use kahlerlab_core::gluelab::{GlueParams, RegionLabel};
use kahlerlab_core::masolver::lp_integrable;
use kahlerlab_core::models::{validate_condition, ModelGeometry};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, LabResult};

/// Environment variable that overrides `run.out_dir`.
pub const OUT_DIR_ENV: &str = "KAHLERLAB_OUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    RegmaxCheck,
    CurvatureTruth,
    MaSolve,
    GlueScan,
    DecayFit,
    All,
}

impl Experiment {
    pub const EACH: [Experiment; 5] =
        [Experiment::RegmaxCheck, Experiment::CurvatureTruth, Experiment::MaSolve, Experiment::GlueScan, Experiment::DecayFit];

    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::RegmaxCheck => "regmax-check",
            Experiment::CurvatureTruth => "curvature-truth",
            Experiment::MaSolve => "ma-solve",
            Experiment::GlueScan => "glue-scan",
            Experiment::DecayFit => "decay-fit",
            Experiment::All => "all",
        }
    }

    pub fn expand(self) -> Vec<Experiment> {
        match self {
            Experiment::All => Self::EACH.to_vec(),
            e => vec![e],
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeometryKind {
    P2Conic,
    P2Line,
    Bidisc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub experiment: Experiment,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { experiment: Experiment::All, seed: 42, out_dir: PathBuf::from("kahlerlab-out") }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    /// Model used by glue-scan and the quadratic-term part of decay-fit.
    pub kind: GeometryKind,
    pub l: u32,
    pub m: u32,
    pub beta: u32,
    /// Only read for `bidisc`; the projective models compute it.
    pub s_hat_d: String,
    pub b0: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        GeometrySection { kind: GeometryKind::Bidisc, l: 9, m: 1, beta: 3, s_hat_d: "1/2".into(), b0: 4.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlueSection {
    pub constrained: bool,
    pub c_min: f64,
    pub c_max: f64,
    pub c_count: usize,
    pub v: f64,
    pub kappa: String,
    pub a1: String,
    /// Required when `constrained = false`; checked against the constraint
    /// otherwise.
    pub a2: Option<String>,
    pub eta3: f64,
    pub a_n: u32,
    pub k: u32,
    pub slack: f64,
    pub labels: Vec<String>,
    /// Points sampled for the piecewise identity and interior checks.
    pub samples: usize,
}

impl Default for GlueSection {
    fn default() -> Self {
        GlueSection {
            constrained: true,
            c_min: 10.0,
            c_max: 1000.0,
            c_count: 5,
            v: 1e-12,
            kappa: "1/2".into(),
            a1: "1/4".into(),
            a2: None,
            eta3: 1.0,
            a_n: 4,
            k: 2,
            slack: 0.3,
            labels: ["OVERLAP_12", "OVERLAP_13", "OVERLAP_23", "TRIPLE"].map(String::from).to_vec(),
            samples: 40,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub n: usize,
    pub grid: usize,
    pub deltas: Vec<f64>,
    pub tol: f64,
    pub accept_tol: f64,
    pub max_iter: usize,
    pub linear_tol: f64,
    pub linear_max_iter: usize,
    /// Integrability exponent of `e^{−ψ₋}`; `(1 + l)/2` when unset.
    pub p: Option<f64>,
    pub a_ratio_max: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            n: 2,
            grid: 16,
            deltas: vec![1e-1, 1e-2, 1e-3],
            tol: 1e-10,
            accept_tol: 1e-8,
            max_iter: 100,
            linear_tol: 1e-10,
            linear_max_iter: 1000,
            p: None,
            a_ratio_max: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegmaxSection {
    pub widths: Vec<Vec<f64>>,
    pub samples: usize,
    pub scaling_min: f64,
    pub scaling_max: f64,
    pub scaling_count: usize,
    pub scaling_samples: usize,
    pub slope_tol: f64,
}

impl Default for RegmaxSection {
    fn default() -> Self {
        RegmaxSection {
            widths: vec![vec![0.3, 0.7], vec![0.3, 0.5, 0.4]],
            samples: 1000,
            scaling_min: 1e-2,
            scaling_max: 1e2,
            scaling_count: 9,
            scaling_samples: 64,
            slope_tol: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurvatureSection {
    pub points: usize,
    pub radius: f64,
    pub tol: f64,
}

impl Default for CurvatureSection {
    fn default() -> Self {
        CurvatureSection { points: 100, radius: 1.5, tol: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecaySection {
    /// Projective model for the ω₀ and γ runs.
    pub geometry: GeometryKind,
    pub count: usize,
    pub slack: f64,
    pub omega0_window: [f64; 2],
    pub gamma_window: [f64; 2],
    pub floor_window: [f64; 2],
    pub floor_spread: f64,
    pub quadratic_other: f64,
    pub theta_window: [f64; 2],
    pub g_window: [f64; 2],
    pub g_floor_window: [f64; 2],
}

impl Default for DecaySection {
    fn default() -> Self {
        DecaySection {
            geometry: GeometryKind::P2Conic,
            count: 7,
            slack: 0.05,
            omega0_window: [1e-4, 1e-1],
            gamma_window: [1e-2, 0.316_227_766_016_838],
            floor_window: [1e-9, 1e-8],
            floor_spread: 1e-2,
            quadratic_other: 0.5,
            theta_window: [1e-5, 1e-3],
            g_window: [0.05, 0.5],
            g_floor_window: [1e-5, 1e-3],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunSection,
    pub geometry: GeometrySection,
    pub glue: GlueSection,
    pub solver: SolverSection,
    pub regmax: RegmaxSection,
    pub curvature: CurvatureSection,
    pub decay: DecaySection,
}

impl FromStr for ExperimentConfig {
    type Err = LabError;

    fn from_str(s: &str) -> LabResult<Self> {
        toml::from_str(s).map_err(|e| LabError::config("parseable config", e.message().to_string()))
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> LabResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::config("parseable config", format!("cannot read {}: {e}", path.display())))?;
        text.parse()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// `run.out_dir` unless the environment overrides it.
    pub fn out_dir(&self) -> PathBuf {
        match std::env::var_os(OUT_DIR_ENV) {
            Some(d) if !d.is_empty() => PathBuf::from(d),
            _ => self.run.out_dir.clone(),
        }
    }

    /// Check every precondition the selected experiments rely on.
    pub fn validate(&self, which: Experiment) -> LabResult<Validated> {
        let run = which.expand();
        let g = &self.geometry;
        let geometry = build_geometry(g.kind, g, "geometry")?;
        let decay_geometry = build_geometry(self.decay.geometry, g, "decay.geometry")?;
        let gl = &self.glue;
        for (name, geom) in [("geometry", &geometry), ("decay.geometry", &decay_geometry)] {
            if !validate_condition(geom, gl.a_n) {
                return Err(LabError::config(
                    "validate_condition: a(n)·m/(2l) < Ŝ_D/(n(n−1))",
                    format!(
                        "{name} `{}`: a(n) = {}, m = {}, l = {} give {} ≥ Ŝ_D/(n(n−1)) with Ŝ_D = {}",
                        geom.name,
                        gl.a_n,
                        geom.m,
                        geom.l,
                        Ratio::new(i64::from(gl.a_n) * i64::from(geom.m), 2 * i64::from(geom.l)),
                        geom.s_hat_d
                    ),
                ));
            }
        }
        let glue = self.glue_params()?;
        if !(gl.c_min > 0.0 && gl.c_max > gl.c_min && gl.c_max.is_finite()) || gl.c_count < 2 {
            return Err(LabError::config("0 < c_min < c_max, c_count ≥ 2", format!("c_min = {}, c_max = {}, c_count = {}", gl.c_min, gl.c_max, gl.c_count)));
        }
        if gl.k == 0 {
            return Err(LabError::config("k ≥ 1", "the floor exponent k must be positive"));
        }
        if !(gl.slack >= 0.0) {
            return Err(LabError::config("slack ≥ 0", format!("glue.slack = {}", gl.slack)));
        }
        let mut labels = Vec::new();
        for s in &gl.labels {
            let l = RegionLabel::parse(s).ok_or_else(|| LabError::config("known region label", format!("`{s}` is not a region label")))?;
            if l.is_pure() {
                return Err(LabError::config("c-sweep labels are overlaps", format!("`{s}` is a pure region")));
            }
            labels.push(l);
        }
        for e in [Experiment::GlueScan, Experiment::DecayFit] {
            if run.contains(&e) && geometry.frame.is_none() {
                return Err(LabError::config(format!("{e} needs a divisor frame"), format!("geometry.kind = {:?} has none; use bidisc", g.kind)));
            }
        }
        if run.contains(&Experiment::MaSolve) {
            self.validate_solver()?;
        }
        if run.contains(&Experiment::RegmaxCheck) {
            self.validate_regmax()?;
        }
        if run.contains(&Experiment::CurvatureTruth) {
            let c = &self.curvature;
            if c.points == 0 || !(c.radius > 0.0) || !(c.tol > 0.0) {
                return Err(LabError::config("curvature.points ≥ 1, radius > 0, tol > 0", format!("{c:?}")));
            }
        }
        if run.contains(&Experiment::DecayFit) {
            self.validate_decay(&decay_geometry)?;
        }
        Ok(Validated { geometry, decay_geometry, glue, labels })
    }

    fn glue_params(&self) -> LabResult<GlueParams> {
        let gl = &self.glue;
        let kappa = parse_ratio("glue.kappa", &gl.kappa)?;
        let a1 = parse_ratio("glue.a1", &gl.a1)?;
        let a2 = gl.a2.as_deref().map(|s| parse_ratio("glue.a2", s)).transpose()?;
        let params = if gl.constrained {
            let p = GlueParams::constrained(gl.c_min, gl.v, kappa, a1, gl.eta3).map_err(param_violation)?;
            if let Some(a2) = a2 {
                if a2 != p.a2 {
                    return Err(LabError::config(
                        "constraint 1 − κ + κ·a1 − a2 = 0",
                        format!("a2 = {a2} but κ = {kappa}, a1 = {a1} require a2 = {}", p.a2),
                    ));
                }
            }
            p
        } else {
            let a2 = a2.ok_or_else(|| LabError::config("a2 given in free mode", "glue.a2 is required when constrained = false"))?;
            GlueParams::free(gl.c_min, gl.v, kappa, a1, a2, gl.eta3).map_err(param_violation)?
        };
        Ok(params)
    }

    fn validate_solver(&self) -> LabResult<()> {
        let s = &self.solver;
        if s.n == 0 || s.grid < 4 || s.grid % 2 != 0 {
            return Err(LabError::config("solver.n ≥ 1, solver.grid even and ≥ 4", format!("n = {}, grid = {}", s.n, s.grid)));
        }
        if s.n != 2 {
            return Err(LabError::config("solver.n = 2", "the divisor runs place D and F on the two factors of the 2-torus"));
        }
        if self.geometry.l as usize <= s.n {
            return Err(LabError::config("l > n", format!("l = {} with n = {}", self.geometry.l, s.n)));
        }
        if s.deltas.len() < 2 || s.deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
            return Err(LabError::config("at least two smoothing scales δ ∈ (0, 1)", format!("deltas = {:?}", s.deltas)));
        }
        if !(s.tol > 0.0 && s.accept_tol >= s.tol && s.linear_tol > 0.0) || s.max_iter == 0 || s.linear_max_iter == 0 {
            return Err(LabError::config("positive solver tolerances with accept_tol ≥ tol", format!("{s:?}")));
        }
        if let Some(p) = s.p {
            if !lp_integrable(self.geometry.l, p) {
                return Err(LabError::config("e^{−ψ₋} ∈ L^p with 1 < p < l", format!("p = {p}, l = {}", self.geometry.l)));
            }
        }
        if !(s.a_ratio_max >= 1.0) {
            return Err(LabError::config("a_ratio_max ≥ 1", format!("{}", s.a_ratio_max)));
        }
        Ok(())
    }

    fn validate_regmax(&self) -> LabResult<()> {
        let r = &self.regmax;
        for w in &r.widths {
            if w.len() < 2 || w.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(LabError::config("regmax widths: arity ≥ 2, every η > 0", format!("{w:?}")));
            }
        }
        if r.samples == 0 || r.scaling_samples == 0 || r.scaling_count < 2 || !(r.scaling_min > 0.0 && r.scaling_max > r.scaling_min) {
            return Err(LabError::config("regmax sampling sizes and 0 < scaling_min < scaling_max", format!("{r:?}")));
        }
        Ok(())
    }

    fn validate_decay(&self, geom: &ModelGeometry) -> LabResult<()> {
        let d = &self.decay;
        if geom.frame.is_some() {
            return Err(LabError::config("decay.geometry is projective", "use p2-conic or p2-line"));
        }
        if d.count < 3 || !(d.slack >= 0.0) || !(d.floor_spread > 0.0) || !(d.quadratic_other > 0.0) {
            return Err(LabError::config("decay.count ≥ 3, slack ≥ 0, floor_spread > 0", format!("{d:?}")));
        }
        for (name, w) in [
            ("omega0_window", d.omega0_window),
            ("gamma_window", d.gamma_window),
            ("floor_window", d.floor_window),
            ("theta_window", d.theta_window),
            ("g_window", d.g_window),
            ("g_floor_window", d.g_floor_window),
        ] {
            // fits need at least one decade
            if !(w[0] > 0.0 && w[1] >= 10.0 * w[0] * (1.0 - 1e-12)) {
                return Err(LabError::config("fit windows span at least one decade", format!("decay.{name} = {w:?}")));
            }
        }
        let beta = f64::from(self.geometry.beta);
        let v = self.glue.v;
        let top = d.floor_window[1].powf(beta);
        let vk = v.powi(self.glue.k as i32);
        if top > vk * (1.0 + 1e-9) {
            return Err(LabError::config(
                "floor window inside ‖σ_F‖^{2β} ≤ v^k",
                format!("‖σ_F‖² = {:e} gives ‖σ_F‖^(2β) = {top:e} > v^k = {vk:e}", d.floor_window[1]),
            ));
        }
        Ok(())
    }
}

/// Parsed parameters shared by the experiments.
#[derive(Clone, Debug)]
pub struct Validated {
    pub geometry: ModelGeometry,
    pub decay_geometry: ModelGeometry,
    /// Glue parameters at `c = c_min`.
    pub glue: GlueParams,
    pub labels: Vec<RegionLabel>,
}

fn parse_ratio(name: &str, s: &str) -> LabResult<Ratio<i64>> {
    Ratio::from_str(s.trim()).map_err(|e| LabError::config("rational parameter `p/q`", format!("{name} = `{s}`: {e}")))
}

fn param_violation(e: kahlerlab_core::Error) -> LabError {
    match e {
        kahlerlab_core::Error::InvalidParameter { name, reason } => LabError::config(format!("glue.{name}: {reason}"), "glue parameters rejected"),
        other => LabError::config("glue parameters", other.to_string()),
    }
}

fn build_geometry(kind: GeometryKind, g: &GeometrySection, section: &str) -> LabResult<ModelGeometry> {
    if g.beta < 3 {
        return Err(LabError::config("beta ≥ 3", format!("geometry.beta = {}", g.beta)));
    }
    if g.m == 0 {
        return Err(LabError::config("m ≥ 1", "geometry.m = 0"));
    }
    if g.l <= 2 {
        return Err(LabError::config("l > n", format!("geometry.l = {} with n = 2", g.l)));
    }
    if !g.b0.is_finite() {
        return Err(LabError::config("b0 finite", format!("geometry.b0 = {}", g.b0)));
    }
    let built = match kind {
        GeometryKind::P2Conic => ModelGeometry::p2_conic(g.l, g.m, g.beta),
        GeometryKind::P2Line => ModelGeometry::p2_line(g.l, g.m, g.beta),
        GeometryKind::Bidisc => {
            let s = parse_ratio("geometry.s_hat_d", &g.s_hat_d)?;
            ModelGeometry::bidisc(g.l, g.m, g.beta, s)
        }
    };
    let geom = built.map_err(|e| LabError::config(format!("{section} preconditions"), e.to_string()))?;
    Ok(geom.with_b0(g.b0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = ExperimentConfig::default();
        let v = c.validate(Experiment::All).unwrap();
        assert_eq!(v.glue.a2, Ratio::new(5, 8));
        assert_eq!(v.labels.len(), 4);
    }

    #[test]
    fn default_roundtrips_through_toml() {
        let c = ExperimentConfig::default();
        let back: ExperimentConfig = c.to_toml().parse().unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn shipped_default_file_matches_builtin() {
        let c: ExperimentConfig = include_str!("../configs/default.toml").parse().unwrap();
        assert_eq!(c, ExperimentConfig::default());
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c: ExperimentConfig = "[glue]\na_n = 3\n".parse().unwrap();
        assert_eq!(c.glue.a_n, 3);
        assert_eq!(c.glue.v, 1e-12);
        assert_eq!(c.run.seed, 42);
    }

    #[test]
    fn condition_violation_is_named() {
        let c: ExperimentConfig = "[glue]\na_n = 5\n".parse().unwrap();
        match c.validate(Experiment::RegmaxCheck) {
            Err(LabError::Config { invariant, .. }) => assert!(invariant.starts_with("validate_condition"), "{invariant}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inconsistent_a2_breaks_the_constraint() {
        let c: ExperimentConfig = "[glue]\na2 = \"1/2\"\n".parse().unwrap();
        match c.validate(Experiment::GlueScan) {
            Err(LabError::Config { invariant, .. }) => assert!(invariant.starts_with("constraint"), "{invariant}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lp_exponent_must_stay_below_l() {
        let c: ExperimentConfig = "[solver]\np = 9.0\n".parse().unwrap();
        assert!(matches!(c.validate(Experiment::MaSolve), Err(LabError::Config { .. })));
        let c: ExperimentConfig = "[solver]\np = 4.0\n".parse().unwrap();
        assert!(c.validate(Experiment::MaSolve).is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!("[glue]\nkapa = \"1/2\"\n".parse::<ExperimentConfig>().is_err());
    }

    #[test]
    fn floor_window_must_sit_in_the_floor() {
        let c: ExperimentConfig = "[decay]\nfloor_window = [1e-6, 1e-5]\n".parse().unwrap();
        assert!(matches!(c.validate(Experiment::DecayFit), Err(LabError::Config { .. })));
        assert!(c.validate(Experiment::GlueScan).is_ok());
    }
}
