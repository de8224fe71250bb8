//! Scenario runner, Monte Carlo detection experiments and report rendering.
//!
//! A scenario goes measure -> attack -> estimate -> detect and yields one
//! [`ScenarioReport`] row. Meter numbers in scenario files and reports are
//! 1-based; the library API underneath is 0-based.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{self, AttackVector, StateShift};
use crate::bad_data::{self, DetectionResult, DetectorConfig};
use crate::error::{Error, Result};
use crate::estimator::{self, AcOptions, EstimationResult, WeightMatrix};
use crate::grid::{self, Case};
use crate::measurement::{self, MeasurementVector, Mode, Noise, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaPolicy {
    /// Noise with each meter's configured σ.
    #[default]
    Config,
    /// Noiseless readings.
    Zero,
}

/// Where a scenario's readings come from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasurementSource {
    /// The `value` fields of the case file.
    #[default]
    FromCase,
    Values(Vec<f64>),
    /// `z = h(state) + e`; `state` is the free state vector of the
    /// scenario's mode.
    Simulate {
        state: Vec<f64>,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        sigma: SigmaPolicy,
    },
}

fn default_constrained_magnitude() -> f64 {
    attack::DEFAULT_CONSTRAINED_MAGNITUDE
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackSpec {
    #[default]
    None,
    /// Arbitrary additive corruption.
    ExplicitDeltas {
        deltas: Vec<f64>,
    },
    /// Corrupted readings given outright; converted to deltas.
    Replacement {
        values: Vec<f64>,
    },
    StealthShift {
        c: Vec<f64>,
    },
    RandomStealth {
        magnitude: f64,
        seed: u64,
    },
    /// Stealth attack limited to the 1-based `accessible` meters.
    Constrained {
        accessible: Vec<usize>,
        #[serde(default = "default_constrained_magnitude")]
        magnitude: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Case file path, relative to the scenario file.
    pub case: PathBuf,
    #[serde(default)]
    pub measurements: MeasurementSource,
    #[serde(default)]
    pub attack: AttackSpec,
    #[serde(default)]
    pub detectors: Vec<DetectorConfig>,
    #[serde(default)]
    pub mode: Mode,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::MalformedDocument(e.to_string()))
    }

    /// Reads a scenario file and resolves its case path against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        let mut scenario = Self::parse(&text)?;
        if scenario.case.is_relative() {
            let base = path.parent().unwrap_or_else(|| Path::new("."));
            scenario.case = base.join(&scenario.case);
        }
        Ok(scenario)
    }

    fn effective_detectors(&self) -> Vec<DetectorConfig> {
        if self.detectors.is_empty() {
            vec![DetectorConfig::default()]
        } else {
            self.detectors.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub method: String,
    pub detected: bool,
    pub statistic: f64,
    pub threshold: f64,
    /// 1-based.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suspect_meter: Option<usize>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub ambiguous: bool,
}

impl From<&DetectionResult> for Verdict {
    fn from(d: &DetectionResult) -> Self {
        Self {
            method: d.method.to_string(),
            detected: d.detected,
            statistic: d.statistic,
            threshold: d.threshold_used,
            suspect_meter: d.suspect_meter.map(|i| i + 1),
            ambiguous: d.ambiguous,
        }
    }
}

/// One row of the attack-scenario comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioReport {
    pub name: String,
    pub attacked: bool,
    pub state: Vec<f64>,
    pub squared_error_raw: f64,
    pub objective_weighted: f64,
    pub verdicts: Vec<Verdict>,
}

impl ScenarioReport {
    /// Bad data is reported when any detector fires.
    pub fn detected(&self) -> bool {
        self.verdicts.iter().any(|v| v.detected)
    }

    /// Copy with every float rounded to the precision of the machine format.
    pub fn rounded(&self) -> Self {
        Self {
            name: self.name.clone(),
            attacked: self.attacked,
            state: self.state.iter().map(|&x| sig6(x)).collect(),
            squared_error_raw: sig6(self.squared_error_raw),
            objective_weighted: sig6(self.objective_weighted),
            verdicts: self
                .verdicts
                .iter()
                .map(|v| Verdict { statistic: sig6(v.statistic), threshold: sig6(v.threshold), ..v.clone() })
                .collect(),
        }
    }
}

/// Rounds to 6 significant digits.
pub fn sig6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

fn measured_values(case: &Case, scenario: &Scenario, adm: &grid::AdmittanceMatrix) -> Result<MeasurementVector> {
    let m = case.measurements.len();
    let z = match &scenario.measurements {
        MeasurementSource::FromCase => case.values.clone().ok_or_else(|| {
            Error::InvalidParameter(format!("scenario `{}`: case file carries no meter values", scenario.name))
        })?,
        MeasurementSource::Values(v) => v.clone(),
        MeasurementSource::Simulate { state, seed, sigma } => {
            let truth = StateVector::from_free(&case.network, state, scenario.mode)?;
            let noise = match sigma {
                SigmaPolicy::Config => Noise::Gaussian { seed: *seed },
                SigmaPolicy::Zero => Noise::None,
            };
            return measurement::simulate_measurements(
                &case.network,
                adm,
                &truth,
                &case.measurements,
                scenario.mode,
                noise,
            );
        }
    };
    if z.len() != m {
        return Err(Error::LengthMismatch { expected: m, actual: z.len() });
    }
    Ok(DVector::from_vec(z))
}

fn build_attack(spec: &AttackSpec, h: Option<&DMatrix<f64>>, z: &MeasurementVector) -> Result<Option<AttackVector>> {
    let m = z.len();
    let need_h = || h.ok_or_else(|| Error::InvalidParameter("stealth attacks are defined on the DC model only".into()));
    let check = |v: &[f64]| {
        if v.len() == m {
            Ok(())
        } else {
            Err(Error::LengthMismatch { expected: m, actual: v.len() })
        }
    };
    Ok(match spec {
        AttackSpec::None => None,
        AttackSpec::ExplicitDeltas { deltas } => {
            check(deltas)?;
            Some(AttackVector(DVector::from_column_slice(deltas)))
        }
        AttackSpec::Replacement { values } => {
            check(values)?;
            Some(AttackVector(DVector::from_column_slice(values) - z))
        }
        AttackSpec::StealthShift { c } => {
            Some(attack::craft_stealth_attack(need_h()?, &StateShift(DVector::from_column_slice(c)))?)
        }
        AttackSpec::RandomStealth { magnitude, seed } => {
            Some(attack::random_stealth_attack(need_h()?, *magnitude, *seed)?.1)
        }
        AttackSpec::Constrained { accessible, magnitude } => {
            if let Some(&bad) = accessible.iter().find(|&&i| i == 0 || i > m) {
                return Err(Error::DimensionMismatch(format!("meter number {bad} outside 1..{m}")));
            }
            let set: BTreeSet<usize> = accessible.iter().map(|i| i - 1).collect();
            attack::constrained_stealth_attack(need_h()?, &set, *magnitude)?.map(|(_, a)| a)
        }
    })
}

/// Estimate plus the Jacobian the detectors should use.
fn estimate(
    case: &Case,
    adm: &grid::AdmittanceMatrix,
    mode: Mode,
    dc_h: Option<&DMatrix<f64>>,
    z: &MeasurementVector,
    w: &WeightMatrix,
) -> Result<(EstimationResult, DMatrix<f64>)> {
    match mode {
        Mode::Dc => {
            let h = dc_h.expect("DC Jacobian built for DC mode");
            Ok((estimator::estimate_dc(h, z, w)?, h.clone()))
        }
        Mode::Ac => {
            let est = estimator::estimate_ac(&case.network, adm, z, &case.measurements, &AcOptions::default(), w)?;
            let state = StateVector::from_ac_free(&case.network, est.state.as_slice())?;
            let jac = measurement::ac_jacobian(&case.network, adm, &state, &case.measurements)?;
            Ok((est, jac.0))
        }
    }
}

/// Runs a scenario against an already parsed case.
pub fn run_scenario_on(scenario: &Scenario, case: &Case) -> Result<ScenarioReport> {
    let adm = grid::build_admittance(&case.network);
    let dc_h = match scenario.mode {
        Mode::Dc => Some(measurement::dc_jacobian(&case.network, &case.measurements)?.0),
        Mode::Ac => None,
    };
    let w = WeightMatrix::from_config(&case.measurements)?;
    let z = measured_values(case, scenario, &adm)?;
    let a = build_attack(&scenario.attack, dc_h.as_ref(), &z)?;
    let z = match &a {
        Some(a) => attack::apply_attack(&z, a)?,
        None => z,
    };
    let (est, h) = estimate(case, &adm, scenario.mode, dc_h.as_ref(), &z, &w)?;
    let verdicts = scenario
        .effective_detectors()
        .iter()
        .map(|d| bad_data::run_detector(d, &h, &z, &w, &est).map(|r| Verdict::from(&r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioReport {
        name: scenario.name.clone(),
        attacked: a.is_some(),
        state: est.state.iter().copied().collect(),
        squared_error_raw: est.squared_error_raw,
        objective_weighted: est.objective_weighted,
        verdicts,
    })
}

/// Loads the scenario's case file and runs it.
pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioReport> {
    let case = grid::load_case(&scenario.case)?;
    run_scenario_on(scenario, &case)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MonteCarloAttack {
    #[default]
    None,
    Stealth {
        magnitude: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloConfig {
    pub trials: usize,
    pub noise_seed_base: u64,
    pub attack: MonteCarloAttack,
    pub detector: DetectorConfig,
    /// Free DC state the readings are generated from. Defaults to the
    /// estimate of the case's own readings, or a flat state without them.
    pub true_state: Option<Vec<f64>>,
    /// Multiplies every meter σ when drawing noise; 0 gives noiseless trials.
    pub sigma_scale: f64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            trials: 1000,
            noise_seed_base: 0,
            attack: MonteCarloAttack::None,
            detector: DetectorConfig::default(),
            true_state: None,
            sigma_scale: 1.0,
        }
    }
}

/// Paired outcome of one trial: the clean arm and the attacked arm share the
/// noise draw.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub seed: u64,
    pub clean_statistic: f64,
    pub clean_detected: bool,
    pub attacked_statistic: f64,
    pub attacked_detected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloStats {
    pub trials: usize,
    pub detection_rate: f64,
    pub false_alarm_rate: f64,
    pub mean_statistic: f64,
    pub mean_clean_statistic: f64,
    /// Wilson 95% interval of `detection_rate`.
    pub detection_interval: [f64; 2],
    /// Wilson 95% interval of `false_alarm_rate`.
    pub false_alarm_interval: [f64; 2],
}

/// Wilson score interval at 95% confidence.
pub fn wilson_interval(successes: usize, trials: usize) -> [f64; 2] {
    if trials == 0 {
        return [0.0, 1.0];
    }
    const Z: f64 = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    [(centre - half).max(0.0).min(p), (centre + half).min(1.0).max(p)]
}

const ATTACK_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Per-trial outcomes for a DC Monte Carlo run. Trial `t` uses noise seed
/// `noise_seed_base + t`; results do not depend on thread scheduling.
pub fn run_monte_carlo_trials(case: &Case, config: &MonteCarloConfig) -> Result<Vec<TrialOutcome>> {
    if config.trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    if config.sigma_scale < 0.0 || !config.sigma_scale.is_finite() {
        return Err(Error::InvalidParameter("sigma_scale must be non-negative".into()));
    }
    let h = measurement::dc_jacobian(&case.network, &case.measurements)?.0;
    let w = WeightMatrix::from_config(&case.measurements)?;
    let sigmas = case.measurements.sigmas();
    let truth = match (&config.true_state, &case.values) {
        (Some(x), _) => {
            if x.len() != h.ncols() {
                return Err(Error::LengthMismatch { expected: h.ncols(), actual: x.len() });
            }
            DVector::from_column_slice(x)
        }
        (None, Some(values)) => estimator::estimate_dc(&h, &DVector::from_column_slice(values), &w)?.state,
        (None, None) => DVector::zeros(h.ncols()),
    };
    let clean_z = &h * &truth;

    (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let seed = config.noise_seed_base.wrapping_add(t as u64);
            let mut z = clean_z.clone();
            for (i, s) in sigmas.iter().enumerate() {
                z[i] += config.sigma_scale * s * measurement::meter_noise(seed, i);
            }
            let est = estimator::estimate_dc(&h, &z, &w)?;
            let clean = bad_data::run_detector(&config.detector, &h, &z, &w, &est)?;
            let attacked = match config.attack {
                MonteCarloAttack::None => clean.clone(),
                MonteCarloAttack::Stealth { magnitude } => {
                    let (_, a) = attack::random_stealth_attack(&h, magnitude, seed ^ ATTACK_SEED_SALT)?;
                    let za = attack::apply_attack(&z, &a)?;
                    let est = estimator::estimate_dc(&h, &za, &w)?;
                    bad_data::run_detector(&config.detector, &h, &za, &w, &est)?
                }
            };
            Ok(TrialOutcome {
                seed,
                clean_statistic: clean.statistic,
                clean_detected: clean.detected,
                attacked_statistic: attacked.statistic,
                attacked_detected: attacked.detected,
            })
        })
        .collect()
}

pub fn summarize(outcomes: &[TrialOutcome]) -> MonteCarloStats {
    let n = outcomes.len();
    let detections = outcomes.iter().filter(|o| o.attacked_detected).count();
    let alarms = outcomes.iter().filter(|o| o.clean_detected).count();
    let mean = |f: fn(&TrialOutcome) -> f64| outcomes.iter().map(f).sum::<f64>() / n.max(1) as f64;
    MonteCarloStats {
        trials: n,
        detection_rate: detections as f64 / n.max(1) as f64,
        false_alarm_rate: alarms as f64 / n.max(1) as f64,
        mean_statistic: mean(|o| o.attacked_statistic),
        mean_clean_statistic: mean(|o| o.clean_statistic),
        detection_interval: wilson_interval(detections, n),
        false_alarm_interval: wilson_interval(alarms, n),
    }
}

pub fn run_monte_carlo(case: &Case, config: &MonteCarloConfig) -> Result<MonteCarloStats> {
    Ok(summarize(&run_monte_carlo_trials(case, config)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Table,
    Machine,
}

#[derive(Debug, Clone, Copy)]
pub enum Report<'a> {
    Scenarios(&'a [ScenarioReport]),
    MonteCarlo(&'a MonteCarloStats),
}

fn fmt6(x: f64) -> String {
    let r = sig6(x);
    format!("{r}")
}

fn pad_table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> =
            row.iter().enumerate().map(|(c, cell)| format!("{cell:<width$}", width = widths[c])).collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

fn scenario_table(reports: &[ScenarioReport]) -> String {
    let mut rows = vec![vec![
        "Case".to_string(),
        "False Data Injection Attack".to_string(),
        "State Variables".to_string(),
        "Squared Error".to_string(),
        "Bad Data Detection".to_string(),
        "Detectors".to_string(),
    ]];
    for r in reports {
        let state = r.state.iter().map(|&x| fmt6(x)).collect::<Vec<_>>().join(" ");
        let details = r
            .verdicts
            .iter()
            .map(|v| {
                let mut s = format!("{} {}/{}", v.method, fmt6(v.statistic), fmt6(v.threshold));
                if let Some(m) = v.suspect_meter {
                    let _ = write!(s, " meter {m}{}", if v.ambiguous { " (tie)" } else { "" });
                }
                s
            })
            .collect::<Vec<_>>()
            .join("; ");
        rows.push(vec![
            r.name.clone(),
            if r.attacked { "Yes" } else { "No" }.to_string(),
            state,
            fmt6(r.squared_error_raw),
            if r.detected() { "Detected" } else { "Not Detected" }.to_string(),
            details,
        ]);
    }
    pad_table(&rows)
}

fn monte_carlo_table(s: &MonteCarloStats) -> String {
    let interval = |i: [f64; 2]| format!("[{}, {}]", fmt6(i[0]), fmt6(i[1]));
    pad_table(&[
        vec!["Trials".into(), s.trials.to_string()],
        vec!["Detection rate".into(), fmt6(s.detection_rate), interval(s.detection_interval)],
        vec!["False alarm rate".into(), fmt6(s.false_alarm_rate), interval(s.false_alarm_interval)],
        vec!["Mean statistic (attacked)".into(), fmt6(s.mean_statistic)],
        vec!["Mean statistic (clean)".into(), fmt6(s.mean_clean_statistic)],
    ])
}

/// Renders a report. `Machine` gives one JSON object per line with floats
/// rounded to 6 significant digits and keys in declaration order.
pub fn emit_report(report: Report<'_>, format: ReportFormat) -> String {
    match (report, format) {
        (Report::Scenarios(rows), ReportFormat::Table) => scenario_table(rows),
        (Report::MonteCarlo(stats), ReportFormat::Table) => monte_carlo_table(stats),
        (Report::Scenarios(rows), ReportFormat::Machine) => {
            rows.iter().map(|r| serde_json::to_string(&r.rounded()).expect("report serializes") + "\n").collect()
        }
        (Report::MonteCarlo(stats), ReportFormat::Machine) => {
            let rounded = MonteCarloStats {
                detection_rate: sig6(stats.detection_rate),
                false_alarm_rate: sig6(stats.false_alarm_rate),
                mean_statistic: sig6(stats.mean_statistic),
                mean_clean_statistic: sig6(stats.mean_clean_statistic),
                detection_interval: stats.detection_interval.map(sig6),
                false_alarm_interval: stats.false_alarm_interval.map(sig6),
                ..stats.clone()
            };
            serde_json::to_string(&rounded).expect("stats serialize") + "\n"
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CASE: &str = r#"{
        "buses": [{"id": 1}, {"id": 2}, {"id": 3, "ref": true}],
        "branches": [
            {"from": 1, "to": 2, "r": 0, "x": 0.2},
            {"from": 1, "to": 3, "r": 0, "x": 0.4},
            {"from": 3, "to": 2, "r": 0, "x": 0.25}
        ],
        "measurements": [
            {"kind": "flow_p", "from": 1, "to": 2, "sigma": 0.01, "value": 0.62},
            {"kind": "flow_p", "from": 1, "to": 3, "sigma": 0.01, "value": 0.06},
            {"kind": "flow_p", "from": 3, "to": 2, "sigma": 0.01, "value": 0.37}
        ]
    }"#;

    fn case() -> Case {
        grid::parse_case(CASE).unwrap()
    }

    fn scenario(attack: AttackSpec) -> Scenario {
        Scenario {
            name: "s".into(),
            case: PathBuf::from("unused.json"),
            measurements: MeasurementSource::FromCase,
            attack,
            detectors: vec![],
            mode: Mode::Dc,
        }
    }

    #[test]
    fn scenario_json_shapes() {
        let s = Scenario::parse(
            r#"{"name": "x", "case": "c.json", "measurements": {"values": [1, 2, 3]},
                "attack": {"kind": "stealth_shift", "c": [0.005, 0.001]},
                "detectors": [{"method": "chi_square", "alpha": 0.05}], "mode": "dc"}"#,
        )
        .unwrap();
        assert_eq!(s.attack, AttackSpec::StealthShift { c: vec![0.005, 0.001] });
        assert_eq!(s.measurements, MeasurementSource::Values(vec![1.0, 2.0, 3.0]));

        let s = Scenario::parse(r#"{"name": "x", "case": "c.json", "measurements": "from_case"}"#).unwrap();
        assert_eq!(s.attack, AttackSpec::None);
        assert_eq!(s.effective_detectors(), vec![DetectorConfig::ChiSquare { alpha: 0.05 }]);

        let s = Scenario::parse(
            r#"{"name": "x", "case": "c.json",
                "measurements": {"simulate": {"state": [0.1, 0.2], "seed": 4, "sigma": "zero"}},
                "attack": {"kind": "constrained", "accessible": [1, 3]}}"#,
        )
        .unwrap();
        assert_eq!(s.attack, AttackSpec::Constrained { accessible: vec![1, 3], magnitude: 0.01 });

        assert!(Scenario::parse(r#"{"name": "x", "case": "c.json", "extra": 1}"#).is_err());
        assert!(Scenario::parse(
            r#"{"name": "x", "case": "c.json", "attack": {"kind": "stealth_shift", "c": [], "d": 1}}"#
        )
        .is_err());
    }

    #[test]
    fn three_bus_scenarios_in_memory() {
        let c = case();
        let base = run_scenario_on(&scenario(AttackSpec::None), &c).unwrap();
        assert!(!base.attacked && !base.detected());
        let s2 =
            run_scenario_on(&scenario(AttackSpec::ExplicitDeltas { deltas: vec![0.01, -0.01, -0.02] }), &c).unwrap();
        assert!(s2.attacked && s2.detected());
        let s2b = run_scenario_on(&scenario(AttackSpec::Replacement { values: vec![0.63, 0.05, 0.35] }), &c).unwrap();
        for (a, b) in s2.state.iter().zip(&s2b.state) {
            assert!((a - b).abs() < 1e-12);
        }
        let s3 = run_scenario_on(&scenario(AttackSpec::StealthShift { c: vec![0.005, 0.001] }), &c).unwrap();
        assert!(s3.attacked && !s3.detected());
        assert!((s3.squared_error_raw - base.squared_error_raw).abs() < 1e-15);
    }

    #[test]
    fn constrained_scenario_without_solution_is_unattacked() {
        let c = case();
        let r =
            run_scenario_on(&scenario(AttackSpec::Constrained { accessible: vec![1], magnitude: 0.01 }), &c).unwrap();
        assert!(!r.attacked);
        let r = run_scenario_on(&scenario(AttackSpec::Constrained { accessible: vec![1, 3], magnitude: 0.01 }), &c)
            .unwrap();
        assert!(r.attacked && !r.detected());
        assert!(
            run_scenario_on(&scenario(AttackSpec::Constrained { accessible: vec![0], magnitude: 0.01 }), &c).is_err()
        );
    }

    #[test]
    fn stealth_attack_rejected_in_ac_mode() {
        let c = case();
        let mut s = scenario(AttackSpec::StealthShift { c: vec![0.005, 0.001] });
        s.mode = Mode::Ac;
        assert!(matches!(run_scenario_on(&s, &c), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn length_errors_surface() {
        let c = case();
        let mut s = scenario(AttackSpec::ExplicitDeltas { deltas: vec![0.1] });
        assert!(matches!(run_scenario_on(&s, &c), Err(Error::LengthMismatch { .. })));
        s.attack = AttackSpec::None;
        s.measurements = MeasurementSource::Values(vec![1.0]);
        assert!(matches!(run_scenario_on(&s, &c), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn simulated_noiseless_readings_have_zero_residual() {
        let c = case();
        let mut s = scenario(AttackSpec::None);
        s.measurements = MeasurementSource::Simulate { state: vec![0.02, -0.05], seed: 0, sigma: SigmaPolicy::Zero };
        let r = run_scenario_on(&s, &c).unwrap();
        assert!(r.squared_error_raw < 1e-25);
        assert!((r.state[0] - 0.02).abs() < 1e-14);
    }

    #[test]
    fn sig6_rounding() {
        assert_eq!(sig6(0.000214285714), 0.000214286);
        assert_eq!(sig6(-0.0942857142), -0.0942857);
        assert_eq!(sig6(0.0), 0.0);
        assert_eq!(fmt6(0.00021428571), "0.000214286");
    }

    #[test]
    fn wilson_interval_contains_point() {
        for (k, n) in [(0, 1), (1, 1), (5, 100), (100, 2000), (2000, 2000)] {
            let [lo, hi] = wilson_interval(k, n);
            let p = k as f64 / n as f64;
            assert!(lo <= p && p <= hi && (0.0..=1.0).contains(&lo) && hi <= 1.0);
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        let text = emit_report(Report::Scenarios(&[]), ReportFormat::Table);
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("Case"));
        assert!(emit_report(Report::Scenarios(&[]), ReportFormat::Machine).is_empty());
    }

    #[test]
    fn machine_report_round_trips() {
        let c = case();
        let r = run_scenario_on(&scenario(AttackSpec::StealthShift { c: vec![0.005, 0.001] }), &c).unwrap();
        let text = emit_report(Report::Scenarios(std::slice::from_ref(&r)), ReportFormat::Machine);
        let parsed: ScenarioReport = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed, r.rounded());
        let keys: Vec<&str> = [
            "\"name\"",
            "\"attacked\"",
            "\"state\"",
            "\"squared_error_raw\"",
            "\"objective_weighted\"",
            "\"verdicts\"",
        ]
        .to_vec();
        let positions: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn monte_carlo_trivial_run() {
        let c = case();
        let config = MonteCarloConfig { trials: 1, sigma_scale: 0.0, ..MonteCarloConfig::default() };
        let stats = run_monte_carlo(&c, &config).unwrap();
        assert_eq!(stats.trials, 1);
        assert_eq!(stats.detection_rate, 0.0);
        assert!(run_monte_carlo(&c, &MonteCarloConfig { trials: 0, ..config }).is_err());
    }

    #[test]
    fn monte_carlo_is_schedule_independent() {
        let c = case();
        let config = MonteCarloConfig {
            trials: 64,
            noise_seed_base: 10,
            attack: MonteCarloAttack::Stealth { magnitude: 0.01 },
            ..MonteCarloConfig::default()
        };
        let parallel = run_monte_carlo_trials(&c, &config).unwrap();
        let serial = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_monte_carlo_trials(&c, &config).unwrap());
        assert_eq!(parallel, serial);
        assert_eq!(parallel[3].seed, 13);
    }
}
