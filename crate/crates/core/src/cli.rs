//! Command-line front end. `bcrisk` is a thin wrapper around [`run`].

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use crate::calib::{
    calibrate, read_cohort, read_curves, write_cohort, CalibError, CalibrationOptions, Cause, CurveSet, ExpectedMethod,
    FollowUpRecord, Grouping, ProfileSource,
};
use crate::pedigree::{parse_pedigree, PedigreeMember};
use crate::risk::{assessment_json, AssessRequest, RiskError, RiskModel};
use crate::simcohort::{SimError, SimSpec, Simulator};
use crate::timecurves::{all_curves, curves_to_csv, CurveOptions, GridSpec, SurvivorLimit};

/// Environment variable naming the default parameter directory.
pub const PARAM_DIR_ENV: &str = "BCRISK_PARAM_DIR";

#[derive(Debug, Parser)]
#[command(name = "bcrisk", version, about = "Breast cancer risk assessment and calibration tools")]
pub struct Cli {
    /// Directory with breast_incidence.csv, other_mortality.csv, segregation.json,
    /// factors.json and density_surface.json. Missing files fall back to built-ins.
    #[arg(long, global = true, env = PARAM_DIR_ENV)]
    pub param_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Absolute risk for one woman.
    Assess(AssessArgs),
    /// Observed against expected events for a follow-up cohort.
    Calibrate(CalibrateArgs),
    /// Observed and expected curves over follow-up time.
    Curves(CurvesArgs),
    /// Generate a synthetic cohort.
    Simulate(SimulateArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, clap::Args)]
pub struct AssessArgs {
    /// Full request JSON (`age`, `horizons`, `profile`, `pedigree`); other inputs are ignored.
    #[arg(long, conflicts_with_all = ["profile", "pedigree", "age"])]
    pub request: Option<PathBuf>,
    /// Risk factor JSON.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Pedigree as CSV text, or JSON list of members if the name ends in `.json`.
    #[arg(long)]
    pub pedigree: Option<PathBuf>,
    /// Current age.
    #[arg(long, required_unless_present = "request")]
    pub age: Option<f64>,
    /// Extra horizons in years.
    #[arg(long, value_delimiter = ',')]
    pub horizons: Vec<f64>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupKind {
    Deciles,
    Cutpoints,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Table,
    Csv,
}

#[derive(Debug, clap::Args)]
pub struct CohortArgs {
    /// Cohort CSV.
    #[arg(long)]
    pub cohort: PathBuf,
    /// Hazard curves CSV; defaults to `<cohort stem>.curves.csv` beside the cohort when
    /// that file exists.
    #[arg(long)]
    pub curves: Option<PathBuf>,
    /// Base directory for `profile` entries; defaults to the cohort's directory.
    #[arg(long)]
    pub profiles_dir: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub input: CohortArgs,
    #[arg(long, value_enum, default_value = "cutpoints")]
    pub groups: GroupKind,
    /// 10-year risk cut points for `--groups cutpoints`.
    #[arg(long, value_delimiter = ',', default_values_t = [0.02, 0.03, 0.05, 0.08])]
    pub cuts: Vec<f64>,
    /// Expected-count methods: hazard, cif-fixed, cif-deterministic, cif-stochastic,
    /// biased-sum, biased-net, fixed-exclusion.
    #[arg(long, value_delimiter = ',', default_value = "hazard")]
    pub method: Vec<String>,
    /// Horizon in years for the fixed-horizon methods.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Index of the reference group in the regression table.
    #[arg(long, default_value_t = 1)]
    pub reference: usize,
    #[arg(long, value_enum, default_value = "table")]
    pub format: ReportFormat,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CauseArg {
    Breast,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridArg {
    Events,
    Years,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LimitArg {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CurveFormat {
    Csv,
    Json,
}

#[derive(Debug, clap::Args)]
pub struct CurvesArgs {
    #[command(flatten)]
    pub input: CohortArgs,
    #[arg(long, value_enum, default_value = "breast")]
    pub cause: CauseArg,
    #[arg(long, value_enum, default_value = "events")]
    pub grid: GridArg,
    /// Survivor value used in cumulative incidence jumps.
    #[arg(long, value_enum, default_value = "left")]
    pub limit: LimitArg,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: CurveFormat,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    /// Simulation spec JSON.
    #[arg(long)]
    pub spec: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the spec's cohort size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Cohort CSV to write.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Curves CSV to write; defaults to `<output stem>.curves.csv`.
    #[arg(long)]
    pub curves_out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<RiskError> for CliError {
    fn from(e: RiskError) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

impl From<CalibError> for CliError {
    fn from(e: CalibError) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Model(e) => e.into(),
            e => CliError::Input(e.to_string()),
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("reading {}: {e}", path.display())))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_text(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| CliError::Input(format!("{}: field `{}`: {}", path.display(), e.path(), e.inner())))
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), CliError> {
    match output {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Input(format!("writing {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| CliError::Input(e.to_string()))
        }
    }
}

fn load_model(dir: Option<&Path>) -> Result<RiskModel, CliError> {
    match dir {
        Some(d) => Ok(RiskModel::from_dir(d)?),
        None => Ok(RiskModel::default()),
    }
}

/// `dir/stem.curves.csv` for `dir/stem.csv`.
pub fn sibling_curves_path(cohort: &Path) -> PathBuf {
    let stem = cohort.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    cohort.with_file_name(format!("{stem}.curves.csv"))
}

/// Parses arguments and runs the command. Output goes to the named file or stdout.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let model = || load_model(cli.param_dir.as_deref());
    match cli.command {
        Command::Assess(a) => {
            let model = model()?;
            let req = assess_request(&a)?;
            let mut text = assessment_json(&model.assess_request(&req)?);
            text.push('\n');
            emit(a.output.as_deref(), &text)
        }
        Command::Calibrate(a) => {
            let model = model()?;
            let records = load_cohort(&a.input, &model)?;
            let methods = a
                .method
                .iter()
                .map(|m| ExpectedMethod::parse(m.trim()).ok_or_else(|| CliError::Input(format!("unknown method `{m}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            let grouping = match a.groups {
                GroupKind::Deciles => Grouping::deciles(),
                GroupKind::Cutpoints => {
                    if a.cuts.windows(2).any(|w| w[1] <= w[0]) || a.cuts.is_empty() {
                        return Err(CliError::Input("cut points must be increasing".into()));
                    }
                    Grouping::CutPoints { cuts: a.cuts.clone() }
                }
            };
            if a.reference >= grouping.len() {
                return Err(CliError::Input(format!("reference group {} out of range", a.reference)));
            }
            let options = CalibrationOptions {
                grouping,
                methods,
                horizon: a.horizon,
                reference_group: a.reference,
                ..Default::default()
            };
            let report = calibrate(&records, &options)?;
            let text = match a.format {
                ReportFormat::Json => serde_json::to_string_pretty(&report).expect("serializable") + "\n",
                ReportFormat::Table => report.to_table(),
                ReportFormat::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    w.write_record(["group", "n", "observed", "expected", "oe", "oe_lo", "oe_hi"]).expect("write to memory");
                    for g in &report.groups {
                        let oe = |f: fn(&crate::calib::OeRatio) -> f64| g.oe.as_ref().map_or_else(String::new, |x| f(x).to_string());
                        w.write_record([
                            g.label.clone(),
                            g.n.to_string(),
                            g.observed.to_string(),
                            g.expected.to_string(),
                            oe(|x| x.ratio),
                            oe(|x| x.lo),
                            oe(|x| x.hi),
                        ])
                        .expect("write to memory");
                    }
                    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
                }
            };
            emit(a.output.as_deref(), &text)
        }
        Command::Curves(a) => {
            let model = model()?;
            let records = load_cohort(&a.input, &model)?;
            if !(a.level > 0.0 && a.level < 1.0) {
                return Err(CliError::Input(format!("level {} must lie in (0, 1)", a.level)));
            }
            let options = CurveOptions {
                grid: match a.grid {
                    GridArg::Events => GridSpec::EventsAndYears,
                    GridArg::Years => GridSpec::Years,
                },
                limit: match a.limit {
                    LimitArg::Left => SurvivorLimit::Left,
                    LimitArg::Right => SurvivorLimit::Right,
                },
                level: a.level,
            };
            let cause = match a.cause {
                CauseArg::Breast => Cause::Breast,
                CauseArg::Other => Cause::OtherDeath,
            };
            let set = all_curves(&records, cause, &options);
            let text = match a.format {
                CurveFormat::Csv => curves_to_csv(&set),
                CurveFormat::Json => serde_json::to_string_pretty(&set).expect("serializable") + "\n",
            };
            emit(a.output.as_deref(), &text)
        }
        Command::Simulate(a) => {
            let mut spec: SimSpec = parse_json(&a.spec)?;
            if let Some(seed) = a.seed {
                spec.seed = seed;
            }
            if let Some(n) = a.n {
                spec.n = n;
            }
            let needs_model = matches!(spec.source, crate::simcohort::HazardSource::Model { .. });
            let model = if needs_model { Some(model()?) } else { None };
            let records = Simulator::new(spec, model.as_ref())?.simulate()?;
            let (cohort, curves) = write_cohort(&records);
            let curves_path = a.curves_out.clone().unwrap_or_else(|| sibling_curves_path(&a.output));
            emit(Some(&a.output), &cohort)?;
            emit(Some(&curves_path), &curves)
        }
        Command::Serve(a) => {
            let model = Arc::new(model()?);
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Input(e.to_string()))?;
            rt.block_on(crate::api::serve(model, &a.addr)).map_err(|e| CliError::Input(format!("{}: {e}", a.addr)))
        }
    }
}

fn assess_request(a: &AssessArgs) -> Result<AssessRequest, CliError> {
    if let Some(path) = &a.request {
        return parse_json(path);
    }
    let profile = match &a.profile {
        Some(p) => parse_json(p)?,
        None => Default::default(),
    };
    let pedigree = match &a.pedigree {
        Some(p) if p.extension().is_some_and(|e| e == "json") => Some(parse_json::<Vec<PedigreeMember>>(p)?),
        Some(p) => {
            let ped = parse_pedigree(read_text(p)?.as_bytes())
                .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            Some(ped.members().to_vec())
        }
        None => None,
    };
    Ok(AssessRequest { age: a.age.expect("clap requires age"), horizons: a.horizons.clone(), profile, pedigree })
}

fn load_cohort(a: &CohortArgs, model: &RiskModel) -> Result<Vec<FollowUpRecord>, CliError> {
    let curves_path = a.curves.clone().or_else(|| Some(sibling_curves_path(&a.cohort)).filter(|p| p.exists()));
    let curves: Option<CurveSet> = match &curves_path {
        Some(p) => Some(read_curves(read_text(p)?.as_bytes()).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let base_dir = a
        .profiles_dir
        .clone()
        .unwrap_or_else(|| a.cohort.parent().map(Path::to_path_buf).unwrap_or_default());
    let profiles = ProfileSource { model, base_dir };
    let text = read_text(&a.cohort)?;
    read_cohort(text.as_bytes(), curves.as_ref(), Some(&profiles)).map_err(|e| match e {
        e if e.is_numeric() => CliError::Numeric(e.to_string()),
        e => CliError::Input(format!("{}: {e}", a.cohort.display())),
    })
}
