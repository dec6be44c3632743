use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use sbfe::adaptive::{adaptive_expected_cost, ratio_prefix_choice, AdaptiveState};
use sbfe::dominance::{dominates, left_dominates, right_dominates, Epsilon, IndexSet};
use sbfe::eval::{cost_tail, evaluate, simulate, FixedOrder, Offset};
use sbfe::gapbench::{gap_table, write_csv};
use sbfe::instance::{invert_permutation, InstanceFile};
use sbfe::oracle::{opt_adaptive_dp, opt_na_bruteforce};
use sbfe::ptas::{
    certify_bounded, extreme_probability_order, ptas, BoundedSpec, PtasConfig, PtasMode, PtasOutcome,
    DEFAULT_BUDGET,
};
use sbfe::{Error, Instance, PartialPolicy};

const SCHEMA_VERSION: u32 = 1;
const BUDGET_ENV: &str = "SBFE_BUDGET";

#[derive(Parser, Debug)]
#[command(name = "sbfe", version, about = "Stochastic evaluation of k-of-n functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact cost distribution of a fixed test order.
    Eval {
        #[arg(long)]
        instance: PathBuf,
        /// Comma-separated 1-based test order; defaults to input order.
        #[arg(long)]
        order: Option<String>,
        /// Also run a Monte Carlo estimate with this many trials.
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Best non-adaptive order.
    OptNa {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = NaMethod::Brute)]
        method: NaMethod,
        /// Target accuracy of the approximation scheme.
        #[arg(long, default_value_t = 0.5)]
        eps: f64,
        /// Internal granularity, as `1/N` or a decimal with integer reciprocal.
        #[arg(long)]
        eps_int: Option<String>,
        #[arg(long)]
        budget: Option<u64>,
        /// Smallest `a` handled by buckets instead of full enumeration.
        #[arg(long)]
        case_override: Option<u64>,
        /// Reference order for guided mode (1-based); defaults to most
        /// predictable variables first.
        #[arg(long)]
        reference: Option<String>,
    },
    /// Optimal adaptive policy.
    OptAdaptive {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = AdaptiveMethod::Ratio)]
        method: AdaptiveMethod,
    },
    /// Adaptivity-gap table on the lower-bound family.
    Gap {
        /// Comma-separated values of t.
        #[arg(long)]
        t_list: String,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Rebuild a bounded order from a reference and check its tail.
    Certify {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        a: u64,
        #[arg(long = "a-prime")]
        a_prime: u64,
        #[arg(long)]
        eps_int: String,
        /// 1-based reference order; defaults to most predictable first.
        #[arg(long)]
        reference: Option<String>,
    },
    /// Two-sided dominance of index sets (1-based positions in probability order).
    Dominate {
        #[arg(long)]
        v: String,
        #[arg(long)]
        vstar: String,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
enum NaMethod {
    Brute,
    Ptas,
    PtasGuided,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum AdaptiveMethod {
    Ratio,
    Dp,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
enum Format {
    Json,
    Csv,
}

#[derive(Debug)]
enum CliError {
    Lib(Error),
    Io(String),
    Usage(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Lib(e) if e.is_budget() => 3,
            _ => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Io(m) | CliError::Usage(m) => f.write_str(m),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Resolved settings echoed in every report.
#[derive(Debug, Default, Serialize)]
struct RunConfig {
    command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    instance_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    order: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps_target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps_int: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    budget: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    case_override: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    a: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    a_prime: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_list: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output_format: Option<Format>,
}

/// Instance sorted by probability, with the map back to input indices.
struct Loaded {
    inst: Instance,
    /// `index_map[sorted] = original`.
    index_map: Vec<usize>,
    /// `position[original] = sorted`.
    position: Vec<usize>,
}

impl Loaded {
    fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read instance file {}: {e}", path.display())))?;
        let (inst, index_map) = InstanceFile::from_json(&text)?.normalize()?;
        let position = invert_permutation(&index_map);
        Ok(Self {
            inst,
            index_map,
            position,
        })
    }

    /// Parses a 1-based order in input indices into sorted indices.
    fn order(&self, text: &str) -> CliResult<PartialPolicy> {
        let raw = parse_list(text)?;
        let n = self.inst.n();
        if let Some(&bad) = raw.iter().find(|&&i| i == 0 || i > n) {
            return Err(CliError::Lib(Error::InvalidPolicy(format!(
                "index {bad} is outside [1, {n}]"
            ))));
        }
        Ok(PartialPolicy::new(raw.iter().map(|&i| self.position[i - 1]).collect())?)
    }

    /// 1-based input indices of a sorted-index order.
    fn external(&self, pi: &PartialPolicy) -> Vec<usize> {
        pi.map_indices(&self.index_map).to_one_based()
    }
}

fn parse_list(text: &str) -> CliResult<Vec<usize>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| CliError::Usage(format!("'{s}' is not a nonnegative integer")))
        })
        .collect()
}

fn parse_eps_int(text: &str) -> CliResult<Epsilon> {
    let text = text.trim();
    if let Some(den) = text.strip_prefix("1/") {
        let inv = den
            .trim()
            .parse::<u32>()
            .map_err(|_| CliError::Usage(format!("'{text}' is not of the form 1/N")))?;
        return Ok(Epsilon::from_inverse(inv)?);
    }
    let v = text
        .parse::<f64>()
        .map_err(|_| CliError::Usage(format!("'{text}' is neither 1/N nor a number")))?;
    Ok(Epsilon::from_value(v)?)
}

fn resolve_budget(flag: Option<u64>) -> CliResult<u64> {
    if let Some(b) = flag {
        return Ok(b);
    }
    match std::env::var(BUDGET_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{BUDGET_ENV}='{v}' is not a nonnegative integer"))),
        Err(_) => Ok(DEFAULT_BUDGET),
    }
}

fn report(config: &RunConfig, result: serde_json::Value) -> serde_json::Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "config": config,
        "result": result,
    })
}

fn ptas_summary(loaded: &Loaded, out: &PtasOutcome) -> serde_json::Value {
    let shifts: Vec<_> = out
        .shifts
        .iter()
        .map(|s| {
            let levels: Vec<_> = s
                .levels
                .iter()
                .map(|l| {
                    json!({
                        "a": l.a,
                        "a_prime": l.a_prime,
                        "case": l.case,
                        "score": l.score,
                        "certified": l.certification.as_ref().map(|c| c.passed),
                    })
                })
                .collect();
            json!({
                "ell": s.ell,
                "thresholds": s.thresholds,
                "expected_cost": s.expected_cost,
                "score_sum": s.score_sum,
                "levels": levels,
            })
        })
        .collect();
    json!({
        "policy": loaded.external(&out.policy),
        "expected_cost": out.expected_cost,
        "eps_int": out.eps_int.to_string(),
        "best_shift": out.best_shift,
        "shifts": shifts,
        "chain": out.chain,
    })
}

fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Eval {
            instance,
            order,
            trials,
            seed,
        } => {
            let loaded = Loaded::read(&instance)?;
            let n = loaded.inst.n();
            let pi = match &order {
                Some(o) => loaded.order(o)?,
                None => PartialPolicy::new(loaded.position.clone())?,
            };
            let cost = evaluate(&loaded.inst, &pi, Offset::NONE)?;
            let tail = cost_tail(&loaded.inst, &pi, Offset::NONE)?;
            let simulation = match trials {
                Some(t) => Some(simulate(&loaded.inst, &mut FixedOrder(&pi), t, seed)?),
                None => None,
            };
            let config = RunConfig {
                command: "eval",
                instance_path: Some(instance.display().to_string()),
                order: Some(loaded.external(&pi)),
                seed: trials.map(|_| seed),
                trials,
                ..Default::default()
            };
            let result = json!({
                "n": n,
                "k": loaded.inst.k(),
                "expected": cost.expected,
                "undetermined_probability": cost.undetermined,
                "tail": tail.tail,
                "simulation": simulation,
            });
            Ok(to_json(&report(&config, result)))
        }
        Command::OptNa {
            instance,
            method,
            eps,
            eps_int,
            budget,
            case_override,
            reference,
        } => {
            let loaded = Loaded::read(&instance)?;
            let mut config = RunConfig {
                command: "opt-na",
                instance_path: Some(instance.display().to_string()),
                method: Some(format!("{method:?}").to_lowercase()),
                ..Default::default()
            };
            let result = match method {
                NaMethod::Brute => {
                    let r = opt_na_bruteforce(&loaded.inst)?;
                    json!({
                        "policy": loaded.external(&r.best_policy),
                        "expected_cost": r.best_cost,
                    })
                }
                NaMethod::Ptas | NaMethod::PtasGuided => {
                    let mut pc = PtasConfig::new(eps);
                    pc.eps_int = eps_int.as_deref().map(parse_eps_int).transpose()?;
                    pc.budget = resolve_budget(budget)?;
                    pc.case_threshold = case_override;
                    let resolved = pc.resolved_eps()?;
                    config.eps_target = Some(eps);
                    config.eps_int = Some(resolved.to_string());
                    config.budget = Some(pc.budget);
                    config.case_override = case_override;
                    let mode = if method == NaMethod::PtasGuided {
                        let r = match &reference {
                            Some(text) => loaded.order(text)?,
                            None => extreme_probability_order(&loaded.inst),
                        };
                        config.reference = Some(loaded.external(&r));
                        PtasMode::Guided(r)
                    } else {
                        PtasMode::Enumerate
                    };
                    let out = ptas(&loaded.inst, &pc, &mode)?;
                    ptas_summary(&loaded, &out)
                }
            };
            Ok(to_json(&report(&config, result)))
        }
        Command::OptAdaptive { instance, method } => {
            let loaded = Loaded::read(&instance)?;
            let config = RunConfig {
                command: "opt-adaptive",
                instance_path: Some(instance.display().to_string()),
                method: Some(format!("{method:?}").to_lowercase()),
                ..Default::default()
            };
            let result = match method {
                AdaptiveMethod::Ratio => {
                    let first = ratio_prefix_choice(&loaded.inst, &AdaptiveState::initial(&loaded.inst))?;
                    json!({
                        "expected_cost": adaptive_expected_cost(&loaded.inst)?,
                        "first_test": loaded.index_map[first] + 1,
                    })
                }
                AdaptiveMethod::Dp => json!({ "expected_cost": opt_adaptive_dp(&loaded.inst)? }),
            };
            Ok(to_json(&report(&config, result)))
        }
        Command::Gap {
            t_list,
            m,
            eps,
            format,
        } => {
            let ts = parse_list(&t_list)?;
            if ts.is_empty() {
                return Err(CliError::Usage("--t-list is empty".into()));
            }
            let records = gap_table(&ts, m, eps)?;
            match format {
                Format::Csv => {
                    let mut buf = Vec::new();
                    write_csv(&records, &mut buf)?;
                    String::from_utf8(buf).map_err(|e| CliError::Io(e.to_string()))
                }
                Format::Json => {
                    let config = RunConfig {
                        command: "gap",
                        t_list: Some(ts),
                        m: Some(m),
                        eps: Some(eps),
                        output_format: Some(format),
                        ..Default::default()
                    };
                    Ok(to_json(&report(&config, json!({ "records": records }))))
                }
            }
        }
        Command::Certify {
            instance,
            a,
            a_prime,
            eps_int,
            reference,
        } => {
            let loaded = Loaded::read(&instance)?;
            let eps = parse_eps_int(&eps_int)?;
            let r = match &reference {
                Some(text) => loaded.order(text)?,
                None => extreme_probability_order(&loaded.inst),
            };
            let (pi, rep) = certify_bounded(&loaded.inst, &r, &BoundedSpec::new(a, a_prime, eps))?;
            let config = RunConfig {
                command: "certify",
                instance_path: Some(instance.display().to_string()),
                eps_int: Some(eps.to_string()),
                reference: Some(loaded.external(&r)),
                a: Some(a),
                a_prime: Some(a_prime),
                ..Default::default()
            };
            let result = json!({
                "policy": loaded.external(&pi),
                "passed": rep.passed,
                "case": rep.case,
                "bucket_sizes": rep.sizes,
                "rows": rep.rows,
            });
            Ok(to_json(&report(&config, result)))
        }
        Command::Dominate { v, vstar } => {
            let v = IndexSet::from_one_based(&parse_list(&v)?)?;
            let vstar = IndexSet::from_one_based(&parse_list(&vstar)?)?;
            let config = RunConfig {
                command: "dominate",
                ..Default::default()
            };
            let result = json!({
                "v": v.to_one_based(),
                "vstar": vstar.to_one_based(),
                "dominates": dominates(&v, &vstar),
                "left": left_dominates(&v, &vstar),
                "right": right_dominates(&v, &vstar),
            });
            Ok(to_json(&report(&config, result)))
        }
    }
}

fn to_json(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(out.as_bytes()).is_err() {
                return ExitCode::from(2);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
