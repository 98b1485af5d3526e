use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sarmanov::bernoulli::theta_range_bivariate;
use sarmanov::config::{CopulaConfig, Model};
use sarmanov::kernel::{catalog_entries, CATALOG};
use sarmanov::measures::{self, AnalyticMeasures, MeasureReport};
use sarmanov::oracle::{d_increasing_oracle, MAX_ORACLE_DIM};
use sarmanov::sampler::{sample, sample_powered, SampleBatch};
use sarmanov::{Error, Interval};
use serde_json::json;
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "sarmanov", version, about = "Sarmanov copulas: validation, sampling, measures and certification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// List the kernel catalog with areas and slope bounds.
    Catalog {
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check admissibility; exit 1 when the parameters are not admissible.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Admissible parameter interval and the implied range of Spearman's rho.
    Bounds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw samples to a CSV file with a JSON metadata sidecar.
    Sample {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sample and compare empirical dependence measures with closed forms.
    Measure {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Brute-force d-increasing check on a uniform grid.
    Certify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Inadmissible(String),
    Usage(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NotAdmissible(_) | Error::NotAdmissibleForTransformed { .. } => Failure::Inadmissible(e.to_string()),
            Error::Config(_)
            | Error::UnknownKernel(_)
            | Error::ParamOutOfRange { .. }
            | Error::InvalidSpec(_)
            | Error::NotAnchored { .. }
            | Error::UnboundedDerivative { .. }
            | Error::DegenerateKernel
            | Error::NotCalibrated { .. }
            | Error::NotMonotone { .. }
            | Error::MarginsNotHalf
            | Error::DimensionTooLarge { .. }
            | Error::SubsetTooSmall { .. }
            | Error::UnboundedAtOrigin
            | Error::BatchTooSmall { .. } => Failure::Usage(e.to_string()),
            Error::NoDerivative => Failure::Internal(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Internal(e.to_string())
    }
}

type CliResult = Result<ExitCode, Failure>;

/// Plain decimal with 12 significant digits.
fn sig12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = (11 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

fn emit(out: &Option<PathBuf>, text: &str) -> std::io::Result<()> {
    match out {
        Some(path) => fs::write(path, text),
        None => std::io::stdout().write_all(text.as_bytes()),
    }
}

fn load(path: &Path) -> Result<(CopulaConfig, Vec<u8>), Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Failure::Usage(format!("config is not UTF-8: {e}")))?;
    Ok((CopulaConfig::from_json(text)?, bytes))
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

fn cmd_catalog(format: Format, out: &Option<PathBuf>) -> CliResult {
    let kernels = catalog_entries();
    let text = match format {
        Format::Csv => {
            let mut s = String::from("row,id,params,kappa,lambda_plus,lambda_minus,sign_constant\n");
            for (row, k) in CATALOG.iter().zip(&kernels) {
                let params: Vec<String> = k.params().iter().map(|(p, v)| format!("{p}={v}")).collect();
                s.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    row.row,
                    k.id(),
                    params.join(";"),
                    sig12(k.kappa()),
                    sig12(k.lambda_plus()),
                    sig12(k.lambda_minus()),
                    k.sign_constant()
                ));
            }
            s
        }
        Format::Json => {
            let rows: Vec<_> = CATALOG
                .iter()
                .zip(&kernels)
                .map(|(row, k)| {
                    json!({
                        "row": row.row,
                        "id": k.id(),
                        "formula": row.formula,
                        "params": k.params(),
                        "kappa": k.kappa(),
                        "lambda_plus": k.lambda_plus(),
                        "lambda_minus": k.lambda_minus(),
                        "sign_constant": k.sign_constant(),
                    })
                })
                .collect();
            pretty(&rows)
        }
    };
    emit(out, &text)?;
    Ok(ExitCode::SUCCESS)
}

fn verdict(admissible: bool) -> ExitCode {
    if admissible {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn cmd_validate(config: &Path, format: Format, out: &Option<PathBuf>) -> CliResult {
    let (cfg, _) = load(config)?;
    let v = cfg.validate()?;
    let text = match format {
        Format::Json => pretty(&v),
        Format::Csv => match v.certificate.as_ref().and_then(|c| c.pmf_csv()) {
            Some(csv) => csv,
            None => pretty(&v),
        },
    };
    emit(out, &text)?;
    if !v.admissible {
        if let Some(iv) = v.a_interval {
            eprintln!("not admissible: a must lie in [{}, {}]", iv.lo, iv.hi);
        } else {
            eprintln!("not admissible");
        }
    }
    Ok(verdict(v.admissible))
}

fn cmd_bounds(config: &Path, out: &Option<PathBuf>) -> CliResult {
    let (cfg, _) = load(config)?;
    let global = measures::rho_global_bounds();
    let report = if cfg.power.is_some() {
        let v = cfg.validate()?;
        json!({ "d": 2, "powered": v.powered, "global_rho_s": global })
    } else if cfg.dimension == 2 {
        let pairs = cfg.pairs()?;
        let v = cfg.validate()?;
        let theta = theta_range_bivariate(pairs[0].pi(), pairs[1].pi());
        let rho = |t: f64| 12.0 * t * pairs[0].kappa() * pairs[1].kappa();
        let (r1, r2) = (rho(theta.lo), rho(theta.hi));
        let rho_s = Interval::new(r1.min(r2), r1.max(r2));
        json!({
            "d": 2,
            "a_interval": v.a_interval,
            "theta_interval": theta,
            "rho_s": rho_s,
            "kendall_tau": Interval::new(2.0 * rho_s.lo / 3.0, 2.0 * rho_s.hi / 3.0),
            "global_rho_s": global,
        })
    } else {
        let v = cfg.validate()?;
        let orthant = match cfg.build() {
            Ok(Model::Sarmanov(c)) => measures::orthant_rho(&c).ok(),
            _ => None,
        };
        json!({
            "d": cfg.dimension,
            "admissible": v.admissible,
            "rho_minus": orthant.map(|o| o.0),
            "rho_plus": orthant.map(|o| o.1),
            "global_rho_s": global,
        })
    };
    emit(out, &pretty(&report))?;
    Ok(ExitCode::SUCCESS)
}

fn draw(cfg: &CopulaConfig, n: Option<usize>, seed: Option<u64>) -> Result<(Model, SampleBatch), Failure> {
    let n = n.or(cfg.n).ok_or_else(|| Failure::Usage("sample size missing: pass --n or set `n`".into()))?;
    let seed = seed.or(cfg.seed).unwrap_or(0);
    let model = cfg.build()?;
    let batch = match &model {
        Model::Sarmanov(c) => sample(c, n, seed)?,
        Model::Powered(p) => sample_powered(p, n, seed)?,
    };
    Ok((model, batch))
}

fn cmd_sample(config: &Path, out: &Path, n: Option<usize>, seed: Option<u64>) -> CliResult {
    let (cfg, bytes) = load(config)?;
    let (_, batch) = draw(&cfg, n, seed)?;
    let file = fs::File::create(out)?;
    batch.write_csv(std::io::BufWriter::new(file))?;
    let meta = json!({
        "config_sha256": hex::encode(Sha256::digest(&bytes)),
        "copula_id": batch.copula_id,
        "d": batch.d,
        "n": batch.n,
        "seed": batch.seed,
    });
    let mut sidecar = out.as_os_str().to_owned();
    sidecar.push(".meta.json");
    fs::write(PathBuf::from(sidecar), pretty(&meta))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_measure(config: &Path, n: Option<usize>, seed: Option<u64>, format: Format, out: &Option<PathBuf>) -> CliResult {
    let (cfg, _) = load(config)?;
    let (model, batch) = draw(&cfg, n, seed)?;
    let analytic = match &model {
        Model::Sarmanov(c) => AnalyticMeasures::of(c),
        Model::Powered(_) => AnalyticMeasures::none(),
    };
    let report = MeasureReport { analytic, empirical: measures::empirical_measures(&batch)? };
    let text = match format {
        Format::Json => pretty(&report),
        Format::Csv => {
            let e = &report.empirical;
            let a = &report.analytic;
            let rows = [
                ("spearman", a.spearman, e.spearman),
                ("kendall", a.kendall, e.kendall),
                ("rho_plus", a.rho_plus, e.rho_plus),
                ("rho_minus", a.rho_minus, e.rho_minus),
            ];
            let mut s = String::from("measure,analytic,empirical,se,z\n");
            for (name, exact, est) in rows {
                let (exact_s, z) = match exact {
                    Some(x) => (format!("{x:.12}"), format!("{:.3}", est.z_score(x))),
                    None => (String::new(), String::new()),
                };
                s.push_str(&format!("{name},{exact_s},{:.12},{:.3e},{z}\n", est.value, est.se));
            }
            s
        }
    };
    emit(out, &text)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_certify(config: &Path, grid: Option<usize>, format: Format, out: &Option<PathBuf>) -> CliResult {
    let (cfg, _) = load(config)?;
    let d = cfg.dimension;
    if d > MAX_ORACLE_DIM {
        return Err(Failure::Usage(format!("the oracle supports d <= {MAX_ORACLE_DIM}")));
    }
    let grid = grid.unwrap_or(match d {
        2 => 50,
        3 => 20,
        _ => 10,
    });
    if grid == 0 {
        return Err(Failure::Usage("--grid must be positive".into()));
    }
    let model = cfg.build()?;
    let report = match &model {
        Model::Sarmanov(c) => d_increasing_oracle(d, |u: &[f64]| c.cdf(u).unwrap_or(f64::NAN), grid),
        Model::Powered(p) => d_increasing_oracle(2, |u: &[f64]| p.cdf(u[0], u[1]), grid),
    };
    let text = match format {
        Format::Csv => report.to_csv(),
        Format::Json => pretty(&report),
    };
    emit(out, &text)?;
    Ok(verdict(report.passed))
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Catalog { format, out } => cmd_catalog(format, &out),
        Command::Validate { config, format, out } => cmd_validate(&config, format, &out),
        Command::Bounds { config, out } => cmd_bounds(&config, &out),
        Command::Sample { config, out, n, seed } => cmd_sample(&config, &out, n, seed),
        Command::Measure { config, n, seed, format, out } => cmd_measure(&config, n, seed, format, &out),
        Command::Certify { config, grid, format, out } => cmd_certify(&config, grid, format, &out),
    }
}

fn thread_pool() -> Result<rayon::ThreadPool, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("SARMANOV_THREADS") {
        let n: usize = v.parse().map_err(|_| Failure::Usage(format!("SARMANOV_THREADS = `{v}` is not a count")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Failure::Internal(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = thread_pool().and_then(|pool| pool.install(|| run(cli)));
    match outcome {
        Ok(code) => code,
        Err(Failure::Inadmissible(msg)) => {
            eprintln!("not admissible: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(3)
        }
    }
}
