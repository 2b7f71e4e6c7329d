//! Command-line front end for `gotmix`.
//!
//! [`dispatch`] parses an argument list (without the program name), runs the
//! requested subcommand and returns the process exit code: 0 on success,
//! 1 on a usage error, 2 on a runtime error.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use gotmix::distances::{got, w1_discrete, GotParams};
use gotmix::error::Error;
use gotmix::expfam::FamilySpec;
use gotmix::harness::{fit_slope, parse_family, rates_csv, run_rates, ExperimentConfig};
use gotmix::lowerbound::{lecam_from_tv, moment_pair, pair_tv};
use gotmix::measures::{parse_measure, sample, SampleHistogram, Seed};
use gotmix::npmle::{solve, SolverConfig};
use gotmix::polyapprox::{
    certify_got, chebyshev_approx, convolve_gauss, smoothing_approx_bound, sup_error,
    LipschitzFn, DEFAULT_C1,
};

#[derive(Debug, Parser)]
#[command(
    name = "gotmix",
    version,
    about = "Mixing-distribution estimation for discrete exponential families"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a Monte Carlo rate experiment and write one CSV row per replication
    Rates {
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        /// Overrides the config's output path; `-` writes to stdout
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
    /// Fit the slope of log(median column) against log n in a rates CSV
    Slope {
        #[arg(long, value_name = "FILE")]
        csv: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        column: Vec<String>,
    },
    /// Polynomial approximation error of a smoothed sawtooth as the degree grows
    ApproxSweep {
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        /// Half-width of the symmetric approximation interval
        #[arg(long, default_value_t = 1.0)]
        half_width: f64,
        #[arg(long, default_value_t = 1)]
        k_min: usize,
        #[arg(long, default_value_t = 20)]
        k_max: usize,
        /// Sawtooth breakpoints (comma separated); slopes alternate ±1
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true,
              default_value = "-0.8,-0.4,0,0.4,0.8")]
        breakpoints: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_C1)]
        c1: f64,
        #[arg(long, default_value_t = 100_001)]
        grid: usize,
    },
    /// Two-point lower bound from a moment-matched pair
    Lowerbound {
        #[command(flatten)]
        family: FamilyArgs,
        /// Support length of the pair; defaults to theta_star / 4
        #[arg(long = "M", value_name = "M")]
        scale: Option<f64>,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Fit the NPMLE to a histogram and report the smoothed-distance certificate
    Certify {
        #[command(flatten)]
        family: FamilyArgs,
        /// Histogram CSV with header `x,count`
        #[arg(long, value_name = "FILE")]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        sigma: Vec<f64>,
        /// Degree; defaults to max(1, floor(ln n))
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = DEFAULT_C1)]
        c1: f64,
    },
    /// W1 and smoothed W1 between two discrete measures
    Distance {
        /// Measure literal such as "(0.5, 0.3), (1.5, 0.7)"
        #[arg(long, allow_hyphen_values = true)]
        q1: String,
        #[arg(long, allow_hyphen_values = true)]
        q2: String,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        sigma: Vec<f64>,
        #[arg(long, default_value_t = GotParams::DEFAULT_TOL)]
        tol: f64,
    },
    /// Fit the NPMLE to a histogram
    Estimate {
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long, value_name = "FILE")]
        data: PathBuf,
        #[arg(long, default_value_t = SolverConfig::default().grid_size)]
        grid_size: usize,
    },
    /// Draw a histogram from a mixture
    Sample {
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long, allow_hyphen_values = true)]
        q: String,
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// The family comes either from the `[family]` section of a config file or
/// from explicit flags.
#[derive(Debug, Args)]
struct FamilyArgs {
    /// Config file whose [family] section is used
    #[arg(long, value_name = "FILE", conflicts_with_all = ["family", "theta_star", "r"])]
    config: Option<PathBuf>,
    /// poisson or negbinomial
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    theta_star: Option<f64>,
    /// Negative binomial shape
    #[arg(long)]
    r: Option<u32>,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl FamilyArgs {
    fn resolve(&self) -> Result<FamilySpec, Failure> {
        if let Some(path) = &self.config {
            return Ok(parse_family(&std::fs::read_to_string(path)?)?);
        }
        let kind = self
            .family
            .as_deref()
            .ok_or_else(|| Failure::Usage("either --config or --family is required".into()))?;
        let ts = self
            .theta_star
            .ok_or_else(|| Failure::Usage("--theta-star is required with --family".into()))?;
        match kind {
            "poisson" => Ok(FamilySpec::poisson(ts)?),
            "negbinomial" => {
                let r = self
                    .r
                    .ok_or_else(|| Failure::Usage("--r is required for negbinomial".into()))?;
                Ok(FamilySpec::negative_binomial(r, ts)?)
            }
            other => Err(Failure::Usage(format!(
                "unknown family {other:?}; expected poisson or negbinomial (custom series need --config)"
            ))),
        }
    }
}

fn read_histogram(path: &PathBuf) -> Result<SampleHistogram, Failure> {
    Ok(SampleHistogram::from_csv(&std::fs::read_to_string(path)?)?)
}

fn run(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    match cmd {
        Command::Rates { config, output } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let records = run_rates(&cfg)?;
            let csv = rates_csv(&cfg, &records);
            match output.or_else(|| cfg.output.clone()) {
                Some(p) if p.as_os_str() != "-" => {
                    std::fs::write(&p, csv)?;
                    writeln!(err, "wrote {} rows to {}", records.len(), p.display())?;
                }
                _ => out.write_all(csv.as_bytes())?,
            }
        }
        Command::Slope { csv, column } => {
            writeln!(out, "column,slope_of_log_median")?;
            for c in column {
                writeln!(out, "{c},{:.16e}", fit_slope(&csv, &c)?)?;
            }
        }
        Command::ApproxSweep { sigma, half_width, k_min, k_max, breakpoints, c1, grid } => {
            if !(sigma > 0.0 && half_width > 0.0 && c1 > 0.0) {
                return Err(Failure::Usage("sigma, half-width and c1 must be positive".into()));
            }
            if k_min > k_max {
                return Err(Failure::Usage("--k-min must not exceed --k-max".into()));
            }
            let l = LipschitzFn::sawtooth(&breakpoints, 1.0)?;
            let base = convolve_gauss(&l, sigma, 0.0);
            let f = |t: f64| convolve_gauss(&l, sigma, t) - base;
            writeln!(out, "k,sup_error,bound_A,ratio")?;
            for k in k_min.max(1)..=k_max {
                let p = chebyshev_approx(f, -half_width, half_width, k)?;
                let e = sup_error(f, &p, grid)?;
                let a = smoothing_approx_bound(k, sigma, 2.0 * half_width, c1);
                writeln!(out, "{k},{e:.16e},{a:.16e},{:.16e}", e / a)?;
            }
        }
        Command::Lowerbound { family, scale, k, n, tol } => {
            let fam = family.resolve()?;
            if n == 0 {
                return Err(Failure::Usage("--n must be positive".into()));
            }
            let pair = moment_pair(scale.unwrap_or(fam.theta_star() / 4.0), k)?;
            let tv = pair_tv(&fam, &pair, tol)?;
            writeln!(out, "M,k,matched_k,n,w1_value,tv,bound")?;
            writeln!(
                out,
                "{},{k},{},{n},{:.16e},{tv:.16e},{:.16e}",
                pair.scale,
                pair.matched_k,
                pair.w1_value,
                lecam_from_tv(pair.w1_value, tv, n)
            )?;
        }
        Command::Certify { family, data, sigma, k, delta, c1 } => {
            let fam = family.resolve()?;
            let h = read_histogram(&data)?;
            let fit = solve(&fam, &h, &SolverConfig::default())?;
            let k = k.unwrap_or_else(|| gotmix::harness::degree_schedule(1.0, h.n()));
            writeln!(out, "sigma,k,approx_term,sampling_term,fit_term,u_b,cert")?;
            for s in sigma {
                let c = certify_got(&fam, &h, &fit.q_hat, s, k, delta, c1)?;
                writeln!(
                    out,
                    "{s},{k},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                    c.approx_term,
                    c.sampling_term,
                    c.fit_term,
                    c.u_b,
                    c.total()
                )?;
            }
            writeln!(err, "q_hat = {}", fit.q_hat)?;
        }
        Command::Distance { q1, q2, sigma, tol } => {
            let a = parse_measure(&q1)?;
            let b = parse_measure(&q2)?;
            writeln!(out, "metric,sigma,value")?;
            writeln!(out, "w1,0,{:.16e}", w1_discrete(&a, &b))?;
            for s in sigma {
                writeln!(out, "got,{s},{:.16e}", got(&a, &b, GotParams::new(s, tol)?)?)?;
            }
        }
        Command::Estimate { family, data, grid_size } => {
            let fam = family.resolve()?;
            let h = read_histogram(&data)?;
            let cfg = SolverConfig { grid_size, ..SolverConfig::default() };
            let r = solve(&fam, &h, &cfg)?;
            writeln!(out, "q_hat = {}", r.q_hat)?;
            writeln!(out, "loglik = {:.16e}", r.loglik)?;
            writeln!(out, "sup_gradient = {:.16e}", r.sup_gradient)?;
            writeln!(out, "em_iters = {}", r.em_iters)?;
            writeln!(out, "converged = {}", r.converged)?;
        }
        Command::Sample { family, q, n, seed } => {
            let fam = family.resolve()?;
            let q = parse_measure(&q)?;
            let h = sample(&fam, &q, n, Seed::new(seed, 0))?;
            out.write_all(h.to_csv().as_bytes())?;
        }
    }
    Ok(())
}

/// Runs the CLI against explicit output streams.
pub fn dispatch_with<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv = std::iter::once(std::ffi::OsString::from("gotmix")).chain(args.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    1
                }
            };
        }
    };
    match run(cli.command, out, err) {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}\n\nFor more information, try '--help'.");
            1
        }
        Err(Failure::Runtime(e)) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

/// Runs the CLI on the process's standard streams.
pub fn dispatch<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    dispatch_with(args, &mut stdout.lock(), &mut stderr.lock())
}
