use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mapdesign::io::{
    check_stage, design_flags, design_stage, end_to_end, map_stage, meta_stage, power_stage,
    write_design_outputs, write_manifest, write_sample_sizes, DesignConfig, OutputDir, PowerRow,
    PriorChoice, RunConfig, SampleSizeRow, OUTPUT_ENV,
};
use mapdesign::map::PriorSpecFile;
use mapdesign::Error;

#[derive(Parser, Debug)]
#[command(
    name = "mapdesign",
    version,
    about = "MAP priors and design analysis for two-group experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Historical data CSV; overrides the configured path.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Log-transform individual-level values on ingestion.
    #[arg(long)]
    log_transform: bool,
    /// Output directory.
    #[arg(long, short, env = OUTPUT_ENV)]
    out: Option<PathBuf>,
    /// Cap on worker threads for the design grid.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Priors for the meta-analysis.
    #[arg(long, value_enum)]
    priors: Option<Priors>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Priors {
    Manual,
    DefaultWide,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Designs {
    /// Use the grid from the config.
    Config,
    /// Use the built-in reference grid.
    Reference,
    /// Skip the design analysis.
    None,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the hierarchical model to the historical data.
    MetaFit(Common),
    /// Meta-analysis followed by parametric MAP prior fits and ESS.
    MapPrior(Common),
    /// Prior and posterior predictive checks.
    Check(Common),
    /// Simulation-based design analysis.
    DesignRun {
        #[command(flatten)]
        common: Common,
        /// Prior spec from `map-prior`; derived from the data when absent.
        #[arg(long)]
        prior_spec: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "config")]
        designs: Designs,
        /// Replicates per design; overrides the config.
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Classical Welch sample sizes.
    PowerCalc {
        #[arg(long, short, env = OUTPUT_ENV)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 0.8)]
        power: f64,
        /// Setting as `delta,sigma_c,sigma_e,alloc`; repeatable. The reference
        /// table when absent.
        #[arg(long = "row", value_parser = parse_row)]
        rows: Vec<PowerRow>,
    },
    /// Full pipeline: meta-analysis, checks, MAP prior, designs and power table.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "config")]
        designs: Designs,
    },
}

fn parse_row(s: &str) -> Result<PowerRow, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [delta_rel, sigma_c, sigma_e, alloc] => Ok(PowerRow { delta_rel, sigma_c, sigma_e, alloc }),
        _ => Err("expected delta,sigma_c,sigma_e,alloc".into()),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 4,
        Error::Csv(c) if c.is_io_error() => 4,
        Error::Json(j) if j.is_io() => 4,
        Error::NoConvergence(_) => 3,
        _ => 2,
    }
}

fn config(c: &Common) -> mapdesign::Result<RunConfig> {
    let mut cfg = match (&c.config, &c.data) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(data)) => RunConfig::for_data(data),
        (None, None) => return Err(Error::Config("either --config or --data is required".into())),
    };
    if let Some(data) = &c.data {
        cfg.data.path = data.clone();
    }
    cfg.data.log_transform |= c.log_transform;
    if let Some(out) = &c.out {
        cfg.output_dir = Some(out.clone());
    }
    if c.workers.is_some() {
        cfg.workers = c.workers;
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(p) = c.priors {
        cfg.meta.priors = match p {
            Priors::Manual => PriorChoice::Manual,
            Priors::DefaultWide => PriorChoice::DefaultWide,
        };
    }
    Ok(cfg)
}

fn apply_designs(cfg: &mut RunConfig, designs: Designs, replicates: Option<usize>) {
    match designs {
        Designs::None => cfg.design = None,
        Designs::Reference => {
            let r = replicates.or(cfg.design.as_ref().map(|d| d.replicates)).unwrap_or(2000);
            cfg.design = Some(DesignConfig::reference(r));
        }
        Designs::Config => {}
    }
    if let (Some(r), Some(d)) = (replicates, cfg.design.as_mut()) {
        d.replicates = r;
    }
}

fn print_sample_sizes(rows: &[SampleSizeRow]) {
    println!("setting  delta  sigma_C  sigma_E  alloc   n_C   n_E   power");
    for r in rows {
        println!(
            "{:>7}  {:>5}  {:>7}  {:>7}  {:>5}  {:>4}  {:>4}  {:.4}",
            r.setting, r.delta_rel, r.sigma_c, r.sigma_e, r.alloc, r.n_c, r.n_e, r.achieved_power
        );
    }
}

fn report_flags(flags: &[String]) -> ExitCode {
    for f in flags {
        eprintln!("warning: {f}");
    }
    if flags.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    }
}

fn run(cli: Cli) -> mapdesign::Result<ExitCode> {
    match cli.command {
        Command::PowerCalc { out, alpha, power, rows } => {
            let mut cfg = RunConfig::for_data("");
            cfg.power.alpha = alpha;
            cfg.power.power = power;
            if !rows.is_empty() {
                cfg.power.rows = rows;
            }
            for row in &cfg.power.rows {
                cfg.power.request(row).validate()?;
            }
            let table = power_stage(&cfg)?;
            print_sample_sizes(&table);
            if let Some(dir) = out {
                write_sample_sizes(&table, &mut OutputDir::create(dir)?)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::MetaFit(c) => {
            let cfg = config(&c)?;
            cfg.validate()?;
            let mut out = OutputDir::create(cfg.resolved_output_dir())?;
            let meta = meta_stage(&cfg)?;
            meta.write(&mut out)?;
            for s in &meta.summary {
                println!(
                    "{:<12} mean {:>7.3}  95% [{:>7.3}, {:>7.3}]",
                    s.parameter, s.mean, s.lower, s.upper
                );
            }
            let flags = meta.flags();
            write_manifest(&cfg, &mut out, flags.clone())?;
            Ok(report_flags(&flags))
        }
        Command::MapPrior(c) => {
            let cfg = config(&c)?;
            cfg.validate()?;
            let mut out = OutputDir::create(cfg.resolved_output_dir())?;
            let meta = meta_stage(&cfg)?;
            meta.write(&mut out)?;
            let map = map_stage(&cfg, &meta.fit.draws)?;
            map.write(&mut out)?;
            println!("theta_C prior: {:?}", map.prior.theta_c.distribution);
            println!("log sigma_C prior: {:?}", map.prior.log_sigma_c.distribution);
            println!("ESS: {:.2} (rounded {})", map.prior.ess.n_eff, map.prior.ess.n_eff_rounded);
            let flags = meta.flags();
            write_manifest(&cfg, &mut out, flags.clone())?;
            Ok(report_flags(&flags))
        }
        Command::Check(c) => {
            let cfg = config(&c)?;
            cfg.validate()?;
            let mut out = OutputDir::create(cfg.resolved_output_dir())?;
            let meta = meta_stage(&cfg)?;
            let checks = check_stage(&cfg, &meta.data, &meta.fit.draws)?;
            checks.write(&mut out)?;
            for (source, band) in &checks.bands {
                let support = band
                    .support(0)
                    .map(|(a, b)| format!("[{a:.1}, {b:.1}]"))
                    .unwrap_or_else(|| "-".into());
                println!("{source:<22} 10-90% band support {support}");
            }
            let flags = meta.flags();
            write_manifest(&cfg, &mut out, flags.clone())?;
            Ok(report_flags(&flags))
        }
        Command::DesignRun { common, prior_spec, designs, replicates } => {
            let mut cfg = config(&common)?;
            if designs == Designs::None {
                return Err(Error::Config("design-run needs a design grid".into()));
            }
            apply_designs(&mut cfg, designs, replicates);
            if cfg.design.is_none() {
                return Err(Error::Config(
                    "no [design] section in the config; use --designs reference".into(),
                ));
            }
            cfg.validate()?;
            let mut out = OutputDir::create(cfg.resolved_output_dir())?;
            let (prior, mut flags) = match prior_spec {
                Some(path) => (PriorSpecFile::read(path)?, vec![]),
                None => {
                    let meta = meta_stage(&cfg)?;
                    (map_stage(&cfg, &meta.fit.draws)?.prior, meta.flags())
                }
            };
            let results = design_stage(&cfg, &prior)?;
            write_design_outputs(&results, &mut out)?;
            for r in &results {
                let m = &r.metrics;
                println!(
                    "design {:>3}: n=({},{}) delta {:>4} ratio {:>4}  welch {}  hdi {}  bf>3 {}",
                    r.design_id,
                    r.design.n_e,
                    r.design.n_c,
                    r.design.delta,
                    r.design.sigma_ratio,
                    rate(m, mapdesign::design::Rule::Welch),
                    rate(m, mapdesign::design::Rule::Hdi),
                    rate(m, mapdesign::design::Rule::BayesFactor),
                );
            }
            flags.extend(design_flags(&results));
            write_manifest(&cfg, &mut out, flags.clone())?;
            Ok(report_flags(&flags))
        }
        Command::Run { common, designs } => {
            let mut cfg = config(&common)?;
            apply_designs(&mut cfg, designs, None);
            let bundle = end_to_end(&cfg)?;
            println!("report written to {}", bundle.dir.display());
            print_sample_sizes(&bundle.sample_sizes);
            Ok(report_flags(bundle.flags()))
        }
    }
}

fn rate(m: &mapdesign::design::DesignMetrics, rule: mapdesign::design::Rule) -> String {
    format!("{:.3}", m.rule(rule).rate)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
