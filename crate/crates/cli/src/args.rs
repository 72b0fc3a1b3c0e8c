use clap::{Parser, ValueEnum};
use std::path::PathBuf;
use weylab::config::{parse_range, parse_weights, ExperimentConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    WeylVerify,
    Statphase,
    BlowupDemo,
    SpectrumDump,
    ReducedVolume,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::WeylVerify => "weyl-verify",
            Command::Statphase => "statphase",
            Command::BlowupDemo => "blowup-demo",
            Command::SpectrumDump => "spectrum-dump",
            Command::ReducedVolume => "reduced-volume",
        }
    }
}

/// Numerical experiments on equivariant Weyl laws and oscillatory integrals.
#[derive(Debug, Parser)]
#[command(name = "weylab", version)]
pub struct Cli {
    /// Experiment to run. May be omitted when --config names one.
    #[arg(value_enum)]
    pub command: Option<Command>,
    /// Builtin phase name or phase TOML file (statphase, blowup-demo).
    pub phase: Option<String>,
    /// TOML experiment file; flags given on the command line override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Action key, e.g. torus2-rot1, s2-rot, s3-hopf, lens-p3-right.
    #[arg(long)]
    pub action: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cap on worker threads.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Character weights, comma separated. Torus2 actions take pairs a,b.
    #[arg(long, allow_hyphen_values = true)]
    pub weights: Option<String>,
    #[arg(long)]
    pub lambda_max: Option<f64>,
    /// Frequency range "a..b" (the small parameter for blowup-demo).
    #[arg(long)]
    pub mu: Option<String>,
    /// Number of geometric grid points in the --mu range.
    #[arg(long)]
    pub points: Option<usize>,
    /// Monte Carlo samples for reduced-volume.
    #[arg(long)]
    pub samples: Option<u64>,
    /// Fit model for blowup-demo as "alpha:k,...", one term h^alpha log^k(1/h) each.
    #[arg(long)]
    pub terms: Option<String>,
}

impl Cli {
    /// Merges the config file (if any) with the command-line flags.
    pub fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
                ExperimentConfig::from_toml_str(&text)?
            }
            None => {
                let Some(cmd) = self.command else {
                    anyhow::bail!("no command given; expected one of {}", weylab::config::COMMANDS.join(", "));
                };
                ExperimentConfig::new(cmd.name())
            }
        };
        if let Some(cmd) = self.command {
            cfg.command = cmd.name().to_string();
        }
        if let Some(p) = &self.phase {
            cfg.oscillatory.phase = Some(p.clone());
        }
        if let Some(a) = &self.action {
            cfg.action = Some(a.clone());
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.threads {
            cfg.threads = Some(t);
        }
        if let Some(o) = &self.out_dir {
            cfg.out_dir = o.clone();
        }
        if let Some(t) = self.tolerance {
            cfg.tolerance = Some(t);
        }
        if let Some(w) = &self.weights {
            cfg.weyl.weights = parse_weights(w)?;
        }
        if let Some(l) = self.lambda_max {
            cfg.weyl.lambda_max = l;
        }
        if let Some(m) = &self.mu {
            cfg.oscillatory.mu = Some(parse_range(m)?);
        }
        if let Some(p) = self.points {
            cfg.oscillatory.points = p;
        }
        if let Some(s) = self.samples {
            cfg.volume.samples = s;
        }
        if let Some(t) = &self.terms {
            cfg.oscillatory.terms = Some(t.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
