use adflora_cli::{cmd_compare, cmd_run, cmd_sweep_t, cmd_verify};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "adflora",
    about = "Decentralized federated LoRA simulator: runs, sweeps, comparisons, and the verification battery",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. --set run.rounds=10 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output root (beats ADFLORA_OUT and the config's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment once per seed.
    Run(Common),
    /// Sweep the switching interval T and tabulate final metrics.
    SweepT {
        #[command(flatten)]
        common: Common,
        /// Comma-separated interval values.
        #[arg(long = "t-values", value_delimiter = ',', default_value = "1,5,10,20")]
        t_values: Vec<usize>,
    },
    /// Run several methods on the identical task/seeds/topology.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated method names.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "adf,rolora_dfl,ffa,naive"
        )]
        methods: Vec<String>,
    },
    /// Run the named check battery and report pass/fail per check.
    Verify {
        /// Optional config; only its first seed feeds the battery.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run(c) => cmd_run(&c.config, &c.overrides, c.out.as_deref()),
        Command::SweepT { common, t_values } => cmd_sweep_t(
            &common.config,
            &common.overrides,
            &t_values,
            common.out.as_deref(),
        ),
        Command::Compare { common, methods } => cmd_compare(
            &common.config,
            &common.overrides,
            &methods,
            common.out.as_deref(),
        ),
        Command::Verify { config, overrides } => cmd_verify(config.as_deref(), &overrides),
    };
    std::process::exit(code);
}
