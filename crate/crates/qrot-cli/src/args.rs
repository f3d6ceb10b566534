use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qrot::bounds::ProtocolParams;
use qrot::owf::HashAlgorithm;
use qrot::protocol::SessionConfig;
use qrot::qsim::SourceModel;
use qrot::recon::IrBackend;

#[derive(Debug, Parser)]
#[command(name = "qrot", version, about = "Randomized oblivious transfer from conjugate coding: bounds, figures, sessions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the security bound for one parameter set.
    Bounds(BoundsArgs),
    /// Emit figure data as CSV.
    Figures(FiguresArgs),
    /// Search the smallest N_0 reaching a security target.
    Optimize(OptimizeArgs),
    /// Run simulated sessions in process.
    Simulate(SimulateArgs),
    /// Run one side of a session over TCP.
    Role(RoleArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Table1,
    Desk,
}

/// Protocol parameters; unset fields fall back to the preset.
#[derive(Clone, Debug, Default, PartialEq, Args)]
pub struct ParamArgs {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub n0: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub delta1: Option<f64>,
    #[arg(long)]
    pub delta2: Option<f64>,
    #[arg(long)]
    pub p_max: Option<f64>,
    /// Output length in bits.
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub f: Option<f64>,
    #[arg(long)]
    pub p_multi: Option<f64>,
    #[arg(long)]
    pub eps_ir: Option<f64>,
    #[arg(long)]
    pub eps_bind: Option<f64>,
}

impl ParamArgs {
    pub fn preset(&self) -> Preset {
        self.preset.unwrap_or(Preset::Table1)
    }

    pub fn params(&self) -> ProtocolParams {
        let base = match self.preset() {
            Preset::Table1 => ProtocolParams::table1(),
            Preset::Desk => SessionConfig::desk().params,
        };
        ProtocolParams {
            n0: self.n0.unwrap_or(base.n0),
            alpha: self.alpha.unwrap_or(base.alpha),
            delta1: self.delta1.unwrap_or(base.delta1),
            delta2: self.delta2.unwrap_or(base.delta2),
            p_max: self.p_max.unwrap_or(base.p_max),
            n: self.n.unwrap_or(base.n),
            f: self.f.unwrap_or(base.f),
            p_multi: self.p_multi.unwrap_or(base.p_multi),
            eps_ir: self.eps_ir.unwrap_or(base.eps_ir),
            eps_bind: self.eps_bind.unwrap_or(base.eps_bind),
        }
    }

    /// Flags that reproduce `params` exactly; floats use shortest round-trip
    /// formatting.
    pub fn to_flags(params: &ProtocolParams) -> Vec<String> {
        let p = params;
        [
            ("--n0", p.n0.to_string()),
            ("--alpha", p.alpha.to_string()),
            ("--delta1", p.delta1.to_string()),
            ("--delta2", p.delta2.to_string()),
            ("--p-max", p.p_max.to_string()),
            ("--n", p.n.to_string()),
            ("--f", p.f.to_string()),
            ("--p-multi", p.p_multi.to_string()),
            ("--eps-ir", p.eps_ir.to_string()),
            ("--eps-bind", p.eps_bind.to_string()),
        ]
        .into_iter()
        .flat_map(|(k, v)| [k.to_string(), v])
        .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum HashChoice {
    Blake3,
    Toy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BackendChoice {
    Ldpc,
    Trivial,
}

/// Session-only knobs on top of [`ParamArgs`].
#[derive(Clone, Debug, Default, Args)]
pub struct SessionArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Commitment security parameter.
    #[arg(long)]
    pub k: Option<u16>,
    /// Reconciliation tag length.
    #[arg(long)]
    pub tau: Option<u16>,
    #[arg(long, value_enum)]
    pub hash: Option<HashChoice>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendChoice>,
}

impl SessionArgs {
    pub fn config(&self) -> SessionConfig {
        let base = match self.params.preset() {
            Preset::Table1 => SessionConfig::table1(),
            Preset::Desk => SessionConfig::desk(),
        };
        SessionConfig {
            params: self.params.params(),
            k: self.k.unwrap_or(base.k),
            tau: self.tau.unwrap_or(base.tau),
            hash: match self.hash {
                Some(HashChoice::Blake3) => HashAlgorithm::Blake3,
                Some(HashChoice::Toy) => HashAlgorithm::Toy,
                None => base.hash,
            },
            backend: match self.backend {
                Some(BackendChoice::Ldpc) => IrBackend::Ldpc,
                Some(BackendChoice::Trivial) => IrBackend::Trivial,
                None => base.backend,
            },
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct SourceArgs {
    /// Error rate on matching bases.
    #[arg(long, default_value_t = 0.0)]
    pub p_err: f64,
    #[arg(long, default_value_t = 0.0)]
    pub p_double: f64,
    #[arg(long, default_value_t = 0.0)]
    pub p_loss: f64,
    #[arg(long, default_value_t = 0.0)]
    pub p_dark: f64,
}

impl SourceArgs {
    pub fn model(&self, seed: u64) -> SourceModel {
        SourceModel {
            p_err: self.p_err,
            p_double: self.p_double,
            p_loss: self.p_loss,
            p_dark: self.p_dark,
            seed,
            ..SourceModel::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Use the multi-photon corrected bound.
    #[arg(long)]
    pub experimental: bool,
    /// Charge this many extra leaked bits (the reconciliation tag).
    #[arg(long, default_value_t = 0)]
    pub tag_bits: u64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    Fig2,
    Fig3,
    Fig4,
    OtTable,
}

#[derive(Debug, Args)]
pub struct FiguresArgs {
    #[arg(value_enum)]
    pub figure: Figure,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Source characterisation for `ot-table`: CSV with columns
    /// `pump_power,coincidence_rate,qber`.
    #[arg(long)]
    pub sources: Option<PathBuf>,
    /// Grid steps per axis for the N_crit searches.
    #[arg(long)]
    pub grid_steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long, default_value_t = 1e-7)]
    pub eps_target: f64,
    #[arg(long, default_value_t = 0.0114)]
    pub p_max: f64,
    #[arg(long, default_value_t = 1.0)]
    pub f: f64,
    #[arg(long, default_value_t = 3.67e-3)]
    pub p_multi: f64,
    /// Output length in bits.
    #[arg(long, default_value_t = 128)]
    pub n: u64,
    #[arg(long, default_value_t = 2f64.powi(-32))]
    pub eps_ir: f64,
    #[arg(long, default_value_t = 2f64.powi(-32))]
    pub eps_bind: f64,
    #[arg(long, default_value_t = 10)]
    pub grid_steps: usize,
    #[arg(long)]
    pub no_refine: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub session: SessionArgs,
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, default_value_t = 100)]
    pub sessions: usize,
    /// Base seed; session `i` uses `seed + i`. `QROT_SEED` takes precedence.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RoleName {
    /// Sender; listens.
    Alice,
    /// Receiver; connects.
    Bob,
}

#[derive(Debug, Args)]
pub struct RoleArgs {
    #[arg(value_enum)]
    pub role: RoleName,
    #[command(flatten)]
    pub session: SessionArgs,
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Port to bind (alice) or connect to (bob); 0 lets alice pick one.
    #[arg(long, default_value_t = 7466)]
    pub port: u16,
    /// Seed of the shared simulated source; both roles must agree.
    #[arg(long, default_value_t = 0)]
    pub source_seed: u64,
    /// Seed for this party's coins; OS randomness when absent.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-message timeout in seconds.
    #[arg(long, default_value_t = 30)]
    pub timeout: u64,
    #[arg(long)]
    pub json: bool,
}

/// `QROT_SEED` wins over the flag.
pub fn env_seed() -> Result<Option<u64>, String> {
    match std::env::var("QROT_SEED") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| format!("QROT_SEED={v} is not an unsigned integer")),
        Err(_) => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Command {
        Cli::try_parse_from(std::iter::once("qrot").chain(args.iter().copied())).unwrap().command
    }

    #[test]
    fn defaults_are_table1() {
        let Command::Bounds(b) = parse(&["bounds"]) else { panic!() };
        assert_eq!(b.params.params(), ProtocolParams::table1());
    }

    #[test]
    fn params_roundtrip_through_flags() {
        let mut p = SessionConfig::desk().params;
        p.delta1 = 0.1 + 0.2;
        p.eps_ir = 2f64.powi(-40);
        let flags = ParamArgs::to_flags(&p);
        let mut args = vec!["bounds"];
        args.extend(flags.iter().map(String::as_str));
        let Command::Bounds(b) = parse(&args) else { panic!() };
        assert_eq!(b.params.params(), p);
    }

    #[test]
    fn preset_desk_session() {
        let Command::Simulate(s) = parse(&["simulate", "--preset", "desk", "--tau", "24"]) else { panic!() };
        let c = s.session.config();
        assert_eq!(c.params, SessionConfig::desk().params);
        assert_eq!(c.tau, 24);
        assert_eq!(c.k, 16);
    }
}
