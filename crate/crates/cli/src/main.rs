mod commands;

use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

pub const EXIT_OK: u8 = 0;
pub const EXIT_REJECTED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Human,
    Structured,
}

#[derive(Parser)]
#[command(
    name = "onionhash",
    about = "Layered password-hash chains: accounts, migration, analysis, and the MD5 collision demo",
    version
)]
struct Cli {
    /// Credential store file
    #[arg(long, global = true, default_value = "onionstore")]
    store: std::path::PathBuf,

    /// Chain version (fb2014 or sha256-v1)
    #[arg(long, global = true, default_value = "fb2014")]
    chain: String,

    /// Output format
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Human)]
    format: OutputFormat,

    /// Force all-zero salts; test hook, only honored for stores under the
    /// system temp directory
    #[arg(long, global = true, hide = true)]
    test_fixed_salts: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create an account (password read from stdin, never from argv)
    Register {
        user: String,
        /// Read the password from stdin without a prompt
        #[arg(long)]
        password_stdin: bool,
    },
    /// Check a password against the store
    Login {
        user: String,
        #[arg(long)]
        password_stdin: bool,
    },
    /// Set a new password, rotating salts
    SetPassword {
        user: String,
        #[arg(long)]
        password_stdin: bool,
    },
    /// Import a legacy `username:md5hex` file, wrapping each digest into the
    /// configured chain
    Migrate {
        /// Legacy import file, one `username:md5hex` line per user
        legacy_file: std::path::PathBuf,
    },
    /// Report chain bottlenecks, compliance findings, and guess costs
    Analyze {
        /// Guess rate(s) in guesses per second for the cost estimate
        #[arg(long, default_values_t = vec![1e9])]
        rate: Vec<f64>,
    },
    /// Demonstrate the MD5 collision end to end
    CollideDemo {
        /// Run against a live authd instead of a temporary local store
        #[arg(long)]
        server: Option<String>,
    },
    /// Run the register/login HTTP service
    Serve {
        #[arg(long, default_value = onionhash::authd::DEFAULT_BIND)]
        bind: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            EXIT_USAGE
        }
    };
    ExitCode::from(code)
}

fn run(cli: Cli) -> Result<u8, String> {
    let ctx = commands::Context::new(
        cli.store,
        &cli.chain,
        cli.format,
        cli.test_fixed_salts,
    )?;
    match cli.command {
        Command::Register {
            user,
            password_stdin,
        } => commands::register(&ctx, &user, password_stdin),
        Command::Login {
            user,
            password_stdin,
        } => commands::login(&ctx, &user, password_stdin),
        Command::SetPassword {
            user,
            password_stdin,
        } => commands::set_password(&ctx, &user, password_stdin),
        Command::Migrate { legacy_file } => commands::migrate(&ctx, &legacy_file),
        Command::Analyze { rate } => commands::analyze(&ctx, &rate),
        Command::CollideDemo { server } => commands::collide_demo(&ctx, server.as_deref()),
        Command::Serve { bind } => commands::serve(&ctx, &bind),
    }
}
