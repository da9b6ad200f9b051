use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use onionhash::analyzer::{
    self, compliance_report, effective_preimage_space, guess_cost_estimate, PropagationVerdict,
};
use onionhash::authd::{self, AuthConfig};
use onionhash::chain::{ChainRegistry, ChainSpec, Pepper, VerificationOutcome};
use onionhash::collision;
use onionhash::credstore::{self, SaltSource, Store};
use onionhash::migration::{wrap_legacy, LegacyRecord, MigrationReport};

use crate::{OutputFormat, EXIT_OK, EXIT_REJECTED};

pub struct Context {
    pub store_path: PathBuf,
    pub spec: ChainSpec,
    pub format: OutputFormat,
    pub salt_source: SaltSource,
}

impl Context {
    pub fn new(
        store_path: PathBuf,
        chain: &str,
        format: OutputFormat,
        test_fixed_salts: bool,
    ) -> Result<Context, String> {
        let spec =
            ChainSpec::by_version(chain).ok_or_else(|| format!("unknown chain {chain:?}"))?;
        let salt_source = if test_fixed_salts {
            if !store_path.starts_with(std::env::temp_dir()) {
                return Err(
                    "--test-fixed-salts is refused for stores outside the temp directory".into(),
                );
            }
            SaltSource::FixedZero
        } else {
            SaltSource::Random
        };
        Ok(Context {
            store_path,
            spec,
            format,
            salt_source,
        })
    }

    fn pepper(&self) -> Result<Pepper, String> {
        match std::env::var(credstore::PEPPER_ENV_VAR) {
            Ok(raw) => Pepper::from_hex(raw.trim()).ok_or_else(|| {
                format!(
                    "{} must be 64 hex characters",
                    credstore::PEPPER_ENV_VAR
                )
            }),
            Err(_) => {
                eprintln!(
                    "warning: {} not set, using the all-zero pepper",
                    credstore::PEPPER_ENV_VAR
                );
                Ok(Pepper::zero())
            }
        }
    }

    fn registry(&self) -> ChainRegistry {
        let mut registry = ChainRegistry::single(self.spec.clone());
        for builtin in ["fb2014", "sha256-v1", "md5-v0"] {
            if builtin != self.spec.version() {
                registry.register(ChainSpec::by_version(builtin).unwrap());
            }
        }
        registry
    }

    fn open_rw_or_create(&self) -> Result<Store, String> {
        if self.store_path.exists() {
            Store::open_rw(&self.store_path).map_err(|e| e.to_string())
        } else {
            Store::create(&self.store_path).map_err(|e| e.to_string())
        }
    }
}

fn read_password(prompt: bool) -> Result<Vec<u8>, String> {
    if prompt {
        eprint!("Password: ");
        let _ = std::io::stderr().flush();
    }
    let mut line = String::new();
    std::io::stdin()
        .lock()
        .read_line(&mut line)
        .map_err(|e| format!("failed to read password from stdin: {e}"))?;
    Ok(line.trim_end_matches(['\n', '\r']).as_bytes().to_vec())
}

fn emit_outcome(ctx: &Context, label: &str, accepted: bool) {
    match ctx.format {
        OutputFormat::Human => println!("{label}: {}", if accepted { "ok" } else { "rejected" }),
        OutputFormat::Structured => {
            println!("action={label} result={}", if accepted { "accept" } else { "reject" })
        }
    }
}

pub fn register(ctx: &Context, user: &str, password_stdin: bool) -> Result<u8, String> {
    let password = read_password(!password_stdin)?;
    let pepper = ctx.pepper()?;
    let mut store = ctx.open_rw_or_create()?;
    match store.create_account(user, &password, &ctx.spec, &pepper, ctx.salt_source) {
        Ok(_) => {
            emit_outcome(ctx, "register", true);
            Ok(EXIT_OK)
        }
        Err(credstore::StoreError::DuplicateUsername(_)) => {
            emit_outcome(ctx, "register", false);
            eprintln!("error: user {user:?} already exists");
            Ok(EXIT_REJECTED)
        }
        Err(e) => Err(e.to_string()),
    }
}

pub fn login(ctx: &Context, user: &str, password_stdin: bool) -> Result<u8, String> {
    let password = read_password(!password_stdin)?;
    let pepper = ctx.pepper()?;
    let store = Store::open_read(&ctx.store_path).map_err(|e| e.to_string())?;
    let outcome = store
        .authenticate(user, &password, &ctx.registry(), &pepper)
        .map_err(|e| e.to_string())?;
    let accepted = outcome == VerificationOutcome::Accept;
    emit_outcome(ctx, "login", accepted);
    Ok(if accepted { EXIT_OK } else { EXIT_REJECTED })
}

pub fn set_password(ctx: &Context, user: &str, password_stdin: bool) -> Result<u8, String> {
    let password = read_password(!password_stdin)?;
    let pepper = ctx.pepper()?;
    let mut store = Store::open_rw(&ctx.store_path).map_err(|e| e.to_string())?;
    match store.set_password(user, &password, &ctx.spec, &pepper, ctx.salt_source) {
        Ok(_) => {
            emit_outcome(ctx, "set-password", true);
            Ok(EXIT_OK)
        }
        Err(credstore::StoreError::UnknownUser(_)) => {
            emit_outcome(ctx, "set-password", false);
            Ok(EXIT_REJECTED)
        }
        Err(e) => Err(e.to_string()),
    }
}

pub fn migrate(ctx: &Context, legacy_file: &Path) -> Result<u8, String> {
    let text = std::fs::read_to_string(legacy_file)
        .map_err(|e| format!("cannot read {}: {e}", legacy_file.display()))?;
    let pepper = ctx.pepper()?;
    let mut store = ctx.open_rw_or_create()?;

    let mut report = MigrationReport::default();
    for (line_number, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let legacy = match LegacyRecord::parse(line) {
            Ok(l) => l,
            Err(e) => {
                eprintln!("line {}: {e}", line_number + 1);
                report.failed += 1;
                continue;
            }
        };
        if store.records().iter().any(|r| r.username == legacy.username) {
            report.skipped += 1;
            continue;
        }
        match wrap_legacy(&legacy, &ctx.salt_source.next(), &pepper, &ctx.spec) {
            Ok(record) => {
                store.add_record(record).map_err(|e| e.to_string())?;
                report.migrated += 1;
            }
            Err(e) => {
                eprintln!("line {}: {e}", line_number + 1);
                report.failed += 1;
            }
        }
    }
    store.save().map_err(|e| e.to_string())?;

    println!(
        "migrated={} skipped={} failed={}",
        report.migrated, report.skipped, report.failed
    );
    Ok(if report.failed > 0 { EXIT_REJECTED } else { EXIT_OK })
}

pub fn analyze(ctx: &Context, rates: &[f64]) -> Result<u8, String> {
    let report = effective_preimage_space(&ctx.spec);
    let findings = compliance_report(&ctx.spec);
    let mut costs = Vec::new();
    for &rate in rates {
        let cost = guess_cost_estimate(report.effective_bits, rate).map_err(|e| e.to_string())?;
        costs.push((rate, cost));
    }

    match ctx.format {
        OutputFormat::Structured => {
            print!(
                "{}",
                analyzer::render_structured(&ctx.spec, &report, &findings, &costs)
            );
        }
        OutputFormat::Human => {
            println!("chain {} ({} stages)", ctx.spec.version(), ctx.spec.stages().len());
            println!(
                "  boundary widths: {} bits",
                report
                    .boundary_widths_bits
                    .iter()
                    .map(|w| w.to_string())
                    .collect::<Vec<_>>()
                    .join(" -> ")
            );
            println!(
                "  effective pre-image space: {} bits (bottleneck at stage {}), nominal {} bits",
                report.effective_bits, report.bottleneck_stage, report.nominal_bits
            );
            if let Some(bits) = report.best_known_attack_bits {
                println!("  best known pre-image attack: ~{bits} bits");
            }
            for finding in &findings {
                println!(
                    "  [{}] {}: {}",
                    finding.severity.label(),
                    finding.code,
                    finding.message
                );
            }
            for (rate, cost) in &costs {
                println!(
                    "  expected exhaustive-search time at {rate} guesses/s: {} seconds",
                    cost.scientific()
                );
            }
        }
    }
    Ok(EXIT_OK)
}

pub fn collide_demo(ctx: &Context, server: Option<&str>) -> Result<u8, String> {
    let a = collision::STRING_A;
    let b = collision::STRING_B;
    println!("string a = {}", String::from_utf8_lossy(a));
    println!("string b = {}", String::from_utf8_lossy(b));

    // self-check the embedded pair before anything else
    let md5_a = onionhash::primitives::md5(a).to_hex();
    let md5_b = onionhash::primitives::md5(b).to_hex();
    if md5_a != collision::SHARED_MD5_HEX || md5_b != collision::SHARED_MD5_HEX {
        return Err(format!(
            "embedded collision pair failed its MD5 self-check: md5(a)={md5_a} md5(b)={md5_b}"
        ));
    }
    println!("md5(a)=md5(b)={}", collision::SHARED_MD5_HEX);

    let pepper = ctx.pepper()?;
    let salts = ctx.salt_source.next();
    let proof = analyzer::collision_propagation_check(&ctx.spec, a, b, &salts, &pepper)
        .map_err(|e| e.to_string())?;
    for (stage, equal) in ctx.spec.stages().iter().zip(&proof.stage_equal) {
        println!(
            "stage {}: {}",
            stage.kind.name(),
            if *equal { "equal" } else { "DIFFERS" }
        );
    }
    let propagates = proof.verdict == PropagationVerdict::CollisionPropagates;

    let login_b_ok = match server {
        Some(addr) => {
            let username = format!(
                "collision-demo-{}",
                std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .unwrap()
                    .as_millis()
            );
            let report = authd::exploit_demo(addr, &username).map_err(|e| e.to_string())?;
            for step in &report.steps {
                println!(
                    "{}: {} ({})",
                    step.name,
                    if step.passed { "ok" } else { "FAILED" },
                    step.detail
                );
            }
            report.passed
        }
        None => {
            let dir = std::env::temp_dir();
            let store_path = dir.join(format!("onionhash-demo-{}.store", std::process::id()));
            let _ = std::fs::remove_file(&store_path);
            let mut store = Store::create(&store_path).map_err(|e| e.to_string())?;
            let registry = ChainRegistry::single(ctx.spec.clone());

            store
                .create_account("demo", a, &ctx.spec, &pepper, ctx.salt_source)
                .map_err(|e| e.to_string())?;
            println!("register demo (string a): ok");

            let outcome = store
                .authenticate("demo", b, &registry, &pepper)
                .map_err(|e| e.to_string())?;
            let ok = outcome == VerificationOutcome::Accept;
            println!(
                "login demo (string b): {}",
                if ok { "accept" } else { "reject" }
            );

            let control = store
                .authenticate("demo", b"control-wrong-password", &registry, &pepper)
                .map_err(|e| e.to_string())?;
            println!(
                "control login (wrong password): {}",
                if control == VerificationOutcome::Reject {
                    "reject"
                } else {
                    "ACCEPT (broken!)"
                }
            );

            let _ = std::fs::remove_file(&store_path);
            let _ = std::fs::remove_file(store_path.with_extension("lock"));
            ok && control == VerificationOutcome::Reject
        }
    };

    if propagates && login_b_ok {
        println!("COLLISION CONFIRMED");
        Ok(EXIT_OK)
    } else {
        println!("NO COLLISION (chain not vulnerable)");
        Ok(EXIT_REJECTED)
    }
}

pub fn serve(ctx: &Context, bind: &str) -> Result<u8, String> {
    let pepper = ctx.pepper()?;
    authd::serve(AuthConfig {
        bind: bind.to_string(),
        store_path: ctx.store_path.clone(),
        spec: ctx.spec.clone(),
        pepper,
        salt_source: ctx.salt_source,
    })
    .map_err(|e| e.to_string())?;
    Ok(EXIT_OK)
}
