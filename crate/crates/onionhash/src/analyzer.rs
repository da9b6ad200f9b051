//! Static chain analysis: pre-image-space bottlenecks, compliance findings,
//! collision-propagation proofs, and brute-force cost estimates.
//!
//! The bottleneck measure is structural: the narrowest stage output anywhere
//! in the chain caps how many distinct final values are reachable from the
//! password space, regardless of how wide the final digest is.

use num_bigint::BigUint;
use thiserror::Error;

use crate::chain::{evaluate_chain, ChainError, ChainSpec, Pepper, SaltSet};

/// Best-known MD5 pre-image attack cost, in bits. Carried as an annotation
/// next to the structural 128-bit figure; attack costs drift with the
/// literature, the structural width does not.
pub const MD5_BEST_KNOWN_PREIMAGE_BITS: u32 = 123;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BottleneckReport {
    /// Output width after each stage, in bits, in chain order.
    pub boundary_widths_bits: Vec<u32>,
    /// Minimum over all boundaries: the effective pre-image space.
    pub effective_bits: u32,
    /// Index of the stage achieving the minimum (first such stage).
    pub bottleneck_stage: usize,
    /// Output width of the final stage.
    pub nominal_bits: u32,
    /// Best-known-attack figure for the bottleneck algorithm, when one is
    /// tracked (currently only MD5).
    pub best_known_attack_bits: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Info,
    Warn,
    Critical,
}

impl Severity {
    pub fn label(self) -> &'static str {
        match self {
            Severity::Info => "INFO",
            Severity::Warn => "WARN",
            Severity::Critical => "CRITICAL",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComplianceFinding {
    pub severity: Severity,
    pub code: String,
    pub message: String,
    /// Stage index, or `None` when the finding concerns the chain as a whole.
    pub stage: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagationVerdict {
    CollisionPropagates,
    NoCollision,
}

/// Stage-by-stage equality record for two inputs run through one chain with
/// identical salts and pepper.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropagationProof {
    pub input_a: Vec<u8>,
    pub input_b: Vec<u8>,
    pub stage_equal: Vec<bool>,
    pub verdict: PropagationVerdict,
}

#[derive(Debug, Error, PartialEq)]
pub enum AnalyzerError {
    #[error("inputs are identical; a collision needs two distinct inputs")]
    IdenticalInputs,
    #[error("effective_bits must be in 1..=512, got {0}")]
    BitsOutOfRange(u32),
    #[error("guesses per second must be a positive finite number, got {0}")]
    InvalidRate(f64),
    #[error("chain error: {0}")]
    Chain(#[from] ChainError),
}

/// Compute the per-boundary widths of `spec` and the structural minimum.
pub fn effective_preimage_space(spec: &ChainSpec) -> BottleneckReport {
    let boundary_widths_bits: Vec<u32> = spec
        .stages()
        .iter()
        .map(|s| s.kind.output_bits())
        .collect();
    let effective_bits = *boundary_widths_bits.iter().min().unwrap();
    let bottleneck_stage = boundary_widths_bits
        .iter()
        .position(|&w| w == effective_bits)
        .unwrap();
    let nominal_bits = *boundary_widths_bits.last().unwrap();
    let best_known_attack_bits = match spec.stages()[bottleneck_stage].kind.name() {
        "md5" => Some(MD5_BEST_KNOWN_PREIMAGE_BITS),
        _ => None,
    };
    BottleneckReport {
        boundary_widths_bits,
        effective_bits,
        bottleneck_stage,
        nominal_bits,
        best_known_attack_bits,
    }
}

/// Run `a` and `b` through `spec` with the same salts and pepper and record
/// which stages produce equal output.
pub fn collision_propagation_check(
    spec: &ChainSpec,
    a: &[u8],
    b: &[u8],
    salts: &SaltSet,
    pepper: &Pepper,
) -> Result<PropagationProof, AnalyzerError> {
    if a == b {
        return Err(AnalyzerError::IdenticalInputs);
    }
    let trace_a = evaluate_chain(spec, a, salts, pepper)?;
    let trace_b = evaluate_chain(spec, b, salts, pepper)?;
    let stage_equal: Vec<bool> = trace_a
        .outputs()
        .iter()
        .zip(trace_b.outputs())
        .map(|(oa, ob)| oa.bytes == ob.bytes)
        .collect();
    let verdict = if stage_equal.iter().all(|&eq| eq) {
        PropagationVerdict::CollisionPropagates
    } else {
        PropagationVerdict::NoCollision
    };
    Ok(PropagationProof {
        input_a: a.to_vec(),
        input_b: b.to_vec(),
        stage_equal,
        verdict,
    })
}

/// Finding codes, stable for machine consumption.
pub mod codes {
    pub const DEPRECATED_MD5: &str = "DEPRECATED_MD5";
    pub const DEPRECATED_SHA1: &str = "DEPRECATED_SHA1";
    pub const BOTTLENECK_LT_256: &str = "BOTTLENECK_LT_256";
    pub const MEMORY_HARD_PRESENT: &str = "MEMORY_HARD_PRESENT";
}

pub fn compliance_report(spec: &ChainSpec) -> Vec<ComplianceFinding> {
    let mut findings = Vec::new();
    for (index, stage) in spec.stages().iter().enumerate() {
        match stage.kind.name() {
            "md5" => findings.push(ComplianceFinding {
                severity: Severity::Critical,
                code: codes::DEPRECATED_MD5.into(),
                message: format!(
                    "stage {index} uses MD5, cryptographically broken and deprecated since 2008"
                ),
                stage: Some(index),
            }),
            "sha1" => findings.push(ComplianceFinding {
                severity: Severity::Warn,
                code: codes::DEPRECATED_SHA1.into(),
                message: format!("stage {index} uses SHA-1, deprecated for new designs"),
                stage: Some(index),
            }),
            _ => {}
        }
    }
    let report = effective_preimage_space(spec);
    if report.effective_bits < 256 {
        findings.push(ComplianceFinding {
            severity: Severity::Warn,
            code: codes::BOTTLENECK_LT_256.into(),
            message: format!(
                "effective pre-image space is {} bits (bottleneck at stage {}), below the 256-bit recommendation",
                report.effective_bits, report.bottleneck_stage
            ),
            stage: Some(report.bottleneck_stage),
        });
    }
    if let Some(index) = spec.stages().iter().position(|s| s.kind.is_memory_hard()) {
        findings.push(ComplianceFinding {
            severity: Severity::Info,
            code: codes::MEMORY_HARD_PRESENT.into(),
            message: format!("stage {index} is memory-hard, slowing bulk guessing"),
            stage: Some(index),
        });
    }
    findings
}

/// Expected exhaustive-search time as an exact rational number of seconds.
/// Arbitrary precision throughout; rendering rounds to 5 significant digits.
#[derive(Debug, Clone)]
pub struct GuessCost {
    numerator: BigUint,
    denominator: BigUint,
}

impl PartialEq for GuessCost {
    fn eq(&self, other: &Self) -> bool {
        self.numerator.clone() * &other.denominator == other.numerator.clone() * &self.denominator
    }
}

impl Eq for GuessCost {}

impl GuessCost {
    pub fn doubled(&self) -> GuessCost {
        GuessCost {
            numerator: &self.numerator * 2u32,
            denominator: self.denominator.clone(),
        }
    }

    /// Scientific notation with 5 significant digits, e.g. `1.7014e29`.
    pub fn scientific(&self) -> String {
        // floor(value * 10^SCALE) keeps full precision for any f64 rate
        const SCALE: u32 = 400;
        let scaled = &self.numerator * BigUint::from(10u32).pow(SCALE) / &self.denominator;
        let digits = scaled.to_str_radix(10);
        if digits == "0" {
            return "0.0000e0".to_string();
        }
        let mut exponent = digits.len() as i64 - 1 - SCALE as i64;

        // round to 5 significant digits, half-up
        let mut leading: u64 = if digits.len() > 5 {
            let six: u64 = digits
                .bytes()
                .take(6)
                .fold(0, |acc, b| acc * 10 + (b - b'0') as u64);
            (six + 5) / 10
        } else {
            let all: u64 = digits.parse().unwrap();
            all * 10u64.pow(5 - digits.len() as u32)
        };
        if leading >= 100_000 {
            leading /= 10;
            exponent += 1;
        }
        let mantissa = format!("{leading:05}");
        format!("{}.{}e{exponent}", &mantissa[..1], &mantissa[1..])
    }

    pub fn to_f64(&self) -> f64 {
        // good enough for display comparisons; exact math stays in BigUint
        let scaled = &self.numerator * BigUint::from(1_000_000_000u64) / &self.denominator;
        scaled.to_str_radix(10).parse::<f64>().unwrap_or(f64::INFINITY) / 1e9
    }
}

impl std::fmt::Display for GuessCost {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.scientific())
    }
}

fn f64_to_ratio(x: f64) -> (BigUint, BigUint) {
    // every positive finite f64 is mantissa * 2^exp exactly
    let bits = x.to_bits();
    let raw_exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mantissa, exp) = if raw_exp == 0 {
        (frac, -1074i64)
    } else {
        (frac | (1 << 52), raw_exp - 1075)
    };
    if exp >= 0 {
        (BigUint::from(mantissa) << exp as u64, BigUint::from(1u32))
    } else {
        (BigUint::from(mantissa), BigUint::from(1u32) << (-exp) as u64)
    }
}

/// Expected time to brute-force a space of `effective_bits` bits at
/// `guesses_per_second`: half the space, i.e. `2^(bits-1) / rate`.
pub fn guess_cost_estimate(
    effective_bits: u32,
    guesses_per_second: f64,
) -> Result<GuessCost, AnalyzerError> {
    if !(1..=512).contains(&effective_bits) {
        return Err(AnalyzerError::BitsOutOfRange(effective_bits));
    }
    if !(guesses_per_second.is_finite() && guesses_per_second > 0.0) {
        return Err(AnalyzerError::InvalidRate(guesses_per_second));
    }
    let (rate_num, rate_den) = f64_to_ratio(guesses_per_second);
    let guesses = BigUint::from(1u32) << (effective_bits - 1) as u64;
    Ok(GuessCost {
        numerator: guesses * rate_den,
        denominator: rate_num,
    })
}

/// Stable key-value rendering of a full analysis, consumed by the CLI's
/// `analyze` command in structured mode.
pub fn render_structured(
    spec: &ChainSpec,
    report: &BottleneckReport,
    findings: &[ComplianceFinding],
    costs: &[(f64, GuessCost)],
) -> String {
    let mut out = String::new();
    out.push_str(&format!("chain={}\n", spec.version()));
    let stage_names: Vec<&str> = spec.stages().iter().map(|s| s.kind.name()).collect();
    out.push_str(&format!("stages={}\n", stage_names.join(",")));
    let widths: Vec<String> = report
        .boundary_widths_bits
        .iter()
        .map(|w| w.to_string())
        .collect();
    out.push_str(&format!("boundary_bits={}\n", widths.join(",")));
    out.push_str(&format!("effective_bits={}\n", report.effective_bits));
    out.push_str(&format!("bottleneck_stage={}\n", report.bottleneck_stage));
    out.push_str(&format!("nominal_bits={}\n", report.nominal_bits));
    if let Some(bits) = report.best_known_attack_bits {
        out.push_str(&format!("best_known_attack_bits={bits}\n"));
    }
    for finding in findings {
        let stage = finding
            .stage
            .map(|s| s.to_string())
            .unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "finding={} code={} stage={} message={}\n",
            finding.severity.label(),
            finding.code,
            stage,
            finding.message
        ));
    }
    for (rate, cost) in costs {
        out.push_str(&format!(
            "cost rate={rate} expected_seconds={}\n",
            cost.scientific()
        ));
    }
    out
}
