//! Machine-readable emission of experiment statistics.
//!
//! Both formats are bit-exact contracts: identical statistics produce
//! identical bytes.
//!
//! * JSON: one document, keys lexicographically sorted at every level,
//!   floats rendered with 17 significant digits (`{:.16e}`), terminated by a
//!   single newline.
//! * CSV: a header line then one row per trial, in the fixed column order
//!   `trial,eve_success_rate,bob_error_rate,ambiguity_rate,`
//!   `key_bit_error_rate,desync,qubits`. Floats use the same 17-digit
//!   rendering; `desync` is 0 or 1.

use serde::Serialize;
use serde_json::{json, Map, Value};

use super::config::{fmt_f64, ExperimentConfig, OutputFormat, ProtocolChoice};
use super::SummaryStats;

/// Serializes statistics into the requested format.
pub fn emit(stats: &SummaryStats, format: OutputFormat) -> Vec<u8> {
    match format {
        OutputFormat::Json => emit_json(stats),
        OutputFormat::Csv => emit_csv(stats),
    }
}

/// Formatter that pins every float to 17 significant digits. Keys are kept
/// sorted by serde_json's default BTreeMap-backed object representation.
struct FixedFloatFormatter;

impl serde_json::ser::Formatter for FixedFloatFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

fn emit_json(stats: &SummaryStats) -> Vec<u8> {
    let value = json_value(stats);
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFloatFormatter);
    value
        .serialize(&mut ser)
        .expect("writing json to a Vec cannot fail");
    buf.push(b'\n');
    buf
}

fn config_value(config: &ExperimentConfig) -> Value {
    let mut map = Map::new();
    match config.protocol {
        ProtocolChoice::ThreeStage { form, theta, phi } => {
            map.insert("protocol".into(), json!("three-stage"));
            map.insert("alice_form".into(), json!(form.as_str()));
            map.insert("theta".into(), json!(theta));
            map.insert("phi".into(), json!(phi));
        }
        ProtocolChoice::SingleStage { theta } => {
            map.insert("protocol".into(), json!("single-stage"));
            map.insert("theta".into(), json!(theta));
        }
    }
    map.insert("eve".into(), json!(config.strategy.cli_name()));
    if let Some(psi) = config.strategy.psi() {
        map.insert("psi".into(), json!(psi));
    }
    map.insert("trials".into(), json!(config.trials));
    map.insert("bits".into(), json!(config.bits_per_trial));
    if let Some(frame) = &config.frame {
        map.insert("l".into(), json!(frame.l() as u64));
        map.insert("k".into(), json!(frame.k() as u64));
    }
    map.insert("seed".into(), json!(config.master_seed));
    map.insert("output".into(), json!(config.output_format.cli_name()));
    Value::Object(map)
}

fn json_value(stats: &SummaryStats) -> Value {
    let aggregate = |a: &super::Aggregate| {
        json!({
            "mean": a.mean,
            "min": a.min,
            "max": a.max,
        })
    };
    let per_trial: Vec<Value> = stats
        .per_trial
        .iter()
        .map(|r| {
            json!({
                "trial": r.trial,
                "eve_success_rate": r.eve_success_rate,
                "bob_error_rate": r.bob_error_rate,
                "ambiguity_rate": r.ambiguity_rate,
                "key_bit_error_rate": r.key_bit_error_rate,
                "desync": r.desync,
                "qubits": r.qubits,
            })
        })
        .collect();
    json!({
        "aggregates": {
            "eve_success_rate": aggregate(&stats.eve_success),
            "bob_error_rate": aggregate(&stats.bob_error),
            "ambiguity_rate": aggregate(&stats.ambiguity),
            "key_bit_error_rate_mean": stats.key_bit_error_mean,
            "desync_count": stats.desync_count,
            "total_qubits": stats.total_qubits,
            "eve_guessed": stats.eve_guessed,
        },
        "config": config_value(&stats.config),
        "master_seed": stats.config.master_seed,
        "per_trial": per_trial,
    })
}

fn emit_csv(stats: &SummaryStats) -> Vec<u8> {
    let mut out = String::from(
        "trial,eve_success_rate,bob_error_rate,ambiguity_rate,key_bit_error_rate,desync,qubits\n",
    );
    for r in &stats.per_trial {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.trial,
            fmt_f64(r.eve_success_rate),
            fmt_f64(r.bob_error_rate),
            fmt_f64(r.ambiguity_rate),
            fmt_f64(r.key_bit_error_rate),
            u8::from(r.desync),
            r.qubits,
        ));
    }
    out.into_bytes()
}
