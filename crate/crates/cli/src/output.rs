//! Report serialization. JSON output is one document holding the manifest and
//! the report; CSV output holds the table and, when written to a file, a
//! sidecar `<out>.manifest.json`.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::SCHEMA_VERSION;
use crate::{Args, CliError, CommandKind, Format};

/// RNG identification written into manifests of seeded commands.
pub const RNG_ID: &str = "ChaCha20Rng (rand_chacha 0.9) via seed_from_u64(seed); trajectory i uses stream i";

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub pass: bool,
    /// Resolved config, defaults and overrides included.
    pub config: Value,
    pub seed: Option<u64>,
    pub report: Value,
    pub table: Option<Table>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: CommandKind,
    schema_version: u32,
    format: Format,
    #[serde(skip_serializing_if = "Option::is_none")]
    rng: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    config: &'a Value,
}

#[derive(Serialize)]
struct Document<'a> {
    manifest: Manifest<'a>,
    pass: bool,
    report: &'a Value,
}

fn manifest<'a>(kind: CommandKind, args: &Args, outcome: &'a Outcome) -> Manifest<'a> {
    Manifest {
        tool: "qsflow",
        version: env!("CARGO_PKG_VERSION"),
        command: kind,
        schema_version: SCHEMA_VERSION,
        format: args.format,
        rng: outcome.seed.map(|_| RNG_ID),
        seed: outcome.seed,
        config: &outcome.config,
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn sink(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout().lock().write_all(bytes).map_err(|e| CliError::Io(e.to_string())),
    }
}

fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn write(kind: CommandKind, args: &Args, outcome: &Outcome) -> Result<(), CliError> {
    match args.format {
        Format::Json => {
            let doc = Document { manifest: manifest(kind, args, outcome), pass: outcome.pass, report: &outcome.report };
            sink(args.out.as_deref(), &to_json(&doc)?)
        }
        Format::Csv => {
            let table = outcome
                .table
                .as_ref()
                .ok_or_else(|| CliError::Usage("csv output is only available for simulate and semigroup".into()))?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&table.header).map_err(|e| CliError::Io(e.to_string()))?;
            for row in &table.rows {
                w.write_record(row).map_err(|e| CliError::Io(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
            sink(args.out.as_deref(), &bytes)?;
            if let Some(out) = &args.out {
                let doc =
                    Document { manifest: manifest(kind, args, outcome), pass: outcome.pass, report: &outcome.report };
                sink(Some(&sidecar(out)), &to_json(&doc)?)?;
            }
            Ok(())
        }
    }
}
