use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::PathBuf;

use clap::Args;
use routescope::store::{parse_stream, Store};

use crate::{fail, CliResult, Exit, StoreArgs, WithExit};

#[derive(Debug, Clone, Args)]
pub struct ImportArgs {
    #[command(flatten)]
    pub store: StoreArgs,
    /// Fail with exit code 5, writing nothing, if any document is rejected
    #[arg(long)]
    pub strict: bool,
    /// NDJSON or JSON-array files; `-` reads standard input
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub store: StoreArgs,
    /// Output file [default: standard output]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub(crate) fn open_store(args: &StoreArgs) -> CliResult<Store> {
    let config = args.load_config()?;
    let path = args.store_path(config.as_ref())?;
    Store::open(&path)
        .map_err(|e| anyhow::anyhow!("cannot open store {}: {e}", path.display()))
        .exit(Exit::Runtime)
}

/// Every file is parsed before anything is written, so `--strict` either
/// imports all of them or none.
pub(crate) fn cmd_import(args: &ImportArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    let mut accepted = Vec::new();
    let mut rejected = 0usize;
    for path in &args.files {
        let name = path.display().to_string();
        let parsed = if name == "-" {
            parse_stream(io::stdin().lock())
        } else {
            let file = File::open(path)
                .map_err(|e| anyhow::anyhow!("cannot read {name}: {e}"))
                .exit(Exit::Runtime)?;
            parse_stream(BufReader::new(file))
        }
        .exit(Exit::Runtime)?;
        for r in &parsed.rejected {
            let _ = writeln!(err, "{name}:{}: rejected: {}", r.document, r.reason);
        }
        rejected += parsed.rejected.len();
        accepted.extend(parsed.records);
    }
    if args.strict && rejected > 0 {
        return fail(
            Exit::Rejected,
            format!("{rejected} document(s) rejected; nothing imported (--strict)"),
        );
    }
    let store = open_store(&args.store)?;
    let n = accepted.len();
    store.append_all(accepted).exit(Exit::Runtime)?;
    writeln!(out, "imported {n} record(s), rejected {rejected}").exit(Exit::Runtime)
}

pub(crate) fn cmd_export(args: &ExportArgs, out: &mut dyn Write) -> CliResult {
    let store = open_store(&args.store)?;
    match &args.out {
        Some(p) => {
            let file = File::create(p)
                .map_err(|e| anyhow::anyhow!("cannot write {}: {e}", p.display()))
                .exit(Exit::Runtime)?;
            store
                .export_json(io::BufWriter::new(file))
                .exit(Exit::Runtime)?;
        }
        None => {
            store.export_json(out).exit(Exit::Runtime)?;
        }
    }
    Ok(())
}
