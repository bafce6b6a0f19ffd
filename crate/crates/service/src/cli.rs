//! Operator command line.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{Duration, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fmeca_core::agreement::{agreement_report, binary_stage, render_stage_csv, render_text, score_stage, ReportOptions};
use fmeca_core::campaign::{Campaign, CellPolicy, Reviewer, ScoreAggregation, ScoreDimension, Stage, SummaryDocument};
use fmeca_core::persistence::{
    hash_token, import_ratings, load_campaign, render_matrix_csv, Store, StoredPrincipal, StoredToken,
};
use fmeca_core::risk::{render_register_csv, render_risk_matrix, risk_register, Consensus, RiskOptions};
use fmeca_core::scales::render_anchor_reference;
use fmeca_core::sus::{parse_responses, render_sus_report, sus_aggregate_with, sus_score_with, GradeBands, SdKind};
use fmeca_core::taxonomy::{default_taxonomy, validate_taxonomy, Taxonomy};
use rand::RngCore;
use serde_json::json;

use crate::error::ServiceError;

#[derive(Debug, Parser)]
#[command(name = "fmeca", version, about = "Failure-mode annotation campaigns: bundles, rounds, reports")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create an empty campaign bundle and print an operator token.
    Init {
        bundle: PathBuf,
        #[arg(long, default_value = "campaign")]
        campaign_id: String,
    },
    #[command(subcommand)]
    Taxonomy(TaxonomyCmd),
    /// Load `<id>/{source.txt,summary.txt[,metadata.json]}` directories into the bundle.
    ImportSummaries { bundle: PathBuf, dir: PathBuf },
    /// Register a reviewer and print their access token.
    AddReviewer {
        bundle: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long)]
        name: String,
        #[arg(long, default_value = "")]
        role: String,
        /// Token lifetime; no expiry when omitted.
        #[arg(long)]
        expires_in_days: Option<i64>,
    },
    /// Issue another operator token.
    IssueOperatorToken {
        bundle: PathBuf,
        #[arg(long)]
        expires_in_days: Option<i64>,
    },
    OpenRound {
        bundle: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long, default_value_t = 3)]
        taxonomy_version: u32,
        #[arg(long, value_delimiter = ',', required = true)]
        reviewers: Vec<String>,
        /// Summary ids; every summary in the bundle when omitted.
        #[arg(long, value_delimiter = ',')]
        summaries: Vec<String>,
    },
    CloseRound {
        bundle: PathBuf,
        #[arg(long)]
        round: String,
        /// Close even if some records are missing.
        #[arg(long)]
        force: bool,
    },
    #[command(subcommand)]
    Report(ReportCmd),
    #[command(subcommand)]
    Sus(SusCmd),
    #[command(subcommand)]
    Export(ExportCmd),
    /// Agreement statistics for a ratings matrix file.
    Analyze {
        file: PathBuf,
        #[arg(long, value_parser = parse_stage)]
        stage: Stage,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Print the severity, detectability and occurrence anchor tables.
    Scales {
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Serve the HTTP API on a bundle.
    Serve {
        bundle: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum TaxonomyCmd {
    /// Check a taxonomy file's structural invariants.
    Validate { file: PathBuf },
    /// Print a taxonomy version.
    Show {
        #[arg(long, default_value_t = 3)]
        version: u32,
        /// Read from a bundle instead of the built-in datasets.
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Debug, Args)]
pub struct OutArg {
    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ReportCmd {
    Agreement {
        bundle: PathBuf,
        #[arg(long)]
        round: String,
        #[arg(long, value_parser = parse_stage)]
        stage: Option<Stage>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Stage-3 cells need this many flagging raters; all raters when omitted.
        #[arg(long)]
        min_raters: Option<usize>,
        #[arg(long, value_parser = parse_aggregation, default_value = "max")]
        instance_aggregation: ScoreAggregation,
        #[command(flatten)]
        out: OutArg,
    },
    Risk {
        bundle: PathBuf,
        #[arg(long)]
        round: String,
        #[arg(long, value_enum, default_value_t = RiskFormat::Csv)]
        format: RiskFormat,
        #[arg(long, default_value = "majority")]
        consensus: Consensus,
        #[arg(long, value_parser = parse_aggregation, default_value = "median")]
        aggregation: ScoreAggregation,
        #[arg(long, value_parser = parse_aggregation, default_value = "max")]
        instance_aggregation: ScoreAggregation,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Debug, Subcommand)]
pub enum SusCmd {
    /// Score `evaluator_id,item1..item10` rows.
    Score {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = SdArg::Population)]
        sd: SdArg,
        /// JSON list of grade bands replacing the defaults.
        #[arg(long)]
        bands: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Debug, Subcommand)]
pub enum ExportCmd {
    /// Ratings matrix of one stage (one dimension for stage 3).
    Matrix {
        bundle: PathBuf,
        #[arg(long)]
        round: String,
        #[arg(long, value_parser = parse_stage)]
        stage: Stage,
        #[arg(long, value_parser = parse_dimension)]
        dimension: Option<ScoreDimension>,
        #[arg(long)]
        min_raters: Option<usize>,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RiskFormat {
    Json,
    Csv,
    Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SdArg {
    Population,
    Sample,
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    s.parse::<u8>()
        .ok()
        .and_then(Stage::from_number)
        .ok_or_else(|| format!("stage must be 1, 2 or 3, got `{s}`"))
}

fn parse_aggregation(s: &str) -> Result<ScoreAggregation, String> {
    s.parse()
}

fn parse_dimension(s: &str) -> Result<ScoreDimension, String> {
    s.parse()
}

fn new_token() -> String {
    let mut bytes = [0u8; 32];
    rand::rngs::OsRng.fill_bytes(&mut bytes);
    hex::encode(bytes)
}

fn issue(store: &mut Store, principal: StoredPrincipal, days: Option<i64>) -> Result<String, ServiceError> {
    let token = new_token();
    store.add_token(StoredToken {
        token_sha256: hash_token(&token),
        principal,
        expires_at: days.map(|d| Utc::now() + Duration::days(d)),
    })?;
    Ok(token)
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<(), ServiceError> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn json_line(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn read_text(path: &Path) -> Result<String, ServiceError> {
    fs::read_to_string(path).map_err(|e| ServiceError::BadRequest(format!("{}: {e}", path.display())))
}

fn read_summaries(dir: &Path) -> Result<Vec<SummaryDocument>, ServiceError> {
    let mut ids: Vec<_> = fs::read_dir(dir)
        .map_err(|e| ServiceError::BadRequest(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    ids.sort();
    ids.into_iter()
        .map(|id| {
            let d = dir.join(&id);
            let meta = d.join("metadata.json");
            let metadata: BTreeMap<String, String> = if meta.exists() {
                serde_json::from_str(&read_text(&meta)?)
                    .map_err(|e| ServiceError::BadRequest(format!("{}: {e}", meta.display())))?
            } else {
                BTreeMap::new()
            };
            Ok(SummaryDocument {
                source_text: read_text(&d.join("source.txt"))?,
                generated_summary: read_text(&d.join("summary.txt"))?,
                id,
                metadata,
            })
        })
        .collect()
}

fn render_taxonomy(t: &Taxonomy) -> String {
    let mut s = format!("taxonomy v{} ({} failure modes)\n", t.version, t.failure_modes.len());
    for c in &t.categories {
        s.push_str(&format!("{}\n", c.label));
        for sc in t.subcategories.iter().filter(|sc| sc.category_id == c.id) {
            s.push_str(&format!("  {}\n", sc.label));
            for fm in t.failure_modes.iter().filter(|fm| fm.subcategory_id == sc.id) {
                s.push_str(&format!("    {:<40} {}\n", fm.id, fm.label));
            }
        }
    }
    s
}

/// Runs one command, writing its result to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), ServiceError> {
    match cli.command {
        Command::Init { bundle, campaign_id } => {
            let mut store = Store::create(&bundle, Campaign::new(campaign_id))?;
            let token = issue(&mut store, StoredPrincipal::Operator, None)?;
            emit(out, None, &json_line(&json!({ "bundle": bundle, "operator_token": token })))
        }
        Command::Taxonomy(TaxonomyCmd::Validate { file }) => {
            let t = Taxonomy::load(&file)?;
            let violations = validate_taxonomy(&t);
            if violations.is_empty() {
                emit(out, None, &json_line(&json!({
                    "valid": true,
                    "version": t.version,
                    "failure_modes": t.failure_modes.len(),
                    "categories": t.categories.len(),
                })))
            } else {
                let detail: Vec<String> = violations
                    .iter()
                    .map(|v| format!("{}: {}", v.node_id, v.kind.describe()))
                    .collect();
                Err(ServiceError::Validation(detail.join("; ")))
            }
        }
        Command::Taxonomy(TaxonomyCmd::Show { version, bundle, format }) => {
            let t = match bundle {
                Some(b) => load_campaign(&b)?.taxonomy(version)?.clone(),
                None => default_taxonomy(version)?,
            };
            match format {
                Format::Json => emit(out, None, &json_line(&t)),
                _ => emit(out, None, &render_taxonomy(&t)),
            }
        }
        Command::ImportSummaries { bundle, dir } => {
            let docs = read_summaries(&dir)?;
            let mut store = Store::open(&bundle)?;
            let ids: Vec<String> = docs.iter().map(|d| d.id.clone()).collect();
            for d in docs {
                store.add_summary(d)?;
            }
            emit(out, None, &json_line(&json!({ "imported": ids })))
        }
        Command::AddReviewer { bundle, id, name, role, expires_in_days } => {
            let mut store = Store::open(&bundle)?;
            store.add_reviewer(Reviewer { id: id.clone(), display_name: name, role })?;
            let token = issue(&mut store, StoredPrincipal::Reviewer { reviewer_id: id.clone() }, expires_in_days)?;
            emit(out, None, &json_line(&json!({ "reviewer_id": id, "token": token })))
        }
        Command::IssueOperatorToken { bundle, expires_in_days } => {
            let mut store = Store::open(&bundle)?;
            let token = issue(&mut store, StoredPrincipal::Operator, expires_in_days)?;
            emit(out, None, &json_line(&json!({ "operator_token": token })))
        }
        Command::OpenRound { bundle, id, taxonomy_version, reviewers, summaries } => {
            let mut store = Store::open(&bundle)?;
            let summaries = if summaries.is_empty() {
                store.campaign().summaries().map(|s| s.id.clone()).collect()
            } else {
                summaries
            };
            let round = store.open_round(&id, taxonomy_version, reviewers, summaries)?;
            emit(out, None, &json_line(&round))
        }
        Command::CloseRound { bundle, round, force } => {
            let mut store = Store::open(&bundle)?;
            let round = store.close_round(&round, force)?;
            emit(out, None, &json_line(&round))
        }
        Command::Report(ReportCmd::Agreement {
            bundle,
            round,
            stage,
            format,
            min_raters,
            instance_aggregation,
            out: dest,
        }) => {
            let c = load_campaign(&bundle)?;
            let options = ReportOptions {
                cell_policy: CellPolicy { min_raters, instance_aggregation },
            };
            let r = agreement_report(&c, &round, &options)?;
            let text = match (format, stage) {
                (Format::Json, None) => json_line(&r),
                (Format::Json, Some(Stage::Subcategory)) => json_line(&r.stage1),
                (Format::Json, Some(Stage::FailureMode)) => json_line(&r.stage2),
                (Format::Json, Some(Stage::Scores)) => json_line(&r.stage3),
                (Format::Csv, Some(s)) => render_stage_csv(&r, s),
                (Format::Csv, None) => return Err(ServiceError::BadRequest("--format csv needs --stage".into())),
                (Format::Text, _) => render_text(&r),
            };
            emit(out, dest.out.as_deref(), &text)
        }
        Command::Report(ReportCmd::Risk {
            bundle,
            round,
            format,
            consensus,
            aggregation,
            instance_aggregation,
            out: dest,
        }) => {
            let c = load_campaign(&bundle)?;
            let options = RiskOptions { aggregation, consensus, instance_aggregation };
            let reg = risk_register(&c, &round, &options)?;
            let text = match format {
                RiskFormat::Json => json_line(&reg),
                RiskFormat::Csv => render_register_csv(&reg),
                RiskFormat::Matrix => render_risk_matrix(&reg),
            };
            emit(out, dest.out.as_deref(), &text)
        }
        Command::Sus(SusCmd::Score { file, sd, bands, format }) => {
            let f = fs::File::open(&file).map_err(|e| ServiceError::BadRequest(format!("{}: {e}", file.display())))?;
            let responses = parse_responses(f)?;
            let bands = match bands {
                Some(p) => GradeBands::from_json(&read_text(&p)?)?,
                None => GradeBands::default(),
            };
            let results = responses
                .iter()
                .map(|r| sus_score_with(r, &bands))
                .collect::<Result<Vec<_>, _>>()?;
            let kind = match sd {
                SdArg::Population => SdKind::Population,
                SdArg::Sample => SdKind::Sample,
            };
            let agg = sus_aggregate_with(&results, kind, &bands)?;
            match format {
                Format::Json => emit(out, None, &json_line(&json!({ "results": results, "aggregate": agg }))),
                _ => emit(out, None, &render_sus_report(&results, &agg)),
            }
        }
        Command::Export(ExportCmd::Matrix {
            bundle,
            round,
            stage,
            dimension,
            min_raters,
            out: dest,
        }) => {
            let c = load_campaign(&bundle)?;
            let m = match stage {
                Stage::Subcategory => c.stage1_matrix(&round)?,
                Stage::FailureMode => c.stage2_matrix(&round)?,
                Stage::Scores => {
                    let dim = dimension.ok_or_else(|| {
                        ServiceError::BadRequest("stage 3 needs --dimension severity|detectability".into())
                    })?;
                    let policy = CellPolicy { min_raters, ..CellPolicy::default() };
                    c.stage3_matrix(&round, dim, policy)?
                }
            };
            emit(out, dest.out.as_deref(), &render_matrix_csv(&m))
        }
        Command::Analyze { file, stage, format } => {
            let m = import_ratings(&file, stage)?;
            match stage {
                Stage::Scores => {
                    let s = score_stage(&m, ScoreDimension::Severity, "as imported");
                    match format {
                        Format::Json => emit(out, None, &json_line(&s)),
                        _ => Err(ServiceError::BadRequest("analyze supports --format json".into())),
                    }
                }
                _ => {
                    let s = binary_stage(&m);
                    match format {
                        Format::Json => emit(out, None, &json_line(&s)),
                        _ => Err(ServiceError::BadRequest("analyze supports --format json".into())),
                    }
                }
            }
        }
        Command::Scales { format } => match format {
            Format::Json => emit(out, None, &json_line(&json!({ "anchors": fmeca_core::scales::anchors() }))),
            _ => emit(out, None, &render_anchor_reference()),
        },
        Command::Serve { bundle, bind } => {
            let store = Store::open(&bundle)?;
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&bind).await?;
                let addr = listener.local_addr()?;
                emit(out, None, &format!("{}\n", json!({ "listening": addr.to_string() })))?;
                out.flush()?;
                crate::http::serve(store, listener).await?;
                Ok(())
            })
        }
    }
}
