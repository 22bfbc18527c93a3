use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde_json::Value;

use super::intern::{MemeKind, Symbols};
use crate::{Error, MemeId, Result, TokenId, UserId};

/// One timestamped post.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TweetRecord {
    pub timestamp: u64,
    pub user: UserId,
    pub hashtags: Vec<MemeId>,
    pub urls: Vec<MemeId>,
    pub nouns: Vec<TokenId>,
    pub lang: String,
}

impl TweetRecord {
    /// Hashtags then URLs, each meme at most once.
    pub fn memes(&self) -> impl Iterator<Item = MemeId> + '_ {
        self.hashtags.iter().chain(self.urls.iter()).copied()
    }

    pub fn is_english(&self) -> bool {
        self.lang == "en"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    /// `timestamp \t user \t hashtags \t urls \t nouns \t lang`
    Tsv,
    /// One JSON object per line with the same field names.
    JsonLines,
}

impl Schema {
    /// `.jsonl` / `.json` / `.ndjson` select JSON lines, anything else TSV.
    pub fn from_path(path: &Path) -> Schema {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "json" | "ndjson") => Schema::JsonLines,
            _ => Schema::Tsv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Skip and count malformed or out-of-order lines.
    #[default]
    Lenient,
    /// Abort on the first malformed or out-of-order line.
    Strict,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseStats {
    pub lines: usize,
    pub records: usize,
    pub malformed: usize,
    pub out_of_order: usize,
}

impl ParseStats {
    pub fn skipped(&self) -> usize {
        self.malformed + self.out_of_order
    }
}

/// Streaming log parser. Interning tables grow monotonically as lines are read.
pub struct LogReader<R> {
    input: R,
    schema: Schema,
    mode: ParseMode,
    symbols: Symbols,
    stats: ParseStats,
    last_timestamp: u64,
    buf: String,
    failed: bool,
}

impl<R: BufRead> LogReader<R> {
    pub fn new(input: R, schema: Schema, mode: ParseMode) -> Self {
        Self::with_symbols(input, schema, mode, Symbols::default())
    }

    /// Continue interning into existing tables.
    pub fn with_symbols(input: R, schema: Schema, mode: ParseMode, symbols: Symbols) -> Self {
        LogReader {
            input,
            schema,
            mode,
            symbols,
            stats: ParseStats::default(),
            last_timestamp: 0,
            buf: String::new(),
            failed: false,
        }
    }

    pub fn stats(&self) -> ParseStats {
        self.stats
    }

    pub fn symbols(&self) -> &Symbols {
        &self.symbols
    }

    pub fn into_symbols(self) -> Symbols {
        self.symbols
    }

    fn parse_line(&mut self, line: &str) -> std::result::Result<TweetRecord, String> {
        match self.schema {
            Schema::Tsv => parse_tsv(line, &mut self.symbols),
            Schema::JsonLines => parse_json(line, &mut self.symbols),
        }
    }
}

impl<R: BufRead> Iterator for LogReader<R> {
    type Item = Result<TweetRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            self.buf.clear();
            match self.input.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    self.failed = true;
                    return Some(Err(Error::Stream(e)));
                }
            }
            self.stats.lines += 1;
            let line = std::mem::take(&mut self.buf);
            let trimmed = line.trim_end_matches(['\n', '\r']);
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                self.buf = line;
                continue;
            }
            let parsed = self.parse_line(trimmed);
            self.buf = line;
            let line_no = self.stats.lines;
            match parsed {
                Err(message) => {
                    if self.mode == ParseMode::Strict {
                        self.failed = true;
                        return Some(Err(Error::Parse {
                            line: line_no,
                            message,
                        }));
                    }
                    self.stats.malformed += 1;
                }
                Ok(rec) if rec.timestamp < self.last_timestamp => {
                    if self.mode == ParseMode::Strict {
                        self.failed = true;
                        return Some(Err(Error::Parse {
                            line: line_no,
                            message: format!(
                                "timestamp {} precedes previous timestamp {}",
                                rec.timestamp, self.last_timestamp
                            ),
                        }));
                    }
                    self.stats.out_of_order += 1;
                }
                Ok(rec) => {
                    self.last_timestamp = rec.timestamp;
                    self.stats.records += 1;
                    return Some(Ok(rec));
                }
            }
        }
    }
}

fn parse_user(s: &str) -> std::result::Result<UserId, String> {
    let s = s.trim();
    let digits = s.strip_prefix(['u', 'U']).unwrap_or(s);
    digits
        .parse::<UserId>()
        .map_err(|_| format!("bad user id {s:?}"))
}

fn parse_timestamp(s: &str) -> std::result::Result<u64, String> {
    s.trim()
        .parse::<u64>()
        .map_err(|_| format!("bad timestamp {s:?}"))
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty())
}

fn intern_memes<'a>(
    items: impl Iterator<Item = &'a str>,
    kind: MemeKind,
    symbols: &mut Symbols,
) -> Vec<MemeId> {
    let mut out: Vec<MemeId> = Vec::new();
    for item in items {
        let id = symbols.memes.intern(kind, item);
        if !out.contains(&id) {
            out.push(id);
        }
    }
    out
}

fn parse_tsv(line: &str, symbols: &mut Symbols) -> std::result::Result<TweetRecord, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 6 {
        return Err(format!("expected 6 tab-separated fields, found {}", fields.len()));
    }
    let timestamp = parse_timestamp(fields[0])?;
    let user = parse_user(fields[1])?;
    let hashtags = intern_memes(split_list(fields[2]), MemeKind::Hashtag, symbols);
    let urls = intern_memes(split_list(fields[3]), MemeKind::Url, symbols);
    let nouns = split_list(fields[4])
        .map(|n| symbols.tokens.intern(n))
        .collect();
    Ok(TweetRecord {
        timestamp,
        user,
        hashtags,
        urls,
        nouns,
        lang: fields[5].trim().to_owned(),
    })
}

fn json_list(v: Option<&Value>) -> std::result::Result<Vec<String>, String> {
    match v {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::String(s)) => Ok(split_list(s).map(str::to_owned).collect()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|x| match x {
                Value::String(s) => Ok(s.trim().to_owned()),
                other => Err(format!("list entries must be strings, got {other}")),
            })
            .filter(|r| !matches!(r, Ok(s) if s.is_empty()))
            .collect(),
        Some(other) => Err(format!("expected list or string, got {other}")),
    }
}

fn parse_json(line: &str, symbols: &mut Symbols) -> std::result::Result<TweetRecord, String> {
    let v: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let obj = v.as_object().ok_or("expected a JSON object")?;
    let timestamp = match obj.get("timestamp") {
        Some(Value::Number(n)) => n.as_u64().ok_or("timestamp must be a non-negative integer")?,
        Some(Value::String(s)) => parse_timestamp(s)?,
        _ => return Err("missing timestamp".into()),
    };
    let user = match obj.get("user_id") {
        Some(Value::Number(n)) => n.as_u64().ok_or("user_id must be a non-negative integer")?,
        Some(Value::String(s)) => parse_user(s)?,
        _ => return Err("missing user_id".into()),
    };
    let hashtags = json_list(obj.get("hashtags"))?;
    let urls = json_list(obj.get("urls"))?;
    let nouns = json_list(obj.get("nouns"))?;
    let lang = match obj.get("lang") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.trim().to_owned(),
        Some(other) => return Err(format!("lang must be a string, got {other}")),
    };
    Ok(TweetRecord {
        timestamp,
        user,
        hashtags: intern_memes(hashtags.iter().map(String::as_str), MemeKind::Hashtag, symbols),
        urls: intern_memes(urls.iter().map(String::as_str), MemeKind::Url, symbols),
        nouns: nouns.iter().map(|n| symbols.tokens.intern(n)).collect(),
        lang,
    })
}

/// Open `path` for streaming.
pub fn parse_log(
    path: &Path,
    schema: Schema,
    mode: ParseMode,
) -> Result<LogReader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(LogReader::new(BufReader::new(file), schema, mode))
}

/// A fully materialized log.
#[derive(Debug, Clone, Default)]
pub struct ParsedLog {
    pub records: Vec<TweetRecord>,
    pub symbols: Symbols,
    pub stats: ParseStats,
}

impl ParsedLog {
    pub fn from_reader<R: BufRead>(reader: LogReader<R>) -> Result<ParsedLog> {
        let mut reader = reader;
        let mut records = Vec::new();
        for rec in reader.by_ref() {
            records.push(rec?);
        }
        let stats = reader.stats();
        Ok(ParsedLog {
            records,
            symbols: reader.into_symbols(),
            stats,
        })
    }

    pub fn first_timestamp(&self) -> Option<u64> {
        self.records.first().map(|r| r.timestamp)
    }

    pub fn last_timestamp(&self) -> Option<u64> {
        self.records.last().map(|r| r.timestamp)
    }
}

pub fn read_log(path: &Path, schema: Schema, mode: ParseMode) -> Result<ParsedLog> {
    ParsedLog::from_reader(parse_log(path, schema, mode)?)
}

/// Serialize one post in the TSV log schema (newline included).
pub fn format_tsv_line(
    timestamp: u64,
    user: UserId,
    hashtags: &[&str],
    urls: &[&str],
    nouns: &[&str],
    lang: &str,
) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}\n",
        timestamp,
        user,
        hashtags.join(","),
        urls.join(","),
        nouns.join(","),
        lang
    )
}
