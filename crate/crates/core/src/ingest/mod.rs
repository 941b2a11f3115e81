//! Trace ingestion: exported trace rows, the contract registry, and per-transaction trees.

mod registry;
mod tree;

use std::collections::HashSet;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Diagnostics, Error, ParseError, Result};
use crate::types::{Address, MethodId, TxHash};

pub use registry::{
    build_contract_registry, erc20_from_bytecode, read_address_set, ContractInfo, ContractRegistry, ERC20_SELECTORS,
};
pub use tree::{assemble_trace_trees, group_by_tx, Label, TraceEdge, TraceTree, Vertex, VertexKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceType {
    Call,
    Create,
    Selfdestruct,
}

impl TraceType {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceType::Call => "call",
            TraceType::Create => "create",
            TraceType::Selfdestruct => "selfdestruct",
        }
    }
}

impl FromStr for TraceType {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, ParseError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "call" => Ok(TraceType::Call),
            "create" | "create2" => Ok(TraceType::Create),
            "selfdestruct" | "suicide" => Ok(TraceType::Selfdestruct),
            _ => Err(ParseError::Field {
                field: "trace_type",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Success,
    Failed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Success => "success",
            Status::Failed => "failed",
        }
    }
}

impl FromStr for Status {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, ParseError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "success" | "1" | "ok" => Ok(Status::Success),
            "failed" | "fail" | "0" | "reverted" => Ok(Status::Failed),
            _ => Err(ParseError::Field {
                field: "status",
                value: s.to_string(),
            }),
        }
    }
}

/// One external or internal transaction row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub tx_hash: TxHash,
    pub block_number: u64,
    pub from_address: Address,
    pub to_address: Option<Address>,
    /// Nesting position; empty for the external transaction.
    pub trace_address: Vec<u32>,
    pub trace_type: TraceType,
    pub method_id: Option<MethodId>,
    pub value: u128,
    pub status: Status,
}

impl TraceRecord {
    pub fn is_external(&self) -> bool {
        self.trace_address.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    /// Comma-separated rows, optional header.
    #[default]
    Csv,
    /// One JSON object per line.
    Jsonl,
}

impl FromStr for TraceFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" | "a" => Ok(TraceFormat::Csv),
            "jsonl" | "json" | "b" => Ok(TraceFormat::Jsonl),
            _ => Err(Error::Invalid(format!("unknown trace format {s:?}"))),
        }
    }
}

pub const TRACE_COLUMNS: [&str; 9] = [
    "tx_hash",
    "block_number",
    "from_address",
    "to_address",
    "trace_address",
    "trace_type",
    "method_id",
    "value",
    "status",
];

pub fn parse_trace_address(s: &str) -> Result<Vec<u32>, ParseError> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split('.')
        .map(|p| {
            p.trim().parse::<u32>().map_err(|_| ParseError::Field {
                field: "trace_address",
                value: s.to_string(),
            })
        })
        .collect()
}

pub fn format_trace_address(path: &[u32]) -> String {
    let parts: Vec<String> = path.iter().map(u32::to_string).collect();
    parts.join(".")
}

fn parse_u64(field: &'static str, s: &str) -> Result<u64, ParseError> {
    s.trim().parse().map_err(|_| ParseError::Field {
        field,
        value: s.to_string(),
    })
}

fn parse_value(s: &str) -> Result<u128, ParseError> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(0);
    }
    s.parse().map_err(|_| ParseError::Field {
        field: "value",
        value: s.to_string(),
    })
}

fn parse_opt<T: FromStr<Err = ParseError>>(s: &str) -> Result<Option<T>, ParseError> {
    let s = s.trim();
    if s.is_empty() || s == "0x" {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}

fn record_from_fields(f: &[&str]) -> Result<TraceRecord, ParseError> {
    if f.len() != TRACE_COLUMNS.len() {
        return Err(ParseError::Columns {
            expected: TRACE_COLUMNS.len(),
            found: f.len(),
        });
    }
    Ok(TraceRecord {
        tx_hash: f[0].trim().parse()?,
        block_number: parse_u64("block_number", f[1])?,
        from_address: f[2].trim().parse()?,
        to_address: parse_opt(f[3])?,
        trace_address: parse_trace_address(f[4])?,
        trace_type: f[5].parse()?,
        method_id: parse_opt(f[6])?,
        value: parse_value(f[7])?,
        status: f[8].parse()?,
    })
}

#[derive(Deserialize)]
#[serde(untagged)]
enum JsonPath {
    Dotted(String),
    List(Vec<u32>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum JsonNumber {
    Int(u64),
    Text(String),
}

impl JsonNumber {
    fn text(self) -> String {
        match self {
            JsonNumber::Int(n) => n.to_string(),
            JsonNumber::Text(s) => s,
        }
    }
}

#[derive(Deserialize)]
struct JsonRow {
    tx_hash: String,
    block_number: JsonNumber,
    from_address: String,
    #[serde(default)]
    to_address: Option<String>,
    #[serde(default)]
    trace_address: Option<JsonPath>,
    trace_type: String,
    #[serde(default)]
    method_id: Option<String>,
    #[serde(default)]
    value: Option<JsonNumber>,
    status: JsonNumber,
}

fn record_from_json(line: &str) -> Result<TraceRecord, ParseError> {
    let row: JsonRow = serde_json::from_str(line).map_err(|e| ParseError::Field {
        field: "json",
        value: e.to_string(),
    })?;
    let trace_address = match row.trace_address {
        None => Vec::new(),
        Some(JsonPath::List(v)) => v,
        Some(JsonPath::Dotted(s)) => parse_trace_address(&s)?,
    };
    Ok(TraceRecord {
        tx_hash: row.tx_hash.parse()?,
        block_number: parse_u64("block_number", &row.block_number.text())?,
        from_address: row.from_address.parse()?,
        to_address: parse_opt(row.to_address.as_deref().unwrap_or(""))?,
        trace_address,
        trace_type: row.trace_type.parse()?,
        method_id: parse_opt(row.method_id.as_deref().unwrap_or(""))?,
        value: parse_value(&row.value.map(JsonNumber::text).unwrap_or_default())?,
        status: row.status.text().parse()?,
    })
}

/// One parsed row with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    pub line: u64,
    pub record: Result<TraceRecord, ParseError>,
}

/// Streaming reader over a trace export. Yields rows in file order.
pub struct TraceReader<R: Read> {
    inner: ReaderKind<R>,
}

enum ReaderKind<R: Read> {
    Csv {
        reader: csv::Reader<R>,
        record: csv::StringRecord,
    },
    Jsonl {
        lines: std::io::Lines<std::io::BufReader<R>>,
        line: u64,
    },
}

impl<R: Read> TraceReader<R> {
    pub fn new(reader: R, format: TraceFormat) -> Self {
        let inner = match format {
            TraceFormat::Csv => ReaderKind::Csv {
                reader: csv::ReaderBuilder::new()
                    .has_headers(false)
                    .flexible(true)
                    .trim(csv::Trim::All)
                    .from_reader(reader),
                record: csv::StringRecord::new(),
            },
            TraceFormat::Jsonl => ReaderKind::Jsonl {
                lines: std::io::BufReader::new(reader).lines(),
                line: 0,
            },
        };
        TraceReader { inner }
    }
}

impl<R: Read> Iterator for TraceReader<R> {
    type Item = Result<Row>;

    fn next(&mut self) -> Option<Self::Item> {
        match &mut self.inner {
            ReaderKind::Csv { reader, record } => loop {
                match reader.read_record(record) {
                    Ok(false) => return None,
                    Err(e) => return Some(Err(e.into())),
                    Ok(true) => {}
                }
                let line = record.position().map(|p| p.line()).unwrap_or(0);
                let fields: Vec<&str> = record.iter().collect();
                if fields.iter().all(|f| f.is_empty()) {
                    continue;
                }
                if fields[0] == "tx_hash" {
                    continue;
                }
                return Some(Ok(Row {
                    line,
                    record: record_from_fields(&fields),
                }));
            },
            ReaderKind::Jsonl { lines, line } => loop {
                let text = match lines.next()? {
                    Ok(t) => t,
                    Err(e) => return Some(Err(Error::io("<trace stream>", e))),
                };
                *line += 1;
                if text.trim().is_empty() {
                    continue;
                }
                let line = *line;
                return Some(Ok(Row {
                    line,
                    record: record_from_json(&text),
                }));
            },
        }
    }
}

/// Parse a whole trace export. Malformed and duplicate rows are rejected with
/// a line-numbered diagnostic; everything else is returned in file order.
pub fn parse_traces<R: Read>(reader: R, format: TraceFormat, diags: &mut Diagnostics) -> Result<Vec<TraceRecord>> {
    let mut seen: HashSet<(TxHash, Vec<u32>)> = HashSet::new();
    let mut out = Vec::new();
    for row in TraceReader::new(reader, format) {
        let Row { line, record } = row?;
        match record {
            Err(error) => diags.at_line(line, format!("rejected row: {error}")),
            Ok(rec) => {
                if !seen.insert((rec.tx_hash, rec.trace_address.clone())) {
                    diags.at_line(
                        line,
                        format!(
                            "rejected duplicate trace [{}] in {}",
                            format_trace_address(&rec.trace_address),
                            rec.tx_hash
                        ),
                    );
                    continue;
                }
                out.push(rec);
            }
        }
    }
    Ok(out)
}

/// Canonical CSV dump (with header) readable by [`parse_traces`].
pub fn write_traces<W: Write>(writer: W, records: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_COLUMNS)?;
    for r in records {
        w.write_record([
            r.tx_hash.to_hex(),
            r.block_number.to_string(),
            r.from_address.to_hex(),
            r.to_address.map(|a| a.to_hex()).unwrap_or_default(),
            format_trace_address(&r.trace_address),
            r.trace_type.as_str().to_string(),
            r.method_id.map(|m| m.to_hex()).unwrap_or_default(),
            r.value.to_string(),
            r.status.as_str().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<trace dump>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TX: &str = "0x1111111111111111111111111111111111111111111111111111111111111111";
    const A: &str = "0x00000000000000000000000000000000000000aa";
    const B: &str = "0x00000000000000000000000000000000000000bb";

    fn parse(text: &str, format: TraceFormat) -> (Vec<TraceRecord>, Diagnostics) {
        let mut d = Diagnostics::new();
        let r = parse_traces(text.as_bytes(), format, &mut d).unwrap();
        (r, d)
    }

    #[test]
    fn empty_file_yields_nothing() {
        let (r, d) = parse("", TraceFormat::Csv);
        assert!(r.is_empty());
        assert!(d.is_empty());
    }

    #[test]
    fn single_external_row() {
        let text = format!("{TX},1,{A},{B},,call,a9059cbb,0,success\n");
        let (r, d) = parse(&text, TraceFormat::Csv);
        assert!(d.is_empty());
        assert_eq!(r.len(), 1);
        assert!(r[0].trace_address.is_empty());
        assert_eq!(r[0].method_id.unwrap().to_hex(), "a9059cbb");
    }

    #[test]
    fn header_is_skipped_and_bad_address_reported_with_line() {
        let text = format!(
            "{}\n{TX},1,{A},{B},,call,,0,success\n{TX},1,0x1234,{B},0,call,,0,success\n",
            TRACE_COLUMNS.join(",")
        );
        let (r, d) = parse(&text, TraceFormat::Csv);
        assert_eq!(r.len(), 1);
        assert_eq!(d.len(), 1);
        assert_eq!(d.items[0].line, Some(3));
        assert!(d.items[0].message.contains("address"));
    }

    #[test]
    fn duplicate_trace_address_rejected() {
        let text = format!(
            "{TX},1,{A},{B},,call,,0,success\n{TX},1,{A},{B},0,call,,0,success\n{TX},1,{A},{B},0,call,,0,success\n"
        );
        let (r, d) = parse(&text, TraceFormat::Csv);
        assert_eq!(r.len(), 2);
        assert_eq!(d.len(), 1);
        assert!(d.items[0].message.contains("duplicate"));
    }

    #[test]
    fn jsonl_accepts_list_and_dotted_paths() {
        let text = format!(
            "{{\"tx_hash\":\"{TX}\",\"block_number\":7,\"from_address\":\"{A}\",\"to_address\":\"{B}\",\"trace_address\":\"\",\"trace_type\":\"call\",\"method_id\":\"\",\"value\":\"12\",\"status\":\"success\"}}\n\
             {{\"tx_hash\":\"{TX}\",\"block_number\":7,\"from_address\":\"{B}\",\"to_address\":\"{A}\",\"trace_address\":[0,1],\"trace_type\":\"call\",\"method_id\":\"a9059cbb\",\"value\":0,\"status\":1}}\n"
        );
        let (r, d) = parse(&text, TraceFormat::Jsonl);
        assert!(d.is_empty(), "{d:?}");
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].value, 12);
        assert_eq!(r[1].trace_address, vec![0, 1]);
    }

    #[test]
    fn dump_reparses_identically() {
        let text = format!("{TX},1,{A},{B},,call,a9059cbb,5,success\n{TX},1,{B},,0,create,,0,failed\n");
        let (r, _) = parse(&text, TraceFormat::Csv);
        let mut buf = Vec::new();
        write_traces(&mut buf, &r).unwrap();
        let (again, d) = parse(std::str::from_utf8(&buf).unwrap(), TraceFormat::Csv);
        assert!(d.is_empty());
        assert_eq!(r, again);
    }
}
