//! SAS Transport (XPORT) version 5 reader.
//!
//! Layout: 80-byte card-image records. A library header and two library
//! records are followed by one or more members, each made of a member
//! header, a descriptor header, two member records, a namestr header, one
//! 140-byte (136 on VAX/VMS) namestr per variable, an observation header and
//! the observation stream. Numbers are IBM System/360 hexadecimal floats,
//! possibly truncated to 2..8 bytes. Every section is blank-padded to a
//! multiple of 80 bytes.

use super::{Cell, DatasetError, RawTable, VarKind, VariableSchema};
use crate::numeric::pow2;

const RECORD: usize = 80;
const HEADER_TAG: &[u8] = b"HEADER RECORD*******";
const LIBRARY: &[u8] = b"HEADER RECORD*******LIBRARY HEADER RECORD!!!!!!!";
const MEMBER: &[u8] = b"HEADER RECORD*******MEMBER  HEADER RECORD!!!!!!!";
const DSCRPTR: &[u8] = b"HEADER RECORD*******DSCRPTR HEADER RECORD!!!!!!!";
const NAMESTR: &[u8] = b"HEADER RECORD*******NAMESTR HEADER RECORD!!!!!!!";
const OBS: &[u8] = b"HEADER RECORD*******OBS     HEADER RECORD!!!!!!!";
const V8_TAGS: [&[u8]; 4] = [b"LIBV8", b"MEMBV8", b"NAMSTV8", b"OBSV8"];

#[derive(Debug, Clone, PartialEq)]
pub struct XptMember {
    pub name: String,
    pub label: String,
    pub table: RawTable,
}

/// Parse the first member of a transport file.
pub fn parse_xpt(bytes: &[u8]) -> Result<RawTable, DatasetError> {
    let mut members = parse_xpt_members(bytes)?;
    if members.is_empty() {
        return Err(DatasetError::MalformedHeader {
            offset: 3 * RECORD,
            message: "file contains no members".into(),
        });
    }
    Ok(members.swap_remove(0).table)
}

/// Parse every member of a transport file.
pub fn parse_xpt_members(bytes: &[u8]) -> Result<Vec<XptMember>, DatasetError> {
    if !bytes.len().is_multiple_of(RECORD) {
        return Err(DatasetError::TruncatedRecord {
            offset: bytes.len() - bytes.len() % RECORD,
            message: format!("file length {} is not a multiple of {RECORD}", bytes.len()),
        });
    }
    let lib = record(bytes, 0)?;
    check_version(lib, 0)?;
    expect_prefix(lib, LIBRARY, 0, "library header")?;
    let first = record(bytes, RECORD)?;
    expect_prefix(first, b"SAS     SAS     SASLIB", RECORD, "first library record")?;
    record(bytes, 2 * RECORD)?;

    let mut members = Vec::new();
    let mut offset = 3 * RECORD;
    while offset < bytes.len() {
        if is_blank(&bytes[offset..]) {
            break;
        }
        let (member, next) = parse_member(bytes, offset)?;
        members.push(member);
        offset = next;
    }
    Ok(members)
}

fn parse_member(bytes: &[u8], start: usize) -> Result<(XptMember, usize), DatasetError> {
    let header = record(bytes, start)?;
    check_version(header, start)?;
    expect_prefix(header, MEMBER, start, "member header")?;
    let namestr_len = match &header[74..78] {
        b"0140" => 140,
        b"0136" => 136,
        other => {
            return Err(DatasetError::MalformedHeader {
                offset: start + 74,
                message: format!("namestr length `{}`", String::from_utf8_lossy(other)),
            })
        }
    };
    let mut offset = start + RECORD;
    expect_prefix(record(bytes, offset)?, DSCRPTR, offset, "descriptor header")?;
    offset += RECORD;
    let descriptor = record(bytes, offset)?;
    expect_prefix(descriptor, b"SAS     ", offset, "member descriptor")?;
    let name = text_field(&descriptor[8..16]);
    offset += RECORD;
    let descriptor2 = record(bytes, offset)?;
    let label = text_field(&descriptor2[32..72]);
    offset += RECORD;

    let ns_header = record(bytes, offset)?;
    check_version(ns_header, offset)?;
    expect_prefix(ns_header, NAMESTR, offset, "namestr header")?;
    let nvars: usize = std::str::from_utf8(&ns_header[54..58])
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| DatasetError::MalformedHeader {
            offset: offset + 54,
            message: "variable count is not numeric".into(),
        })?;
    offset += RECORD;

    let ns_bytes = nvars * namestr_len;
    let ns_end = offset + ns_bytes;
    if ns_end > bytes.len() {
        return Err(DatasetError::TruncatedRecord {
            offset,
            message: format!("{nvars} namestr records need {ns_bytes} bytes"),
        });
    }
    let mut vars = Vec::with_capacity(nvars);
    for i in 0..nvars {
        let at = offset + i * namestr_len;
        vars.push(Namestr::parse(&bytes[at..at + namestr_len], at)?);
    }
    offset = round_up(ns_end);

    let obs_header = record(bytes, offset)?;
    check_version(obs_header, offset)?;
    expect_prefix(obs_header, OBS, offset, "observation header")?;
    offset += RECORD;

    let row_len = vars.iter().map(|v| v.position + v.length).max().unwrap_or(0);
    let data_end = next_member(bytes, offset).unwrap_or(bytes.len());
    let data = &bytes[offset..data_end];
    let rows = decode_rows(data, &vars, row_len, offset)?;

    let schema = vars
        .iter()
        .map(|v| VariableSchema {
            name: v.name.clone(),
            label: v.label.clone(),
            kind: if v.numeric {
                VarKind::Continuous
            } else {
                VarKind::Text
            },
            missing_codes: Vec::new(),
        })
        .collect();
    let table = RawTable::new(schema, rows)?;
    Ok((XptMember { name, label, table }, data_end))
}

fn decode_rows(
    data: &[u8],
    vars: &[Namestr],
    row_len: usize,
    base: usize,
) -> Result<Vec<Vec<Cell>>, DatasetError> {
    if row_len == 0 {
        return Ok(Vec::new());
    }
    let mut n_rows = data.len() / row_len;
    let tail = &data[n_rows * row_len..];
    if !is_blank(tail) {
        return Err(DatasetError::TruncatedRecord {
            offset: base + n_rows * row_len,
            message: format!("partial observation of {} bytes, expected {row_len}", tail.len()),
        });
    }
    // Blank rows that start inside the final padding record are padding.
    let pad_start = data.len().saturating_sub(RECORD - 1);
    while n_rows > 0 {
        let at = (n_rows - 1) * row_len;
        if at >= pad_start && is_blank(&data[at..at + row_len]) {
            n_rows -= 1;
        } else {
            break;
        }
    }
    Ok((0..n_rows)
        .map(|r| {
            let row = &data[r * row_len..(r + 1) * row_len];
            vars.iter()
                .map(|v| {
                    let field = &row[v.position..v.position + v.length];
                    if v.numeric {
                        ibm_to_cell(field)
                    } else {
                        let s = text_field(field);
                        if s.is_empty() {
                            Cell::Missing
                        } else {
                            Cell::Text(s)
                        }
                    }
                })
                .collect()
        })
        .collect())
}

#[derive(Debug)]
struct Namestr {
    numeric: bool,
    length: usize,
    name: String,
    label: String,
    position: usize,
}

impl Namestr {
    fn parse(b: &[u8], offset: usize) -> Result<Self, DatasetError> {
        let be16 = |i: usize| i16::from_be_bytes([b[i], b[i + 1]]);
        let ntype = be16(0);
        let length = be16(4);
        let position = i32::from_be_bytes([b[84], b[85], b[86], b[87]]);
        let name = text_field(&b[8..16]);
        let bad = |message: String| DatasetError::MalformedHeader { offset, message };
        let numeric = match ntype {
            1 => true,
            2 => false,
            t => return Err(bad(format!("variable `{name}` has type code {t}"))),
        };
        if length <= 0 || (numeric && !(2..=8).contains(&length)) {
            return Err(bad(format!("variable `{name}` has length {length}")));
        }
        if position < 0 {
            return Err(bad(format!("variable `{name}` has position {position}")));
        }
        Ok(Namestr {
            numeric,
            length: length as usize,
            label: text_field(&b[16..56]),
            name,
            position: position as usize,
        })
    }
}

/// Decode a (possibly truncated) IBM hexadecimal float field.
///
/// SAS missing values (`.`, `._`, `.A`-`.Z`) are a tag byte followed by
/// zeros.
pub fn ibm_to_cell(field: &[u8]) -> Cell {
    let mut b = [0u8; 8];
    b[..field.len()].copy_from_slice(field);
    let tag = b[0];
    if b[1..].iter().all(|&x| x == 0) && (tag == b'.' || tag == b'_' || tag.is_ascii_uppercase()) {
        return Cell::Missing;
    }
    Cell::Num(ibm_to_f64(b))
}

/// Convert an 8-byte IBM hexadecimal float to binary64.
///
/// The 56-bit fraction is rounded once (to nearest, ties to even) when it
/// has more than 53 significant bits; otherwise the conversion is exact.
pub fn ibm_to_f64(b: [u8; 8]) -> f64 {
    let negative = b[0] & 0x80 != 0;
    let exponent = (b[0] & 0x7f) as i32 - 64;
    let fraction = u64::from_be_bytes([0, b[1], b[2], b[3], b[4], b[5], b[6], b[7]]);
    let magnitude = if fraction == 0 {
        0.0
    } else {
        // value = fraction * 16^exponent / 2^56
        fraction as f64 * pow2(4 * exponent - 56)
    };
    if negative {
        -magnitude
    } else {
        magnitude
    }
}

fn record(bytes: &[u8], offset: usize) -> Result<&[u8], DatasetError> {
    bytes
        .get(offset..offset + RECORD)
        .ok_or_else(|| DatasetError::TruncatedRecord {
            offset,
            message: format!(
                "expected an 80-byte record, found {}",
                bytes.len().saturating_sub(offset)
            ),
        })
}

fn check_version(rec: &[u8], offset: usize) -> Result<(), DatasetError> {
    if rec.starts_with(HEADER_TAG) {
        let kind = &rec[HEADER_TAG.len()..HEADER_TAG.len() + 8];
        if V8_TAGS.iter().any(|t| kind.starts_with(t)) {
            return Err(DatasetError::UnsupportedVersion {
                offset,
                found: String::from_utf8_lossy(kind).trim().to_string(),
            });
        }
    }
    Ok(())
}

fn expect_prefix(rec: &[u8], prefix: &[u8], offset: usize, what: &str) -> Result<(), DatasetError> {
    if rec.starts_with(prefix) {
        Ok(())
    } else {
        Err(DatasetError::MalformedHeader {
            offset,
            message: format!(
                "expected {what}, found `{}`",
                String::from_utf8_lossy(&rec[..prefix.len().min(rec.len())])
            ),
        })
    }
}

fn next_member(bytes: &[u8], from: usize) -> Option<usize> {
    (from..bytes.len())
        .step_by(RECORD)
        .find(|&at| bytes[at..].starts_with(MEMBER))
}

fn text_field(b: &[u8]) -> String {
    String::from_utf8_lossy(b)
        .trim_end_matches([' ', '\0'])
        .to_string()
}

fn is_blank(b: &[u8]) -> bool {
    b.iter().all(|&c| c == b' ')
}

fn round_up(n: usize) -> usize {
    n.div_ceil(RECORD) * RECORD
}
