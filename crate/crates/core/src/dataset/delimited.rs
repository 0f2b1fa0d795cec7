use super::{Cell, DatasetError, RawTable, VarKind, VariableSchema};

/// Parse UTF-8 CSV with a header row. Empty fields are missing, fields that
/// parse as numbers are numeric, everything else is text. A column with any
/// text field gets the `Text` kind.
pub fn parse_csv(bytes: &[u8]) -> Result<RawTable, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(bytes);
    let headers = reader.headers().map_err(map_csv_error)?.clone();
    if headers.is_empty() || headers.iter().any(|h| h.trim().is_empty()) {
        return Err(DatasetError::EmptyHeader);
    }
    let mut schema: Vec<VariableSchema> = headers
        .iter()
        .map(|h| VariableSchema::new(h.trim(), VarKind::Continuous))
        .collect();

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(map_csv_error)?;
        let row: Vec<Cell> = record
            .iter()
            .map(|field| {
                let field = field.trim();
                if field.is_empty() {
                    Cell::Missing
                } else if let Ok(v) = field.parse::<f64>() {
                    Cell::Num(v)
                } else {
                    Cell::Text(field.to_string())
                }
            })
            .collect();
        rows.push(row);
    }
    for (c, s) in schema.iter_mut().enumerate() {
        if rows.iter().any(|r| matches!(r[c], Cell::Text(_))) {
            s.kind = VarKind::Text;
        }
    }
    RawTable::new(schema, rows)
}

fn map_csv_error(e: csv::Error) -> DatasetError {
    match e.kind() {
        csv::ErrorKind::UnequalLengths {
            pos,
            expected_len,
            len,
        } => DatasetError::RaggedRow {
            line: pos.as_ref().map_or(0, |p| p.line()),
            expected: *expected_len as usize,
            found: *len as usize,
        },
        _ => DatasetError::Csv(e.to_string()),
    }
}
