use std::collections::BTreeSet;
use std::path::Path;

use super::{Class, ClassCounts, DatasetError, DatasetMatrix};

/// Column roles and missing-age encoding for [`ingest_csv`].
#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub label_column: String,
    /// Label value mapped to [`Class::Positive`]; the other value is negative.
    pub positive_label: String,
    pub id_column: String,
    pub age_column: Option<String>,
    /// Extra tokens (besides an empty cell) that mark a missing age.
    pub missing_age_tokens: Vec<String>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            label_column: "label".into(),
            positive_label: "AML".into(),
            id_column: "id".into(),
            age_column: None,
            missing_age_tokens: Vec::new(),
        }
    }
}

/// Reads a UTF-8, comma-delimited CSV with a header row.
///
/// Every column other than the id and label columns becomes a feature, in file
/// order. Empty age cells (or configured tokens) become NaN.
pub fn ingest_csv(path: &Path, opts: &IngestOptions) -> Result<DatasetMatrix, DatasetError> {
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ingest_reader(file, opts)
}

pub(crate) fn ingest_reader<R: std::io::Read>(
    reader: R,
    opts: &IngestOptions,
) -> Result<DatasetMatrix, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_owned()))
    };
    let label_col = find(&opts.label_column)?;
    let id_col = find(&opts.id_column)?;
    let age_src = opts.age_column.as_deref().map(find).transpose()?;

    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| c != label_col && c != id_col)
        .collect();
    let feature_names: Vec<String> = feature_cols.iter().map(|&c| headers[c].clone()).collect();
    let age_column = age_src.and_then(|a| feature_cols.iter().position(|&c| c == a));

    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    let mut ids = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        ids.push(record[id_col].to_owned());
        raw_labels.push(record[label_col].to_owned());
        for &c in &feature_cols {
            let cell = &record[c];
            if Some(c) == age_src
                && (cell.is_empty() || opts.missing_age_tokens.iter().any(|t| t == cell))
            {
                values.push(f64::NAN);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| DatasetError::NonNumericCell {
                row: r + 1,
                column: headers[c].clone(),
                value: cell.to_owned(),
            })?;
            if !v.is_finite() {
                return Err(DatasetError::NonNumericCell {
                    row: r + 1,
                    column: headers[c].clone(),
                    value: cell.to_owned(),
                });
            }
            values.push(v);
        }
    }

    let distinct: BTreeSet<&str> = raw_labels.iter().map(String::as_str).collect();
    if distinct.len() > 2 {
        return Err(DatasetError::TooManyLabels(
            distinct.into_iter().map(str::to_owned).collect(),
        ));
    }
    let labels: Vec<Class> = raw_labels
        .iter()
        .map(|l| Class::from(*l == opts.positive_label))
        .collect();
    ClassCounts::of(&labels).require_both()?;

    DatasetMatrix::from_flat(feature_names, values, labels, ids, age_column)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(age: bool) -> IngestOptions {
        IngestOptions {
            age_column: age.then(|| "age".to_owned()),
            missing_age_tokens: vec!["NA".into()],
            ..IngestOptions::default()
        }
    }

    fn parse(text: &str, age: bool) -> Result<DatasetMatrix, DatasetError> {
        ingest_reader(text.as_bytes(), &opts(age))
    }

    #[test]
    fn parses_three_rows() {
        let d = parse("id,label,age,g1\na,AML,30,1.5\nb,AML,41,2\nc,healthy,50,-0.25\n", true)
            .unwrap();
        assert_eq!(d.feature_names(), &["age", "g1"]);
        assert_eq!(d.n_rows(), 3);
        assert_eq!(d.age_column(), Some(0));
        assert_eq!(d.labels(), &[Class::Positive, Class::Positive, Class::Negative]);
        assert_eq!(d.row(2), &[50.0, -0.25]);
    }

    #[test]
    fn single_label_is_degenerate() {
        let err = parse("id,label,g1\na,AML,1\nb,AML,2\n", false).unwrap_err();
        assert!(matches!(err, DatasetError::DegenerateLabels { positives: 2, negatives: 0 }));
    }

    #[test]
    fn na_in_feature_cell_names_location() {
        let err = parse("id,label,g1,g2\na,AML,1,2\nb,healthy,3,NA\n", false).unwrap_err();
        match err {
            DatasetError::NonNumericCell { row, column, value } => {
                assert_eq!((row, column.as_str(), value.as_str()), (2, "g2", "NA"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_age_tokens_become_nan() {
        let d = parse("id,label,age,g1\na,AML,,1\nb,healthy,NA,2\nc,AML,33,3\n", true).unwrap();
        assert!(d.value(0, 0).is_nan());
        assert!(d.value(1, 0).is_nan());
        assert_eq!(d.value(2, 0), 33.0);
        // without an age column, an empty cell is just a bad number
        assert!(parse("id,label,age,g1\na,AML,,1\nb,healthy,3,2\n", false).is_err());
    }

    #[test]
    fn missing_column_and_duplicate_id() {
        assert!(matches!(
            parse("id,g1\na,1\n", false),
            Err(DatasetError::MissingColumn(c)) if c == "label"
        ));
        assert!(matches!(
            parse("id,label,g1\na,AML,1\na,healthy,2\n", false),
            Err(DatasetError::DuplicateSampleId(_))
        ));
    }

    #[test]
    fn three_labels_rejected() {
        assert!(matches!(
            parse("id,label,g1\na,AML,1\nb,healthy,2\nc,other,3\n", false),
            Err(DatasetError::TooManyLabels(_))
        ));
    }
}
