//! CSV input: a header row, one numeric column per field.

use std::path::Path;

use ndarray::{Array1, Array2};

use l2e_core::Dataset;

/// Reads `path`, taking `response` as y and every other column, in file
/// order, as a predictor. With `add_intercept` a ones column comes first.
/// A file with only the response column yields an identity design.
pub fn read_dataset(
    path: &Path,
    response: &str,
    add_intercept: bool,
) -> Result<(Dataset, Vec<String>), String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| format!("{}: {e}", path.display()))?
        .iter()
        .map(str::to_string)
        .collect();
    let y_col = headers
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| format!("response column '{response}' not found in header {headers:?}"))?;

    let mut y = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| format!("{}: {e}", path.display()))?;
        let row_no = line + 2;
        if rec.len() != headers.len() {
            return Err(format!(
                "row {row_no}: expected {} fields, found {}",
                headers.len(),
                rec.len()
            ));
        }
        let mut xs = Vec::with_capacity(headers.len());
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                format!(
                    "row {row_no}, column '{}': '{field}' is not a number",
                    headers[j]
                )
            })?;
            if !v.is_finite() {
                return Err(format!(
                    "row {row_no}, column '{}': value must be finite",
                    headers[j]
                ));
            }
            if j == y_col {
                y.push(v);
            } else {
                xs.push(v);
            }
        }
        rows.push(xs);
    }
    let n = y.len();
    if n == 0 {
        return Err(format!("{}: no data rows", path.display()));
    }

    let mut names: Vec<String> = Vec::new();
    if add_intercept {
        names.push("(intercept)".to_string());
    }
    names.extend(
        headers
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != y_col)
            .map(|(_, h)| h.clone()),
    );
    let y = Array1::from(y);
    if names.is_empty() {
        let data = Dataset::identity(y).map_err(|e| e.to_string())?;
        return Ok((data, (1..=n).map(|i| format!("case{i}")).collect()));
    }
    let p = names.len();
    let offset = usize::from(add_intercept);
    let x = Array2::from_shape_fn(
        (n, p),
        |(i, j)| {
            if j < offset {
                1.0
            } else {
                rows[i][j - offset]
            }
        },
    );
    let data = Dataset::new(y, x).map_err(|e| e.to_string())?;
    Ok((data, names))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn reads_predictors_in_file_order() {
        let f = write("a,y,b\n1,2,3\n4,5,6\n");
        let (d, names) = read_dataset(f.path(), "y", true).unwrap();
        assert_eq!(names, vec!["(intercept)", "a", "b"]);
        assert_eq!(d.y().to_vec(), vec![2.0, 5.0]);
        assert_eq!(d.design().to_dense().row(1).to_vec(), vec![1.0, 4.0, 6.0]);
    }

    #[test]
    fn response_only_gives_identity_design() {
        let f = write("y\n3\n1\n2\n");
        let (d, _) = read_dataset(f.path(), "y", false).unwrap();
        assert!(d.design().is_identity());
    }

    #[test]
    fn malformed_inputs() {
        assert!(read_dataset(write("x,y\n1,oops\n").path(), "y", false).is_err());
        assert!(read_dataset(write("x,y\n1,2,3\n").path(), "y", false).is_err());
        assert!(read_dataset(write("x,z\n1,2\n").path(), "y", false).is_err());
        assert!(read_dataset(write("x,y\n").path(), "y", false).is_err());
        assert!(read_dataset(write("x,y\n1,inf\n").path(), "y", false).is_err());
    }
}
