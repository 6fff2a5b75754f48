use serde::{Deserialize, Serialize};

use super::DtwError;

/// Symmetric pairwise distances with a zero diagonal, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub ids: Vec<String>,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn zeros(ids: Vec<String>) -> Self {
        let n = ids.len();
        DistanceMatrix { ids, values: vec![0.0; n * n] }
    }

    /// Builds from a full square matrix; panics if it is not square.
    pub fn from_rows(ids: Vec<String>, rows: &[Vec<f64>]) -> Self {
        let n = ids.len();
        assert!(rows.len() == n && rows.iter().all(|r| r.len() == n), "matrix must be {n}x{n}");
        DistanceMatrix { ids, values: rows.concat() }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let n = self.len();
        self.values[i * n + j] = value;
        self.values[j * n + i] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.row(i).to_vec()).collect()
    }

    /// Sub-matrix over the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> DistanceMatrix {
        let ids = indices.iter().map(|&i| self.ids[i].clone()).collect();
        let values = indices
            .iter()
            .flat_map(|&i| indices.iter().map(move |&j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .collect();
        DistanceMatrix { ids, values }
    }

    /// Checks symmetry, zero diagonal, finiteness and nonnegativity.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.len();
        for i in 0..n {
            if self.get(i, i) != 0.0 {
                return Err(format!("nonzero diagonal at {i}"));
            }
            for j in 0..n {
                let v = self.get(i, j);
                if !v.is_finite() || v < 0.0 {
                    return Err(format!("bad entry {v} at ({i}, {j})"));
                }
                if v != self.get(j, i) {
                    return Err(format!("asymmetric at ({i}, {j})"));
                }
            }
        }
        Ok(())
    }

    /// CSV with an `id` header row and an id column. Values use the
    /// shortest round-tripping decimal form.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<&str> = std::iter::once("id").chain(self.ids.iter().map(String::as_str)).collect();
        w.write_record(&header).expect("in-memory write");
        for (i, id) in self.ids.iter().enumerate() {
            let row: Vec<String> = std::iter::once(id.clone())
                .chain(self.row(i).iter().map(|v| v.to_string()))
                .collect();
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn from_csv(text: &str) -> Result<Self, DtwError> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| DtwError::Csv(e.to_string()))?.clone();
        if header.get(0) != Some("id") {
            return Err(DtwError::Csv("first header cell must be `id`".into()));
        }
        let ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut rows = Vec::with_capacity(ids.len());
        for (line, record) in r.records().enumerate() {
            let record = record.map_err(|e| DtwError::Csv(e.to_string()))?;
            if record.get(0) != ids.get(line).map(String::as_str) {
                return Err(DtwError::Csv(format!("row {} id does not match header", line + 1)));
            }
            let row = record
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>().map_err(|e| DtwError::Csv(format!("row {}: {e}", line + 1))))
                .collect::<Result<Vec<_>, _>>()?;
            if row.len() != ids.len() {
                return Err(DtwError::Csv(format!("row {} has {} values", line + 1, row.len())));
            }
            rows.push(row);
        }
        if rows.len() != ids.len() {
            return Err(DtwError::Csv(format!("{} rows for {} ids", rows.len(), ids.len())));
        }
        let m = DistanceMatrix::from_rows(ids, &rows);
        m.validate().map_err(DtwError::Csv)?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let mut m = DistanceMatrix::zeros(vec!["a#0".into(), "a#1".into(), "b#0".into()]);
        m.set(0, 1, 0.1 + 0.2);
        m.set(0, 2, 1.0 / 3.0);
        m.set(1, 2, 7.25);
        let text = m.to_csv();
        assert!(text.starts_with("id,a#0,a#1,b#0\n"));
        assert_eq!(DistanceMatrix::from_csv(&text).unwrap(), m);
    }

    #[test]
    fn rejects_asymmetric_csv() {
        let text = "id,a,b\na,0,1\nb,2,0\n";
        assert!(DistanceMatrix::from_csv(text).is_err());
    }

    #[test]
    fn select_keeps_order() {
        let mut m = DistanceMatrix::zeros(vec!["a".into(), "b".into(), "c".into()]);
        m.set(0, 2, 5.0);
        let s = m.select(&[2, 0]);
        assert_eq!(s.ids, vec!["c", "a"]);
        assert_eq!(s.get(0, 1), 5.0);
    }
}
