use super::{FeatureError, FeatureMatrix, Result};

/// Fixed-length windowing of a clip's frame matrix. Defaults: 80-frame
/// windows, non-overlapping, 10 frames trimmed from each end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub length: usize,
    pub hop: usize,
    pub head_trim: usize,
    pub tail_trim: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            length: 80,
            hop: 80,
            head_trim: 10,
            tail_trim: 10,
        }
    }
}

/// Number of windows `make_windows` yields for a matrix of `rows` frames.
pub fn window_count(rows: usize, spec: &WindowSpec) -> usize {
    let end = rows.saturating_sub(spec.tail_trim);
    if spec.length == 0 || spec.hop == 0 || end < spec.head_trim + spec.length {
        return 0;
    }
    (end - spec.head_trim - spec.length) / spec.hop + 1
}

/// Cuts contiguous `spec.length`-row windows starting at
/// `head_trim + k * hop`, stopping before the trimmed tail.
pub fn make_windows(fm: &FeatureMatrix, spec: &WindowSpec) -> Result<Vec<FeatureMatrix>> {
    if spec.length == 0 || spec.hop == 0 {
        return Err(FeatureError::InvalidParams(
            "window length and hop must be positive".into(),
        ));
    }
    let count = window_count(fm.rows(), spec);
    if count == 0 {
        return Err(FeatureError::NoWindows {
            clip_id: fm.clip_id().to_string(),
            available: fm.rows().saturating_sub(spec.head_trim + spec.tail_trim),
            length: spec.length,
        });
    }
    Ok((0..count)
        .map(|k| {
            let start = spec.head_trim + k * spec.hop;
            fm.slice_rows(start, start + spec.length)
        })
        .collect())
}

/// Per-dimension min-max scaling fitted on training rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMax {
    pub fn fit_rows<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut iter = rows.into_iter();
        let first = iter.next().ok_or(FeatureError::EmptyTrainingSet)?;
        let mut min = first.to_vec();
        let mut max = first.to_vec();
        for row in iter {
            if row.len() != min.len() {
                return Err(FeatureError::DimensionMismatch {
                    expected: min.len(),
                    found: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(Self { min, max })
    }

    pub fn fit(train: &[FeatureMatrix]) -> Result<Self> {
        Self::fit_rows(train.iter().flat_map(|m| m.iter_rows()))
    }

    pub fn dims(&self) -> usize {
        self.min.len()
    }

    /// `(x - min) / (max - min)`; constant training dimensions map to 0.
    pub fn transform_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.dims() {
            return Err(FeatureError::DimensionMismatch {
                expected: self.dims(),
                found: row.len(),
            });
        }
        Ok(row
            .iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&x, (&lo, &hi))| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 })
            .collect())
    }

    pub fn transform(&self, fm: &FeatureMatrix) -> Result<FeatureMatrix> {
        let rows = fm
            .iter_rows()
            .map(|r| self.transform_row(r))
            .collect::<Result<Vec<_>>>()?;
        FeatureMatrix::from_rows(fm.clip_id(), fm.names().to_vec(), &rows)
    }
}

/// Fits min-max statistics on `train` and applies them to both lists.
pub fn minmax_normalize(
    train: &[FeatureMatrix],
    apply: &[FeatureMatrix],
) -> Result<(Vec<FeatureMatrix>, Vec<FeatureMatrix>, MinMax)> {
    let scaler = MinMax::fit(train)?;
    let t = train
        .iter()
        .map(|m| scaler.transform(m))
        .collect::<Result<Vec<_>>>()?;
    let a = apply
        .iter()
        .map(|m| scaler.transform(m))
        .collect::<Result<Vec<_>>>()?;
    Ok((t, a, scaler))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(rows: usize, cols: usize) -> FeatureMatrix {
        let names = (0..cols).map(|j| format!("d{j}")).collect();
        FeatureMatrix::new("clip", names, (0..rows * cols).map(|v| v as f64).collect()).unwrap()
    }

    fn column(values: &[f64]) -> FeatureMatrix {
        FeatureMatrix::new("c", vec!["x".into()], values.to_vec()).unwrap()
    }

    #[test]
    fn windows_at_expected_offsets() {
        let fm = matrix(200, 3);
        let w = make_windows(&fm, &WindowSpec::default()).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].row(0), fm.row(10));
        assert_eq!(w[0].row(79), fm.row(89));
        assert_eq!(w[1].row(0), fm.row(90));
        assert_eq!(w[1].row(79), fm.row(169));
    }

    #[test]
    fn too_short_after_trim() {
        let err = make_windows(&matrix(99, 2), &WindowSpec::default()).unwrap_err();
        match err {
            FeatureError::NoWindows {
                clip_id,
                available,
                length,
            } => {
                assert_eq!((clip_id.as_str(), available, length), ("clip", 79, 80));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn minmax_conventions() {
        let (t, a, s) = minmax_normalize(&[column(&[2.0, 4.0])], &[column(&[6.0])]).unwrap();
        assert_eq!(t[0].values(), &[0.0, 1.0]);
        assert_eq!(a[0].values(), &[2.0]);
        assert_eq!((s.min[0], s.max[0]), (2.0, 4.0));

        let (t, _, _) = minmax_normalize(&[column(&[5.0, 5.0, 5.0])], &[]).unwrap();
        assert_eq!(t[0].values(), &[0.0, 0.0, 0.0]);
        assert!(matches!(
            minmax_normalize(&[], &[]),
            Err(FeatureError::EmptyTrainingSet)
        ));
        let two = FeatureMatrix::new("w", vec!["a".into(), "b".into()], vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            minmax_normalize(&[column(&[1.0])], &[two]),
            Err(FeatureError::DimensionMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn windows_are_exact_slices(rows in 1usize..400, length in 1usize..90, hop in 1usize..90, head in 0usize..20, tail in 0usize..20) {
            let fm = matrix(rows, 2);
            let spec = WindowSpec { length, hop, head_trim: head, tail_trim: tail };
            let result = make_windows(&fm, &spec);
            match result {
                Ok(ws) => {
                    prop_assert_eq!(ws.len(), window_count(rows, &spec));
                    for (k, w) in ws.iter().enumerate() {
                        let start = head + k * hop;
                        prop_assert!(start + length <= rows - tail);
                        let expected = fm.slice_rows(start, start + length);
                        prop_assert_eq!(w.values(), expected.values());
                    }
                    let next = head + ws.len() * hop;
                    prop_assert!(next + length > rows.saturating_sub(tail));
                }
                Err(_) => prop_assert!(rows < head + tail + length),
            }
        }

        #[test]
        fn minmax_refit_is_identity(vals in proptest::collection::vec(-1e3f64..1e3, 2..50)) {
            let (t, _, _) = minmax_normalize(&[column(&vals)], &[]).unwrap();
            let (t2, _, s2) = minmax_normalize(&t, &[]).unwrap();
            prop_assert!(t[0].values().iter().all(|v| (0.0..=1.0).contains(v)));
            if s2.max[0] > s2.min[0] {
                prop_assert_eq!((s2.min[0], s2.max[0]), (0.0, 1.0));
                for (a, b) in t[0].values().iter().zip(t2[0].values()) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }
}
